#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "siamcheck/rng.hpp"
#include "siamcheck/tensor.hpp"

namespace siamcheck {

/// HWC float image.
struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> pixels; ///< height * width * 3

    Image() = default;
    Image(std::size_t h, std::size_t w, float fill = 0.0f) : height(h), width(w), pixels(h * w * 3, fill) {}

    float& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
    float at(std::size_t y, std::size_t x, std::size_t c) const { return pixels[(y * width + x) * 3 + c]; }
    bool operator==(const Image&) const = default;
};

enum class ImageClass { Correct, Incorrect };

std::string_view to_string(ImageClass c);
ImageClass parse_image_class(std::string_view text);

struct LabeledImage {
    Image image;
    ImageClass label = ImageClass::Correct;
    std::string subclass; ///< empty when the class has no sub-cases
    std::string split;
    std::string id;       ///< source id, unique within a dataset
};

// ---------------------------------------------------------------------------
// Decoding

/// Decodes a PNG to RGB in [0,1]. Grayscale and palette images are expanded,
/// alpha is dropped. Throws Decode with the path on failure.
Image decode_png(const std::filesystem::path& path);
/// Writes an 8-bit RGB PNG (values clamped to [0,1], rounded).
void encode_png(const std::filesystem::path& path, const Image& image);

/// Bilinear resize with half-pixel centers; same size returns the input.
Image resize_bilinear(const Image& image, std::size_t height, std::size_t width);

/// decode_png followed by a resize to resolution x resolution.
Image decode_and_normalize(const std::filesystem::path& path, std::size_t resolution);

// ---------------------------------------------------------------------------
// Dataset index

enum class Layout { Bracket, OmniglotSubset };

struct ImageRecord {
    std::filesystem::path path;
    ImageClass label = ImageClass::Correct;
    std::string subclass;
    std::string split;
    std::string id;
};

inline const std::vector<std::string> kBracketSplits{"train", "validation", "edge-train", "edge-validation"};

struct DatasetIndex {
    Layout layout = Layout::Bracket;
    std::filesystem::path root;
    std::uint64_t seed = 0;
    std::map<std::string, std::vector<ImageRecord>> splits;
    std::vector<std::filesystem::path> unreadable;

    bool has_split(const std::string& name) const { return splits.count(name) != 0; }
    const std::vector<ImageRecord>& split(const std::string& name) const;
    std::size_t count(const std::string& split, ImageClass label) const;
    std::map<std::string, std::size_t> subclass_counts(const std::string& split) const;
};

/// Bracket layout: <root>/<split>/<class>/[<subclass>/]*.png. train and
/// validation are required; edge-train / edge-validation are optional and
/// borrow the correct images of train / validation when they have none.
/// Files are listed in sorted order. Files that are not readable PNGs are
/// listed in `unreadable` and skipped.
DatasetIndex load_dataset_index(const std::filesystem::path& root, Layout layout, std::uint64_t seed);

/// Omniglot layout: <root>/<alphabet>/<character>/*.png. The first alphabet is
/// labelled correct, the second incorrect; characters are split 70/30 between
/// train and validation per alphabet using `seed`.
DatasetIndex build_omniglot_subset(const std::filesystem::path& root, const std::vector<std::string>& alphabets,
                                   std::uint64_t seed);

/// Decodes every record of a split at the given resolution.
std::vector<LabeledImage> load_split(const DatasetIndex& index, const std::string& split, std::size_t resolution);

// ---------------------------------------------------------------------------
// Raw shards

void write_shard(const std::filesystem::path& path, const std::vector<LabeledImage>& images);
std::vector<LabeledImage> read_shard(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Augmentation

enum class FillMode { Nearest, Constant };

struct AugmentationPolicy {
    double rotation_deg = 40.0;  ///< uniform in [-r, r]
    double translate_frac = 0.1; ///< per axis, fraction of the image size
    double zoom_frac = 0.2;      ///< per axis scale in [1-z, 1+z]
    double shear = 0.2;          ///< shear factor in [-s, s]
    double brightness_lo = 0.7;
    double brightness_hi = 1.3;
    bool hflip = true;
    bool vflip = true;
    bool crop = false; ///< not supported; validate() rejects true
    FillMode fill = FillMode::Nearest;
    float fill_value = 0.0f;

    static AugmentationPolicy identity();
    void validate() const;
};

struct AugmentParams {
    double rotation_deg = 0.0;
    double translate_x = 0.0; ///< fraction of width
    double translate_y = 0.0; ///< fraction of height
    double zoom_x = 1.0;
    double zoom_y = 1.0;
    double shear = 0.0;
    double brightness = 1.0;
    bool hflip = false;
    bool vflip = false;
};

AugmentParams sample_augment_params(const AugmentationPolicy& policy, Rng& rng);
AugmentParams sample_augment_params(const AugmentationPolicy& policy, std::uint64_t global_seed, std::uint64_t epoch,
                                    std::uint64_t index);

/// Rotation, shear, zoom and translation about the image center composed into
/// one map and applied with a single bilinear resample, then flips and
/// brightness (clamped to [0,1]).
Image apply_augment(const Image& image, const AugmentParams& params, FillMode fill = FillMode::Nearest,
                    float fill_value = 0.0f);

LabeledImage augment(const LabeledImage& image, const AugmentationPolicy& policy, std::uint64_t global_seed,
                     std::uint64_t epoch, std::uint64_t index);

// ---------------------------------------------------------------------------
// Batches and pairs

/// Stacks images of equal size into [N,H,W,3].
Tensor stack_images(std::span<const Image* const> images);

struct PairSample {
    std::size_t a = 0; ///< index into the image list
    std::size_t b = 0;
    bool same = false;
};

enum class PairRegime { Random, ReferenceAnchored };
enum class PairBalance { Stratified, Uniform };

std::string_view to_string(PairRegime regime);
PairRegime parse_pair_regime(std::string_view text);

/// Pairs of uniformly drawn images. Stratified balance emits same and
/// different pairs in equal numbers (order shuffled) whenever both classes
/// are present; a single-class list yields only same pairs.
std::vector<PairSample> sample_random_pairs(std::span<const ImageClass> labels, std::size_t n, std::uint64_t seed,
                                            PairBalance balance = PairBalance::Stratified);

/// Image a is always a correct image; b is a correct image for same pairs and
/// an incorrect one otherwise.
std::vector<PairSample> sample_reference_anchored_pairs(std::span<const ImageClass> labels, std::size_t n,
                                                        std::uint64_t seed,
                                                        PairBalance balance = PairBalance::Stratified);

std::vector<PairSample> sample_pairs(PairRegime regime, std::span<const ImageClass> labels, std::size_t n,
                                     std::uint64_t seed);

std::vector<ImageClass> labels_of(const std::vector<LabeledImage>& images);

// ---------------------------------------------------------------------------
// Synthetic data

struct SyntheticSpec {
    std::size_t resolution = 64;
    std::size_t train_per_class = 100;
    std::size_t validation_per_class = 100;
    /// 1: bright (correct) vs dark (incorrect) squares. >1: the incorrect
    /// class is split into this many visually distinct sub-cases.
    std::size_t incorrect_subclasses = 1;
    double noise = 0.05;
    std::uint64_t seed = 0;
};

struct Dataset {
    std::vector<LabeledImage> train;
    std::vector<LabeledImage> validation;
};

Dataset make_synthetic_dataset(const SyntheticSpec& spec);

/// Writes a dataset in the bracket directory layout.
void write_dataset_tree(const std::filesystem::path& root, const Dataset& dataset);

} // namespace siamcheck
