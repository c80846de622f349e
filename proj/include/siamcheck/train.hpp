#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include <json.hpp>

#include "siamcheck/data.hpp"
#include "siamcheck/model.hpp"

namespace siamcheck {

struct TrainConfig {
    std::size_t epochs = 25;
    std::size_t batch_size = 16;
    float lr = 1e-4f;
    double threshold = 0.5;
    PairRegime pair_regime = PairRegime::Random;
    std::uint64_t seed = 0;
    bool augment = true;
    AugmentationPolicy policy;
    /// Training pairs drawn per epoch for Siamese runs; 0 means one per
    /// training image.
    std::size_t pairs_per_epoch = 0;
    /// Validation pairs for the per-epoch Siamese accuracy; 0 means one per
    /// validation image.
    std::size_t validation_pairs = 0;
    /// Store elapsed seconds in the epoch log; off keeps logs reproducible.
    bool record_wall_clock = false;

    void validate() const;
};

struct EpochLog {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_acc = 0.0;
    double seconds = 0.0;

    bool operator==(const EpochLog&) const = default;
};

/// Confusion counts with "incorrect" (or "different") as the positive class.
struct ConfusionCounts {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t tn = 0;
    std::uint64_t fn = 0;

    std::uint64_t total() const { return tp + fp + tn + fn; }
    void add(bool actual_positive, bool predicted_positive);
    bool operator==(const ConfusionCounts&) const = default;
};

struct MetricsReport {
    ConfusionCounts counts;
    double accuracy = 0.0;  ///< (TP + TN) / total
    double precision = 0.0; ///< TP / (TP + FP), 0 when nothing is flagged
    double recall = 0.0;    ///< TP / (TP + FN), 0 when there are no positives
    double fdr = 0.0;       ///< 1 - precision
    double fnr = 0.0;       ///< 1 - recall

    bool operator==(const MetricsReport&) const = default;
};

MetricsReport compute_metrics(const ConfusionCounts& counts);
nlohmann::json to_json(const MetricsReport& report);
void write_metrics(const std::filesystem::path& path, const MetricsReport& report,
                   const nlohmann::json& extra = nlohmann::json::object());

/// Classifier rule: correct iff score > threshold (a tie is incorrect).
inline bool classifier_predicts_incorrect(float score, double threshold) { return !(score > threshold); }
/// Similarity rule: same iff score >= threshold.
inline bool similarity_says_same(float score, double threshold) { return score >= threshold; }

struct TrainResult {
    std::vector<EpochLog> logs;
};

/// Mini-batch training of a classifier: BCE on P(correct), Adam on the
/// trainable parameters, per-epoch shuffles and augmentation seeded by
/// (seed, epoch, index). Validation accuracy is measured in infer mode
/// without augmentation. Throws Numerical if the loss stops being finite.
TrainResult train_classifier(ModelGraph& graph, const Dataset& data, const TrainConfig& config);

/// Pair training of a Siamese graph with the configured pair regime. The
/// per-epoch validation accuracy is pair-verification accuracy on a fixed set
/// of validation pairs drawn with the same regime.
TrainResult train_snn(ModelGraph& graph, const Dataset& data, const TrainConfig& config);

std::vector<float> classifier_scores(ModelGraph& graph, const std::vector<LabeledImage>& images,
                                     std::size_t batch_size = 32);
Tensor tower_features(ModelGraph& graph, const std::vector<LabeledImage>& images, std::size_t batch_size = 32);
/// Similarity of each row of `features` against one reference feature row.
std::vector<float> similarity_to(ModelGraph& graph, const Tensor& reference_feature, const Tensor& features);

/// Confusion over given scores: classifier scores (P(correct)) or
/// similarities to a correct reference.
MetricsReport metrics_from_classifier_scores(const std::vector<LabeledImage>& images, const std::vector<float>& scores,
                                             double threshold);
MetricsReport metrics_from_similarities(const std::vector<LabeledImage>& images, const std::vector<float>& scores,
                                        double threshold);

MetricsReport evaluate_classifier(ModelGraph& graph, const std::vector<LabeledImage>& images, double threshold);

/// Pairs every image with `reference` (a correct image); similarity below the
/// threshold flags the image as incorrect.
MetricsReport evaluate_snn(ModelGraph& graph, const std::vector<LabeledImage>& images, const LabeledImage& reference,
                           double threshold);

/// Population standard deviation of val_acc over the last `last` epochs.
double validation_stability(const std::vector<EpochLog>& logs, std::size_t last = 5);

void export_epoch_log(const std::vector<EpochLog>& logs, const std::filesystem::path& path);
std::vector<EpochLog> read_epoch_log(const std::filesystem::path& path);

} // namespace siamcheck
