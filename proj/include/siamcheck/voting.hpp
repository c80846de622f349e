#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "siamcheck/train.hpp"

namespace siamcheck {

/// K distinct correct training images used as references.
struct ReferencePanel {
    std::vector<std::string> ids; ///< source ids, in panel order
    std::uint64_t seed = 0;
    std::size_t k() const { return ids.size(); }
};

/// Draws K correct images uniformly without replacement from `train`.
/// Throws Config if K is zero or exceeds the available correct images.
ReferencePanel select_reference_panel(const std::vector<LabeledImage>& train, std::size_t k, std::uint64_t seed);

/// Looks the panel's ids up in `images`; throws Load for an unknown id.
std::vector<LabeledImage> resolve_panel(const ReferencePanel& panel, const std::vector<LabeledImage>& images);

void write_panel_manifest(const std::filesystem::path& path, const ReferencePanel& panel);
ReferencePanel read_panel_manifest(const std::filesystem::path& path);

struct VoteResult {
    std::vector<float> scores;
    std::vector<bool> same; ///< per-reference decision, score >= threshold
    std::size_t same_count = 0;
    ImageClass verdict = ImageClass::Incorrect;
};

/// Correct iff strictly more than half of the K decisions are "same".
inline bool majority_says_correct(std::size_t same_count, std::size_t k) { return 2 * same_count > k; }

/// Applies the decision and majority rules to per-reference scores.
VoteResult tally_votes(std::vector<float> scores, double threshold);

VoteResult similarity_vote(ModelGraph& graph, const std::vector<LabeledImage>& panel, const LabeledImage& test,
                           double threshold);

/// Score of (reference r, test image t).
using PairScorer = std::function<float(std::size_t reference, std::size_t test)>;

MetricsReport vote_evaluate(std::size_t k, const std::vector<LabeledImage>& images, const PairScorer& scorer,
                            double threshold);

/// Votes every image against the panel, with reference features computed once.
MetricsReport vote_evaluate(ModelGraph& graph, const std::vector<LabeledImage>& panel,
                            const std::vector<LabeledImage>& images, double threshold);

} // namespace siamcheck
