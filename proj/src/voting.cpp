#include "siamcheck/voting.hpp"

#include <fstream>
#include <numeric>

#include "siamcheck/error.hpp"

namespace siamcheck {

using nlohmann::json;

ReferencePanel select_reference_panel(const std::vector<LabeledImage>& train, std::size_t k, std::uint64_t seed) {
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < train.size(); ++i)
        if (train[i].label == ImageClass::Correct) pool.push_back(i);
    if (k == 0) throw Error(ErrorKind::Config, "panel size K must be at least 1");
    if (k > pool.size())
        throw Error(ErrorKind::Config, "K = " + std::to_string(k) + " exceeds the " + std::to_string(pool.size()) +
                                           " correct training images available for the panel");
    Rng rng = make_rng({seed, 0x9A7E1});
    shuffle(pool.begin(), pool.end(), rng);
    ReferencePanel panel;
    panel.seed = seed;
    for (std::size_t i = 0; i < k; ++i) panel.ids.push_back(train[pool[i]].id);
    return panel;
}

std::vector<LabeledImage> resolve_panel(const ReferencePanel& panel, const std::vector<LabeledImage>& images) {
    std::vector<LabeledImage> out;
    for (const auto& id : panel.ids) {
        auto it = std::find_if(images.begin(), images.end(), [&](const LabeledImage& img) { return img.id == id; });
        if (it == images.end()) throw Error(ErrorKind::Load, "panel reference '" + id + "' not found in dataset");
        if (it->label != ImageClass::Correct)
            throw Error(ErrorKind::Load, "panel reference '" + id + "' is not a correct installation");
        out.push_back(*it);
    }
    return out;
}

void write_panel_manifest(const std::filesystem::path& path, const ReferencePanel& panel) {
    const json j = {{"k", panel.k()}, {"seed", panel.seed}, {"references", panel.ids}};
    std::ofstream os(path);
    if (!os) throw Error(ErrorKind::Io, "cannot write '" + path.string() + "'");
    os << j.dump(2) << "\n";
}

ReferencePanel read_panel_manifest(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "'");
    try {
        const json j = json::parse(is);
        ReferencePanel panel;
        panel.seed = j.at("seed").get<std::uint64_t>();
        panel.ids = j.at("references").get<std::vector<std::string>>();
        if (j.at("k").get<std::size_t>() != panel.ids.size())
            throw Error(ErrorKind::Format, path.string() + ": k does not match the reference list");
        return panel;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Format, path.string() + ": " + e.what());
    }
}

VoteResult tally_votes(std::vector<float> scores, double threshold) {
    if (scores.empty()) throw Error(ErrorKind::Contract, "cannot vote with an empty panel");
    VoteResult r;
    r.scores = std::move(scores);
    for (float s : r.scores) {
        const bool same = similarity_says_same(s, threshold);
        r.same.push_back(same);
        r.same_count += same;
    }
    r.verdict = majority_says_correct(r.same_count, r.scores.size()) ? ImageClass::Correct : ImageClass::Incorrect;
    return r;
}

VoteResult similarity_vote(ModelGraph& graph, const std::vector<LabeledImage>& panel, const LabeledImage& test,
                           double threshold) {
    if (panel.empty()) throw Error(ErrorKind::Contract, "cannot vote with an empty panel");
    const Tensor refs = tower_features(graph, panel);
    const Tensor probe = tower_features(graph, {test});
    return tally_votes(similarity_to(graph, probe, refs), threshold);
}

MetricsReport vote_evaluate(std::size_t k, const std::vector<LabeledImage>& images, const PairScorer& scorer,
                            double threshold) {
    if (images.empty()) throw Error(ErrorKind::EmptyClass, "evaluation split is empty");
    ConfusionCounts counts;
    for (std::size_t t = 0; t < images.size(); ++t) {
        std::vector<float> scores(k);
        for (std::size_t r = 0; r < k; ++r) scores[r] = scorer(r, t);
        const VoteResult v = tally_votes(std::move(scores), threshold);
        counts.add(images[t].label == ImageClass::Incorrect, v.verdict == ImageClass::Incorrect);
    }
    return compute_metrics(counts);
}

MetricsReport vote_evaluate(ModelGraph& graph, const std::vector<LabeledImage>& panel,
                            const std::vector<LabeledImage>& images, double threshold) {
    if (panel.empty()) throw Error(ErrorKind::Contract, "cannot vote with an empty panel");
    if (images.empty()) throw Error(ErrorKind::EmptyClass, "evaluation split is empty");
    const Tensor refs = tower_features(graph, panel);
    const Tensor tests = tower_features(graph, images);
    const std::size_t d = refs.dim(1);
    std::vector<std::vector<float>> per_ref;
    for (std::size_t r = 0; r < panel.size(); ++r) {
        Tensor row({1, d});
        std::copy_n(refs.data().begin() + static_cast<std::ptrdiff_t>(r * d), d, row.data().begin());
        per_ref.push_back(similarity_to(graph, row, tests));
    }
    return vote_evaluate(
        panel.size(), images, [&](std::size_t r, std::size_t t) { return per_ref[r][t]; }, threshold);
}

} // namespace siamcheck
