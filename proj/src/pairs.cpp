#include "siamcheck/data.hpp"
#include "siamcheck/error.hpp"

namespace siamcheck {

std::string_view to_string(PairRegime regime) {
    return regime == PairRegime::Random ? "random" : "reference-anchored";
}

PairRegime parse_pair_regime(std::string_view text) {
    if (text == "random") return PairRegime::Random;
    if (text == "reference-anchored") return PairRegime::ReferenceAnchored;
    throw Error(ErrorKind::Config, "unknown pair regime '" + std::string(text) + "'");
}

std::vector<ImageClass> labels_of(const std::vector<LabeledImage>& images) {
    std::vector<ImageClass> out;
    out.reserve(images.size());
    for (const auto& img : images) out.push_back(img.label);
    return out;
}

namespace {

struct ClassLists {
    std::vector<std::size_t> correct;
    std::vector<std::size_t> incorrect;

    explicit ClassLists(std::span<const ImageClass> labels) {
        for (std::size_t i = 0; i < labels.size(); ++i)
            (labels[i] == ImageClass::Correct ? correct : incorrect).push_back(i);
    }
    const std::vector<std::size_t>& of(ImageClass c) const { return c == ImageClass::Correct ? correct : incorrect; }
    const std::vector<std::size_t>& other(ImageClass c) const { return c == ImageClass::Correct ? incorrect : correct; }
};

std::size_t pick(const std::vector<std::size_t>& pool, Rng& rng) { return pool[uniform_index(rng, pool.size())]; }

// A partner from `pool` that differs from `avoid` whenever the pool allows it.
std::size_t pick_other(const std::vector<std::size_t>& pool, std::size_t avoid, Rng& rng) {
    if (pool.size() < 2) return pool[0];
    std::size_t j = uniform_index(rng, pool.size() - 1);
    if (pool[j] == avoid) j = pool.size() - 1;
    return pool[j];
}

std::vector<bool> same_flags(std::size_t n, Rng& rng) {
    std::vector<bool> flags(n, false);
    for (std::size_t i = 0; i < n / 2; ++i) flags[i] = true;
    if (n % 2 == 1) flags[n - 1] = bernoulli(rng, 0.5);
    shuffle(flags.begin(), flags.end(), rng);
    return flags;
}

} // namespace

std::vector<PairSample> sample_random_pairs(std::span<const ImageClass> labels, std::size_t n, std::uint64_t seed,
                                            PairBalance balance) {
    if (labels.empty()) throw Error(ErrorKind::EmptyClass, "cannot sample pairs from an empty image list");
    const ClassLists lists(labels);
    const bool both = !lists.correct.empty() && !lists.incorrect.empty();
    Rng rng = make_rng({seed, 0x9A125});
    std::vector<PairSample> out;
    out.reserve(n);
    if (!both || balance == PairBalance::Uniform) {
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t a = uniform_index(rng, labels.size());
            const std::size_t b = uniform_index(rng, labels.size());
            out.push_back({a, b, labels[a] == labels[b]});
        }
        return out;
    }
    const auto flags = same_flags(n, rng);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t a = uniform_index(rng, labels.size());
        const std::size_t b = flags[i] ? pick_other(lists.of(labels[a]), a, rng) : pick(lists.other(labels[a]), rng);
        out.push_back({a, b, labels[a] == labels[b]});
    }
    return out;
}

std::vector<PairSample> sample_reference_anchored_pairs(std::span<const ImageClass> labels, std::size_t n,
                                                        std::uint64_t seed, PairBalance balance) {
    const ClassLists lists(labels);
    if (lists.correct.empty()) throw Error(ErrorKind::EmptyClass, "anchored pairs need at least one correct image");
    Rng rng = make_rng({seed, 0xA4C40});
    std::vector<PairSample> out;
    out.reserve(n);
    const bool both = !lists.incorrect.empty();
    const auto flags = same_flags(n, rng);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t a = pick(lists.correct, rng);
        std::size_t b;
        if (!both) b = pick_other(lists.correct, a, rng);
        else if (balance == PairBalance::Uniform) b = uniform_index(rng, labels.size());
        else b = flags[i] ? pick_other(lists.correct, a, rng) : pick(lists.incorrect, rng);
        out.push_back({a, b, labels[b] == ImageClass::Correct});
    }
    return out;
}

std::vector<PairSample> sample_pairs(PairRegime regime, std::span<const ImageClass> labels, std::size_t n,
                                     std::uint64_t seed) {
    return regime == PairRegime::Random ? sample_random_pairs(labels, n, seed)
                                        : sample_reference_anchored_pairs(labels, n, seed);
}

} // namespace siamcheck
