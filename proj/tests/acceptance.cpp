// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers as
// arguments to run a subset.

#include <algorithm>
#include <cstdarg>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include <unistd.h>

#include "gradcheck_cases.hpp"
#include "oracles.hpp"
#include "siamcheck/container.hpp"
#include "siamcheck/error.hpp"
#include "siamcheck/voting.hpp"
#include "siamcheck/weights.hpp"

using namespace siamcheck;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* format, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* format, ...) {
    char buf[512];
    va_list args;
    va_start(args, format);
    std::vsnprintf(buf, sizeof buf, format, args);
    va_end(args);
    return buf;
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("siamcheck_acceptance_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    return dir / name;
}

template <typename F>
ErrorKind error_kind(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    return static_cast<ErrorKind>(-1);
}

std::vector<float> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

Tensor batch_of(const std::vector<LabeledImage>& images, std::size_t from, std::size_t n) {
    std::vector<const Image*> ptrs;
    for (std::size_t i = from; i < from + n; ++i) ptrs.push_back(&images[i].image);
    return stack_images(ptrs);
}

Dataset synthetic(std::size_t train, std::size_t val, std::size_t subclasses, std::uint64_t seed) {
    SyntheticSpec s;
    s.train_per_class = train;
    s.validation_per_class = val;
    s.incorrect_subclasses = subclasses;
    s.seed = seed;
    return make_synthetic_dataset(s);
}

ModelConfig desk(std::uint64_t init_seed) {
    ModelConfig c = ModelConfig::desk();
    c.init_seed = init_seed;
    return c;
}

// ---------------------------------------------------------------------------

Outcome gradient_suite() {
    constexpr int kTrials = 20;
    double worst = 0.0;
    std::string worst_op;
    for (const auto& c : gradcheck::cases()) {
        std::mt19937 gen(c.seed);
        for (int t = 0; t < kTrials; ++t) {
            const double e = c.trial(gen, t);
            if (!(e <= worst)) {
                worst = e;
                worst_op = c.name;
            }
        }
    }
    return {worst < 1e-3, fmt("%zu ops x %d trials, worst relative error %.2e (%s)", gradcheck::cases().size(), kTrials,
                              worst, worst_op.c_str())};
}

Outcome conv_oracle() {
    std::mt19937 gen(2024);
    std::uniform_int_distribution<std::size_t> sz(3, 8), ch(1, 3), kk(1, 3), ff(1, 4), st(1, 2);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t h = sz(gen), w = sz(gen), c = ch(gen), kh = kk(gen), kw = kk(gen), f = ff(gen),
                          stride = st(gen);
        const bool same = trial % 2 == 0;
        Tensor x = oracle::random_tensor({2, h, w, c}, gen);
        Tensor k = oracle::random_tensor({kh, kw, c, f}, gen);
        Tensor b = oracle::random_tensor({f}, gen);
        Tape tape(Tape::State::Inactive);
        Tensor y = conv2d(tape, x, k, b, stride, same ? Padding::Same : Padding::Valid);
        std::size_t oh = 0, ow = 0;
        const auto ref =
            oracle::naive_conv2d(values(x), 2, h, w, c, values(k), kh, kw, f, values(b), stride, same, oh, ow);
        if (y.shape() != Shape{2, oh, ow, f}) return {false, fmt("trial %d: shape mismatch", trial)};
        for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::fabs(double(y[i]) - ref[i]));
    }
    return {worst <= 1e-6, fmt("200 cases up to 8x8x3 / 3x3x3x4, worst abs diff %.2e", worst)};
}

Outcome metrics_oracle() {
    std::mt19937 gen(31);
    std::size_t mismatches = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + gen() % 80;
        std::vector<bool> actual(n), predicted(n);
        std::vector<LabeledImage> images(n);
        std::vector<float> scores(n);
        for (std::size_t i = 0; i < n; ++i) {
            actual[i] = gen() % 2;
            images[i].label = actual[i] ? ImageClass::Incorrect : ImageClass::Correct;
            scores[i] = static_cast<float>(gen() % 1001) / 1000.0f;
            predicted[i] = !(scores[i] > 0.5f);
        }
        const auto c = oracle::count(actual, predicted);
        const MetricsReport r = metrics_from_classifier_scores(images, scores, 0.5);
        const double acc = double(c.tp + c.tn) / double(n);
        const double prec = c.tp + c.fp ? double(c.tp) / double(c.tp + c.fp) : 0.0;
        const double rec = c.tp + c.fn ? double(c.tp) / double(c.tp + c.fn) : 0.0;
        const bool ok = r.counts.tp == std::uint64_t(c.tp) && r.counts.fp == std::uint64_t(c.fp) &&
                        r.counts.tn == std::uint64_t(c.tn) && r.counts.fn == std::uint64_t(c.fn) &&
                        r.accuracy == acc && r.precision == prec && r.recall == rec && r.fdr == 1.0 - r.precision &&
                        r.fnr == 1.0 - r.recall;
        mismatches += !ok;
    }

    const Dataset d = synthetic(1, 100, 1, 5);
    ModelGraph g = build_baseline_cnn({64, 64, 3}, desk(1));
    g.parameter("output_dense/bias").data()[0] = -40.0f;
    const MetricsReport anchor = evaluate_classifier(g, d.validation, 0.5);
    const bool anchor_ok = anchor.precision == 0.5 && anchor.recall == 1.0 && anchor.accuracy == 0.5;
    return {mismatches == 0 && anchor_ok,
            fmt("1000 configurations, %zu mismatches; all-incorrect on 100/100: precision %.2f recall %.2f accuracy %.2f",
                mismatches, anchor.precision, anchor.recall, anchor.accuracy)};
}

Outcome voting_truth_table() {
    std::size_t patterns = 0, wrong = 0;
    for (std::size_t k = 1; k <= 5; ++k)
        for (std::uint32_t p = 0; p < (1u << k); ++p) {
            std::vector<bool> same(k);
            std::vector<float> scores(k);
            for (std::size_t i = 0; i < k; ++i) {
                same[i] = (p >> i) & 1u;
                scores[i] = same[i] ? 0.8f : 0.2f;
            }
            wrong += (tally_votes(scores, 0.5).verdict == ImageClass::Correct) != oracle::majority_same(same);
            ++patterns;
        }

    const Dataset d = synthetic(10, 25, 1, 9);
    ModelGraph g = build_snn({64, 64, 3}, desk(3));
    const auto panel = resolve_panel(select_reference_panel(d.train, 1, 7), d.train);
    const Tensor rf = tower_features(g, panel);
    const Tensor f = tower_features(g, d.validation);
    std::vector<double> dist;
    for (std::size_t i = 0; i < d.validation.size(); ++i) {
        double s = 0;
        for (std::size_t j = 0; j < f.dim(1); ++j) s += std::fabs(f[i * f.dim(1) + j] - rf[j]);
        dist.push_back(s);
    }
    std::nth_element(dist.begin(), dist.begin() + dist.size() / 2, dist.end());
    g.parameter("l1_head/bias").data()[0] = static_cast<float>(dist[dist.size() / 2]);
    const MetricsReport single = evaluate_snn(g, d.validation, panel[0], 0.5);
    const MetricsReport voted = vote_evaluate(g, panel, d.validation, 0.5);
    bool per_image = true;
    for (const auto& img : d.validation) {
        const float s = predict_similarity(g, batch_of(panel, 0, 1), batch_of({img}, 0, 1))[0];
        const bool single_correct = similarity_says_same(s, 0.5);
        per_image &= (similarity_vote(g, panel, img, 0.5).verdict == ImageClass::Correct) == single_correct;
    }
    const bool ok = wrong == 0 && single == voted && per_image;
    return {ok, fmt("%zu patterns, %zu wrong; K=1 on %zu images %s single-reference (flagged %llu)", patterns, wrong,
                    d.validation.size(), single == voted && per_image ? "identical to" : "differs from",
                    static_cast<unsigned long long>(single.counts.tp + single.counts.fp))};
}

Outcome siamese_invariants() {
    const Dataset d = synthetic(12, 4, 1, 11);
    std::string failures;
    for (const bool trained : {false, true}) {
        ModelGraph g = build_snn({64, 64, 3}, desk(5));
        if (trained) {
            TrainConfig c;
            c.epochs = 2;
            c.lr = 1e-3f;
            c.seed = 2;
            train_snn(g, d, c);
        }
        const Tensor a = batch_of(d.validation, 0, 4), b = batch_of(d.validation, 4, 4);
        const auto ab = predict_similarity(g, a, b), ba = predict_similarity(g, b, a);
        const bool swap_ok = std::memcmp(ab.data(), ba.data(), ab.size() * sizeof(float)) == 0;

        const Tensor twin = predict_features(g, batch_of({d.validation[0], d.validation[0]}, 0, 2));
        const std::size_t w = twin.dim(1);
        bool twin_ok = std::memcmp(twin.data().data(), twin.data().data() + w, w * sizeof(float)) == 0;
        const auto l = g.tower_parameters(0), r = g.tower_parameters(1);
        for (std::size_t i = 0; i < l.size(); ++i) twin_ok &= l[i].same_storage(r[i]);

        const double bias = g.parameter("l1_head/bias")[0];
        const float expected = static_cast<float>(1.0 / (1.0 + std::exp(-bias)));
        bool self_ok = true;
        for (float s : predict_similarity(g, a, a)) self_ok &= std::fabs(s - expected) <= 1e-7f;

        const char* tag = trained ? "trained" : "untrained";
        if (!swap_ok) failures += fmt(" %s:swap", tag);
        if (!twin_ok) failures += fmt(" %s:twin", tag);
        if (!self_ok) failures += fmt(" %s:self", tag);
    }
    return {failures.empty(), failures.empty() ? "swap symmetry, twin features and sigma(b) self-score hold before "
                                                 "and after training"
                                               : "failed:" + failures};
}

Outcome augmentation_suite() {
    const Dataset d = synthetic(2, 1, 1, 13);
    const LabeledImage& img = d.train[0];
    const LabeledImage same = augment(img, AugmentationPolicy::identity(), 4, 1, 2);
    const bool identity_ok = same.image == img.image;

    const AugmentationPolicy p;
    std::size_t out_of_range = 0;
    for (std::uint64_t i = 0; i < 10000; ++i) {
        const AugmentParams a = sample_augment_params(p, 99, i / 100, i % 100);
        out_of_range += std::fabs(a.rotation_deg) > 40.0 || std::fabs(a.translate_x) > 0.1 ||
                        std::fabs(a.translate_y) > 0.1 || a.zoom_x < 0.8 || a.zoom_x > 1.2 || a.zoom_y < 0.8 ||
                        a.zoom_y > 1.2 || std::fabs(a.shear) > 0.2 || a.brightness < 0.7 || a.brightness > 1.3;
    }

    bool deterministic = true, shape_kept = true;
    for (std::uint64_t i = 0; i < 20; ++i) {
        const LabeledImage x = augment(img, p, 5, 3, i), y = augment(img, p, 5, 3, i);
        deterministic &= std::memcmp(x.image.pixels.data(), y.image.pixels.data(), x.image.pixels.size() * 4) == 0;
        shape_kept &= x.image.height == img.image.height && x.image.width == img.image.width;
    }
    AugmentationPolicy crop;
    crop.crop = true;
    const bool crop_rejected = error_kind([&] { augment(img, crop, 1, 0, 0); }) == ErrorKind::Config;
    const bool ok = identity_ok && out_of_range == 0 && deterministic && shape_kept && crop_rejected;
    return {ok, fmt("identity %s; %zu of 10000 samples out of range; determinism %s; crop %s", identity_ok ? "exact" : "differs",
                    out_of_range, deterministic ? "bit-exact" : "broken",
                    crop_rejected && shape_kept ? "never applied" : "possible")};
}

double best_val(const TrainResult& r, std::size_t upto) {
    double best = 0.0;
    for (const auto& l : r.logs)
        if (l.epoch <= upto) best = std::max(best, l.val_acc);
    return best;
}

std::size_t first_epoch_at(const TrainResult& r, double target) {
    for (const auto& l : r.logs)
        if (l.val_acc >= target) return l.epoch;
    return 0;
}

Outcome desk_learning() {
    const auto t0 = std::chrono::steady_clock::now();
    const Dataset d = synthetic(100, 100, 1, 17);
    TrainConfig c;
    c.seed = 1;

    ModelGraph cnn = build_baseline_cnn({64, 64, 3}, desk(1));
    c.epochs = 10;
    const TrainResult rc = train_classifier(cnn, d, c);

    ModelGraph snn = build_snn({64, 64, 3}, desk(1));
    c.epochs = 15;
    c.pair_regime = PairRegime::ReferenceAnchored;
    const TrainResult rs = train_snn(snn, d, c);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const double cnn_best = best_val(rc, 10), snn_best = best_val(rs, 15);
    const bool ok = cnn_best >= 0.95 && snn_best >= 0.90 && secs < 600;
    return {ok, fmt("CNN best val %.3f (>=0.95 at epoch %zu), SNN anchored best val %.3f (>=0.90 at epoch %zu), %.0fs",
                    cnn_best, first_epoch_at(rc, 0.95), snn_best, first_epoch_at(rs, 0.90), secs)};
}

struct StabilityRun {
    ModelGraph graph;
    Dataset data;
    double stability = 0.0;
    double final_val = 0.0;
};

constexpr std::uint64_t kStabilitySeeds[] = {1, 2, 3};

StabilityRun stability_run(PairRegime regime, std::uint64_t seed) {
    StabilityRun run;
    run.data = synthetic(100, 100, 5, seed);
    run.graph = build_snn({64, 64, 3}, desk(seed));
    TrainConfig c;
    c.seed = seed;
    c.pair_regime = regime;
    const TrainResult r = train_snn(run.graph, run.data, c);
    run.stability = validation_stability(r.logs);
    run.final_val = r.logs.back().val_acc;
    return run;
}

std::vector<StabilityRun> anchored_runs;

Outcome stability_contrast() {
    const auto t0 = std::chrono::steady_clock::now();
    std::size_t wins = 0;
    std::string detail;
    anchored_runs.clear();
    for (const std::uint64_t seed : kStabilitySeeds) {
        const StabilityRun random = stability_run(PairRegime::Random, seed);
        StabilityRun anchored = stability_run(PairRegime::ReferenceAnchored, seed);
        wins += anchored.stability < random.stability;
        detail += fmt(" seed %llu: anchored %.4f vs random %.4f (final val %.2f / %.2f);",
                      static_cast<unsigned long long>(seed), anchored.stability, random.stability, anchored.final_val,
                      random.final_val);
        anchored_runs.push_back(std::move(anchored));
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {wins >= 2 && secs < 900, fmt("last-5 val std lower for anchored in %zu/3 seeds;", wins) + detail +
                                         fmt(" %.0fs", secs)};
}

Outcome voting_benefit() {
    if (anchored_runs.size() != std::size(kStabilitySeeds))
        for (const std::uint64_t seed : kStabilitySeeds)
            anchored_runs.push_back(stability_run(PairRegime::ReferenceAnchored, seed));
    std::vector<double> single, voted;
    for (std::size_t i = 0; i < anchored_runs.size(); ++i) {
        auto& run = anchored_runs[i];
        const std::uint64_t seed = kStabilitySeeds[i];
        const auto one = resolve_panel(select_reference_panel(run.data.train, 1, seed), run.data.train);
        const auto five = resolve_panel(select_reference_panel(run.data.train, 5, seed), run.data.train);
        single.push_back(vote_evaluate(run.graph, one, run.data.validation, 0.5).recall);
        voted.push_back(vote_evaluate(run.graph, five, run.data.validation, 0.5).recall);
    }
    auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return v[v.size() / 2];
    };
    const double ms = median(single), mv = median(voted);
    return {mv >= ms, fmt("median recall K=5 %.3f vs single reference %.3f (per seed %.3f/%.3f, %.3f/%.3f, %.3f/%.3f)", mv,
                          ms, voted[0], single[0], voted[1], single[1], voted[2], single[2])};
}

Outcome transfer_contract() {
    const Dataset d = synthetic(16, 4, 1, 19);
    std::string detail;
    bool ok = true;
    for (const ModelKind kind : {ModelKind::Classifier, ModelKind::Siamese}) {
        ModelGraph source = build_model(kind, {64, 64, 3}, desk(21));
        const fs::path path = scratch(kind == ModelKind::Classifier ? "source_cnn.sck" : "source_snn.sck");
        save_weights(source, path);

        ModelGraph g = build_model(kind, {64, 64, 3}, desk(22));
        apply_transfer(g, load_weights(path), FreezePolicy::AllButLastBlock);
        std::map<std::string, std::vector<float>> before;
        for (const auto& p : g.parameters()) before[p.key] = values(p.value);

        TrainConfig c;
        c.epochs = 2;
        c.lr = 1e-3f;
        c.seed = 4;
        kind == ModelKind::Classifier ? train_classifier(g, d, c) : train_snn(g, d, c);

        const int last = static_cast<int>(g.block_count());
        std::size_t frozen_changed = 0, frozen = 0, trainable_changed = 0;
        for (const auto& l : g.layers())
            for (const auto& p : g.parameters()) {
                if (p.layer_id != l.id) continue;
                const bool changed = before[p.key] != values(p.value);
                if (l.block > 0 && l.block < last) {
                    ++frozen;
                    frozen_changed += changed;
                } else {
                    trainable_changed += changed;
                }
            }
        ok &= frozen_changed == 0 && trainable_changed > 0 && frozen > 0;
        detail += fmt("%s: %zu frozen tensors unchanged of %zu, %zu last-block/head tensors changed; ",
                      kind == ModelKind::Classifier ? "classifier" : "siamese", frozen - frozen_changed, frozen,
                      trainable_changed);
    }
    return {ok, detail};
}

Outcome serialization() {
    const Dataset d = synthetic(3, 2, 2, 23);
    ModelGraph g = build_snn({64, 64, 3}, desk(7));
    TrainConfig c;
    c.epochs = 1;
    c.seed = 3;
    train_snn(g, d, c);

    const fs::path wpath = scratch("weights.sck"), wpath2 = scratch("weights_again.sck");
    save_weights(g, wpath);
    ModelGraph h = model_from_weights(wpath);
    save_weights(h, wpath2);
    auto bytes_of = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::vector<char>(std::istreambuf_iterator<char>(in), {});
    };
    bool weights_ok = bytes_of(wpath) == bytes_of(wpath2);
    for (const auto& p : g.parameters()) weights_ok &= values(p.value) == values(h.parameter(p.key));

    const fs::path spath = scratch("train.shard");
    write_shard(spath, d.train);
    const auto back = read_shard(spath);
    bool shard_ok = back.size() == d.train.size();
    for (std::size_t i = 0; shard_ok && i < back.size(); ++i)
        shard_ok = back[i].image == d.train[i].image && back[i].label == d.train[i].label &&
                   back[i].subclass == d.train[i].subclass && back[i].id == d.train[i].id;

    auto corrupt = [&](const fs::path& src, bool truncate) {
        auto bytes = bytes_of(src);
        if (truncate) bytes.resize(bytes.size() - 9);
        else bytes[bytes.size() - 5] ^= 0x20;
        const fs::path bad = scratch("bad.bin");
        std::ofstream(bad, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        return bad;
    };
    const bool rejected = error_kind([&] { load_weights(corrupt(wpath, false)); }) == ErrorKind::Corruption &&
                          error_kind([&] { load_weights(corrupt(wpath, true)); }) == ErrorKind::Corruption &&
                          error_kind([&] { read_shard(corrupt(spath, false)); }) == ErrorKind::Corruption &&
                          error_kind([&] { read_shard(corrupt(spath, true)); }) == ErrorKind::Corruption;
    return {weights_ok && shard_ok && rejected,
            fmt("weights round trip %s, shard round trip %s, flipped/truncated files %s", weights_ok ? "bit-exact" : "differs",
                shard_ok ? "bit-exact" : "differs", rejected ? "rejected as corruption" : "not rejected")};
}

struct Criterion {
    int number;
    const char* title;
    Outcome (*run)();
};

constexpr Criterion kCriteria[] = {
    {1, "gradient suite", gradient_suite},
    {2, "convolution oracle", conv_oracle},
    {3, "metrics oracle", metrics_oracle},
    {4, "voting truth table", voting_truth_table},
    {5, "siamese invariants", siamese_invariants},
    {6, "augmentation suite", augmentation_suite},
    {7, "desk-scale learning", desk_learning},
    {8, "stability contrast", stability_contrast},
    {9, "voting benefit", voting_benefit},
    {10, "transfer and freezing", transfer_contract},
    {11, "serialization", serialization},
};

} // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
    int failed = 0;
    for (const auto& c : kCriteria) {
        if (!only.empty() && !only.count(c.number)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("criterion %2d %s  %s: %s [%.1fs]\n", c.number, o.pass ? "PASS" : "FAIL", c.title, o.detail.c_str(),
                    secs);
        std::fflush(stdout);
        failed += !o.pass;
    }
    fs::remove_all(scratch("").parent_path());
    return failed == 0 ? 0 : 1;
}
