#include "siamcheck/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "siamcheck/adam.hpp"
#include "siamcheck/error.hpp"

namespace siamcheck {

using nlohmann::json;

void TrainConfig::validate() const {
    if (epochs < 1) throw Error(ErrorKind::Config, "epochs must be at least 1");
    if (batch_size < 1) throw Error(ErrorKind::Config, "batch size must be at least 1");
    if (!(threshold > 0.0 && threshold < 1.0)) throw Error(ErrorKind::Config, "threshold must lie in (0,1)");
    if (!(lr >= 0.0f) || !std::isfinite(lr)) throw Error(ErrorKind::Config, "learning rate must be finite and >= 0");
    policy.validate();
}

void ConfusionCounts::add(bool actual_positive, bool predicted_positive) {
    if (actual_positive) ++(predicted_positive ? tp : fn);
    else ++(predicted_positive ? fp : tn);
}

MetricsReport compute_metrics(const ConfusionCounts& c) {
    MetricsReport r;
    r.counts = c;
    const auto ratio = [](std::uint64_t num, std::uint64_t den) {
        return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
    };
    r.accuracy = ratio(c.tp + c.tn, c.total());
    r.precision = ratio(c.tp, c.tp + c.fp);
    r.recall = ratio(c.tp, c.tp + c.fn);
    r.fdr = 1.0 - r.precision;
    r.fnr = 1.0 - r.recall;
    return r;
}

json to_json(const MetricsReport& r) {
    return {{"counts", {{"tp", r.counts.tp}, {"fp", r.counts.fp}, {"tn", r.counts.tn}, {"fn", r.counts.fn}}},
            {"total", r.counts.total()},
            {"accuracy", r.accuracy},
            {"precision", r.precision},
            {"recall", r.recall},
            {"fdr", r.fdr},
            {"fnr", r.fnr}};
}

void write_metrics(const std::filesystem::path& path, const MetricsReport& report, const json& extra) {
    json j = to_json(report);
    for (const auto& [k, v] : extra.items()) j[k] = v;
    std::ofstream os(path);
    if (!os) throw Error(ErrorKind::Io, "cannot write '" + path.string() + "'");
    os << j.dump(2) << "\n";
}

namespace {

using Clock = std::chrono::steady_clock;

const Image& view(const LabeledImage& img, const TrainConfig& config, std::size_t epoch, std::size_t index,
                  std::vector<Image>& scratch) {
    if (!config.augment) return img.image;
    scratch.push_back(
        apply_augment(img.image, sample_augment_params(config.policy, config.seed, epoch, index), config.policy.fill,
                      config.policy.fill_value));
    return scratch.back();
}

void require_both_classes(const std::vector<LabeledImage>& images, const char* what) {
    bool correct = false, incorrect = false;
    for (const auto& img : images) (img.label == ImageClass::Correct ? correct : incorrect) = true;
    if (!correct || !incorrect)
        throw Error(ErrorKind::EmptyClass, std::string(what) + " split needs both correct and incorrect images");
}

void check_loss(float loss, std::size_t epoch, std::size_t batch) {
    if (!std::isfinite(loss))
        throw Error(ErrorKind::Numerical, "non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                              std::to_string(batch) + "; training aborted");
}

template <typename Step>
void run_step(std::size_t epoch, std::size_t batch, Step&& step) {
    try {
        step();
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::Numerical) throw;
        throw Error(ErrorKind::Numerical, "epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) +
                                              ": " + e.message() + "; training aborted");
    }
}

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

} // namespace

std::vector<float> classifier_scores(ModelGraph& graph, const std::vector<LabeledImage>& images,
                                     std::size_t batch_size) {
    std::vector<float> out;
    out.reserve(images.size());
    for (std::size_t i = 0; i < images.size(); i += batch_size) {
        std::vector<const Image*> batch;
        for (std::size_t j = i; j < std::min(images.size(), i + batch_size); ++j) batch.push_back(&images[j].image);
        const auto scores = predict_classifier(graph, stack_images(batch));
        out.insert(out.end(), scores.begin(), scores.end());
    }
    return out;
}

Tensor tower_features(ModelGraph& graph, const std::vector<LabeledImage>& images, std::size_t batch_size) {
    if (images.empty()) throw Error(ErrorKind::Contract, "no images to featurize");
    const std::size_t d = graph.feature_width();
    Tensor out({images.size(), d});
    for (std::size_t i = 0; i < images.size(); i += batch_size) {
        std::vector<const Image*> batch;
        for (std::size_t j = i; j < std::min(images.size(), i + batch_size); ++j) batch.push_back(&images[j].image);
        const Tensor f = predict_features(graph, stack_images(batch));
        std::copy(f.data().begin(), f.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(i * d));
    }
    return out;
}

std::vector<float> similarity_to(ModelGraph& graph, const Tensor& reference_feature, const Tensor& features) {
    const std::size_t n = features.dim(0), d = features.dim(1);
    if (reference_feature.numel() != d) throw Error(ErrorKind::Dimension, "reference feature width differs (axis 1)");
    Tensor refs({n, d});
    for (std::size_t i = 0; i < n; ++i)
        std::copy(reference_feature.data().begin(), reference_feature.data().end(),
                  refs.data().begin() + static_cast<std::ptrdiff_t>(i * d));
    Tape tape(Tape::State::Inactive);
    const Tensor s = forward_head(graph, tape, refs, features);
    return {s.data().begin(), s.data().end()};
}

TrainResult train_classifier(ModelGraph& graph, const Dataset& data, const TrainConfig& config) {
    config.validate();
    if (graph.kind() != ModelKind::Classifier) throw Error(ErrorKind::Contract, "train_classifier needs a classifier");
    require_both_classes(data.train, "training");
    if (data.validation.empty()) throw Error(ErrorKind::EmptyClass, "validation split is empty");

    AdamState adam;
    adam.config.lr = config.lr;
    auto params = graph.trainable_parameters();
    TrainResult result;
    std::vector<std::size_t> order(data.train.size());

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto start = Clock::now();
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng = make_rng({config.seed, epoch, 0x5B0F});
        shuffle(order.begin(), order.end(), shuffle_rng);
        Rng dropout_rng = make_rng({config.seed, epoch, 0xD50});

        double loss_sum = 0.0;
        std::size_t hits = 0, batch_no = 0;
        for (std::size_t i = 0; i < order.size(); i += config.batch_size, ++batch_no) {
            const std::size_t end = std::min(order.size(), i + config.batch_size);
            std::vector<Image> scratch;
            scratch.reserve(end - i);
            std::vector<const Image*> batch;
            std::vector<float> targets;
            for (std::size_t j = i; j < end; ++j) {
                const auto& img = data.train[order[j]];
                batch.push_back(&view(img, config, epoch, order[j], scratch));
                targets.push_back(img.label == ImageClass::Correct ? 1.0f : 0.0f);
            }
            run_step(epoch, batch_no, [&] {
                Tape tape;
                const Tensor x = stack_images(batch);
                const Tensor y({batch.size(), 1}, targets);
                const Tensor scores = forward_classifier(graph, tape, x, Mode::Train, dropout_rng);
                const Tensor loss = bce_loss(tape, scores, y);
                check_loss(loss.item(), epoch, batch_no);
                tape.backward(loss);
                adam_step(params, adam);
                loss_sum += static_cast<double>(loss.item()) * static_cast<double>(batch.size());
                for (std::size_t k = 0; k < batch.size(); ++k)
                    hits += classifier_predicts_incorrect(scores[k], config.threshold) == (targets[k] == 0.0f);
            });
        }
        EpochLog log;
        log.epoch = epoch;
        log.train_loss = loss_sum / static_cast<double>(order.size());
        log.train_acc = static_cast<double>(hits) / static_cast<double>(order.size());
        log.val_acc = evaluate_classifier(graph, data.validation, config.threshold).accuracy;
        log.seconds = config.record_wall_clock ? seconds_since(start) : 0.0;
        result.logs.push_back(log);
    }
    return result;
}

TrainResult train_snn(ModelGraph& graph, const Dataset& data, const TrainConfig& config) {
    config.validate();
    if (graph.kind() != ModelKind::Siamese) throw Error(ErrorKind::Contract, "train_snn needs a Siamese graph");
    if (data.train.empty() || data.validation.empty()) throw Error(ErrorKind::EmptyClass, "empty train or validation split");

    const auto train_labels = labels_of(data.train);
    const auto val_labels = labels_of(data.validation);
    const std::size_t n_pairs = config.pairs_per_epoch ? config.pairs_per_epoch : data.train.size();
    const auto val_pairs = sample_pairs(config.pair_regime, val_labels,
                                        config.validation_pairs ? config.validation_pairs : data.validation.size(),
                                        mix_seed({config.seed, 0x7A1}));

    AdamState adam;
    adam.config.lr = config.lr;
    auto params = graph.trainable_parameters();
    TrainResult result;

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto start = Clock::now();
        const auto pairs = sample_pairs(config.pair_regime, train_labels, n_pairs, mix_seed({config.seed, epoch}));
        Rng dropout_rng = make_rng({config.seed, epoch, 0xD51});

        double loss_sum = 0.0;
        std::size_t hits = 0, batch_no = 0;
        for (std::size_t i = 0; i < pairs.size(); i += config.batch_size, ++batch_no) {
            const std::size_t end = std::min(pairs.size(), i + config.batch_size);
            std::vector<Image> scratch;
            scratch.reserve(2 * (end - i));
            std::vector<const Image*> left, right;
            std::vector<float> targets;
            for (std::size_t j = i; j < end; ++j) {
                left.push_back(&view(data.train[pairs[j].a], config, epoch, 2 * j, scratch));
                right.push_back(&view(data.train[pairs[j].b], config, epoch, 2 * j + 1, scratch));
                targets.push_back(pairs[j].same ? 1.0f : 0.0f);
            }
            run_step(epoch, batch_no, [&] {
                Tape tape;
                const Tensor y({left.size(), 1}, targets);
                const Tensor scores =
                    forward_snn(graph, tape, stack_images(left), stack_images(right), Mode::Train, dropout_rng);
                const Tensor loss = bce_loss(tape, scores, y);
                check_loss(loss.item(), epoch, batch_no);
                tape.backward(loss);
                adam_step(params, adam);
                loss_sum += static_cast<double>(loss.item()) * static_cast<double>(left.size());
                for (std::size_t k = 0; k < left.size(); ++k)
                    hits += similarity_says_same(scores[k], config.threshold) == (targets[k] == 1.0f);
            });
        }

        const Tensor features = tower_features(graph, data.validation);
        const std::size_t d = features.dim(1);
        Tensor fa({val_pairs.size(), d}), fb({val_pairs.size(), d});
        for (std::size_t k = 0; k < val_pairs.size(); ++k) {
            const auto src = features.data();
            std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(val_pairs[k].a * d), d,
                        fa.data().begin() + static_cast<std::ptrdiff_t>(k * d));
            std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(val_pairs[k].b * d), d,
                        fb.data().begin() + static_cast<std::ptrdiff_t>(k * d));
        }
        Tape inactive(Tape::State::Inactive);
        const Tensor val_scores = forward_head(graph, inactive, fa, fb);
        std::size_t val_hits = 0;
        for (std::size_t k = 0; k < val_pairs.size(); ++k)
            val_hits += similarity_says_same(val_scores[k], config.threshold) == val_pairs[k].same;

        EpochLog log;
        log.epoch = epoch;
        log.train_loss = loss_sum / static_cast<double>(pairs.size());
        log.train_acc = static_cast<double>(hits) / static_cast<double>(pairs.size());
        log.val_acc = static_cast<double>(val_hits) / static_cast<double>(val_pairs.size());
        log.seconds = config.record_wall_clock ? seconds_since(start) : 0.0;
        result.logs.push_back(log);
    }
    return result;
}

namespace {

void check_scores(const std::vector<LabeledImage>& images, const std::vector<float>& scores) {
    if (images.empty()) throw Error(ErrorKind::EmptyClass, "evaluation split is empty");
    if (images.size() != scores.size()) throw Error(ErrorKind::Dimension, "one score per image expected");
}

} // namespace

MetricsReport metrics_from_classifier_scores(const std::vector<LabeledImage>& images, const std::vector<float>& scores,
                                             double threshold) {
    check_scores(images, scores);
    ConfusionCounts counts;
    for (std::size_t i = 0; i < images.size(); ++i)
        counts.add(images[i].label == ImageClass::Incorrect, classifier_predicts_incorrect(scores[i], threshold));
    return compute_metrics(counts);
}

MetricsReport metrics_from_similarities(const std::vector<LabeledImage>& images, const std::vector<float>& scores,
                                        double threshold) {
    check_scores(images, scores);
    ConfusionCounts counts;
    for (std::size_t i = 0; i < images.size(); ++i)
        counts.add(images[i].label == ImageClass::Incorrect, !similarity_says_same(scores[i], threshold));
    return compute_metrics(counts);
}

MetricsReport evaluate_classifier(ModelGraph& graph, const std::vector<LabeledImage>& images, double threshold) {
    if (images.empty()) throw Error(ErrorKind::EmptyClass, "evaluation split is empty");
    return metrics_from_classifier_scores(images, classifier_scores(graph, images), threshold);
}

MetricsReport evaluate_snn(ModelGraph& graph, const std::vector<LabeledImage>& images, const LabeledImage& reference,
                           double threshold) {
    if (images.empty()) throw Error(ErrorKind::EmptyClass, "evaluation split is empty");
    if (reference.label != ImageClass::Correct)
        throw Error(ErrorKind::Config, "reference image '" + reference.id + "' is not a correct installation");
    const Tensor ref = tower_features(graph, {reference});
    return metrics_from_similarities(images, similarity_to(graph, ref, tower_features(graph, images)), threshold);
}

double validation_stability(const std::vector<EpochLog>& logs, std::size_t last) {
    if (logs.empty() || last == 0) throw Error(ErrorKind::Contract, "no epochs to measure");
    const std::size_t n = std::min(last, logs.size());
    double mean = 0.0;
    for (std::size_t i = logs.size() - n; i < logs.size(); ++i) mean += logs[i].val_acc;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = logs.size() - n; i < logs.size(); ++i) var += (logs[i].val_acc - mean) * (logs[i].val_acc - mean);
    return std::sqrt(var / static_cast<double>(n));
}

void export_epoch_log(const std::vector<EpochLog>& logs, const std::filesystem::path& path) {
    if (logs.empty()) throw Error(ErrorKind::Contract, "epoch log is empty");
    std::ostringstream os;
    os << "epoch,train_loss,train_acc,val_acc,seconds\n";
    char line[160];
    for (const auto& l : logs) {
        std::snprintf(line, sizeof line, "%zu,%.6g,%.6g,%.6g,%.6g\n", l.epoch, l.train_loss, l.train_acc, l.val_acc,
                      l.seconds);
        os << line;
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write '" + path.string() + "'");
    out << os.str();
    if (!out) throw Error(ErrorKind::Io, "write failed for '" + path.string() + "'");
}

std::vector<EpochLog> read_epoch_log(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line) || line != "epoch,train_loss,train_acc,val_acc,seconds")
        throw Error(ErrorKind::Format, path.string() + ": missing epoch log header");
    std::vector<EpochLog> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        EpochLog l;
        if (std::sscanf(line.c_str(), "%zu,%lf,%lf,%lf,%lf", &l.epoch, &l.train_loss, &l.train_acc, &l.val_acc,
                        &l.seconds) != 5)
            throw Error(ErrorKind::Format, path.string() + ": bad row '" + line + "'");
        out.push_back(l);
    }
    return out;
}

} // namespace siamcheck
