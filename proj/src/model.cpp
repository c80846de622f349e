#include "siamcheck/model.hpp"

#include <cmath>

#include "siamcheck/error.hpp"

namespace siamcheck {

using nlohmann::json;

std::string_view to_string(ModelKind kind) { return kind == ModelKind::Classifier ? "classifier" : "siamese"; }

std::string_view to_string(HeadMode mode) { return mode == HeadMode::ScalarL1 ? "scalar-l1" : "weighted-l1"; }

std::string_view to_string(FreezePolicy policy) {
    return policy == FreezePolicy::None ? "none" : "all-but-last-block";
}

std::string_view to_string(LayerKind kind) {
    switch (kind) {
    case LayerKind::Conv: return "conv";
    case LayerKind::BatchNorm: return "batchnorm";
    case LayerKind::Relu: return "relu";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::Dropout: return "dropout";
    case LayerKind::Dense: return "dense";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::Sigmoid: return "sigmoid";
    case LayerKind::L1Head: return "l1-head";
    }
    return "unknown";
}

HeadMode parse_head_mode(std::string_view text) {
    if (text == "scalar-l1") return HeadMode::ScalarL1;
    if (text == "weighted-l1") return HeadMode::WeightedL1;
    throw Error(ErrorKind::Config, "unknown head mode '" + std::string(text) + "'");
}

FreezePolicy parse_freeze_policy(std::string_view text) {
    if (text == "none") return FreezePolicy::None;
    if (text == "all-but-last-block" || text == "default") return FreezePolicy::AllButLastBlock;
    throw Error(ErrorKind::Config, "unknown freeze policy '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// ModelConfig

ModelConfig ModelConfig::vgg16() { return ModelConfig{}; }

ModelConfig ModelConfig::vgg16_transfer(ModelKind kind) {
    ModelConfig c;
    if (kind == ModelKind::Classifier) {
        c.feature_units = 128;
        c.feature_dropout = 0.5f;
    } else {
        c.feature_units = 1024;
        c.feature_dropout = 0.3f;
    }
    return c;
}

ModelConfig ModelConfig::desk() {
    ModelConfig c;
    c.block_filters = {8, 16, 32};
    c.convs_per_block = {1, 1, 1};
    c.feature_units = 32;
    return c;
}

void ModelConfig::validate() const {
    if (block_filters.empty()) throw Error(ErrorKind::Config, "model needs at least one conv block");
    if (block_filters.size() != convs_per_block.size())
        throw Error(ErrorKind::Config, "block_filters and convs_per_block differ in length");
    for (auto f : block_filters)
        if (f == 0) throw Error(ErrorKind::Config, "conv block with zero filters");
    for (auto n : convs_per_block)
        if (n == 0) throw Error(ErrorKind::Config, "conv block with zero conv layers");
    if (feature_units == 0) throw Error(ErrorKind::Config, "feature layer needs at least one unit");
    for (float r : {conv_dropout, feature_dropout})
        if (!(r >= 0.0f && r < 1.0f)) throw Error(ErrorKind::Config, "dropout rate must be in [0,1)");
}

json ModelConfig::to_json() const {
    return {{"block_filters", block_filters},   {"convs_per_block", convs_per_block},
            {"conv_dropout", conv_dropout},     {"feature_units", feature_units},
            {"feature_dropout", feature_dropout}, {"head", std::string(to_string(head))},
            {"init_seed", init_seed}};
}

ModelConfig ModelConfig::from_json(const json& j) {
    ModelConfig c;
    try {
        c.block_filters = j.at("block_filters").get<std::vector<std::size_t>>();
        c.convs_per_block = j.at("convs_per_block").get<std::vector<std::size_t>>();
        c.conv_dropout = j.at("conv_dropout").get<float>();
        c.feature_units = j.at("feature_units").get<std::size_t>();
        c.feature_dropout = j.at("feature_dropout").get<float>();
        c.head = parse_head_mode(j.at("head").get<std::string>());
        c.init_seed = j.value("init_seed", std::uint64_t{0});
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Config, std::string("model config: ") + e.what());
    }
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// ModelGraph

Tensor& ModelGraph::parameter(const std::string& key) {
    auto it = index_.find(key);
    if (it == index_.end()) throw Error(ErrorKind::Contract, "no parameter '" + key + "'");
    return params_[it->second].value;
}

const Tensor& ModelGraph::parameter(const std::string& key) const {
    auto it = index_.find(key);
    if (it == index_.end()) throw Error(ErrorKind::Contract, "no parameter '" + key + "'");
    return params_[it->second].value;
}

std::vector<Tensor> ModelGraph::trainable_parameters() const {
    std::vector<Tensor> out;
    for (const auto& p : params_)
        if (!p.buffer && layer_trainable(p.layer_id)) out.push_back(p.value);
    return out;
}

std::vector<Tensor> ModelGraph::tower_parameters(int /*side*/) const {
    std::vector<Tensor> out;
    for (std::size_t i = 0; i < tower_end_; ++i)
        for (const auto& p : params_)
            if (p.layer_id == layers_[i].id) out.push_back(p.value);
    return out;
}

std::size_t ModelGraph::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.numel();
    return n;
}

std::size_t ModelGraph::trainable_parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : trainable_parameters()) n += t.numel();
    return n;
}

std::size_t ModelGraph::feature_width() const { return config_.feature_units; }

BatchNormStats& ModelGraph::stats(const std::string& layer_id) {
    auto it = stats_.find(layer_id);
    if (it == stats_.end()) throw Error(ErrorKind::Contract, "no batchnorm layer '" + layer_id + "'");
    return it->second;
}

bool ModelGraph::layer_trainable(const std::string& layer_id) const {
    for (const auto& l : layers_)
        if (l.id == layer_id) return l.trainable;
    throw Error(ErrorKind::Contract, "no layer '" + layer_id + "'");
}

void ModelGraph::set_trainable(const std::string& layer_id, bool trainable) {
    bool found = false;
    for (auto& l : layers_)
        if (l.id == layer_id) {
            l.trainable = trainable;
            found = true;
        }
    if (!found) throw Error(ErrorKind::Contract, "no layer '" + layer_id + "'");
    for (auto& p : params_)
        if (p.layer_id == layer_id && !p.buffer) p.value.set_requires_grad(trainable);
}

void ModelGraph::apply_freeze_policy(FreezePolicy policy) {
    const int last = static_cast<int>(block_count());
    for (auto& l : layers_) {
        const bool frozen = policy == FreezePolicy::AllButLastBlock && l.block > 0 && l.block < last;
        set_trainable(l.id, !frozen);
    }
}

// ---------------------------------------------------------------------------
// Construction

class GraphBuilder {
public:
    GraphBuilder(ModelGraph& g, Rng& rng) : g_(g), rng_(rng) {}

    void conv(const std::string& id, std::size_t filters, std::size_t kernel, int block) {
        const Shape in = current();
        const std::size_t cin = in[2];
        LayerSpec l{id, LayerKind::Conv, filters, kernel, 0.0f, block, true, {in[0], in[1], filters}};
        add_param(l, "kernel", glorot({kernel, kernel, cin, filters}, kernel * kernel * cin, kernel * kernel * filters));
        add_param(l, "bias", Tensor({filters}, 0.0f));
        g_.layers_.push_back(std::move(l));
    }

    void batchnorm(const std::string& id, int block) {
        const Shape in = current();
        const std::size_t c = in.back();
        LayerSpec l{id, LayerKind::BatchNorm, c, 0, 0.0f, block, true, in};
        add_param(l, "gamma", Tensor({c}, 1.0f));
        add_param(l, "beta", Tensor({c}, 0.0f));
        auto stats = BatchNormStats::fresh(c);
        add_param(l, "moving_mean", stats.mean, true);
        add_param(l, "moving_variance", stats.variance, true);
        g_.stats_.emplace(id, stats);
        g_.layers_.push_back(std::move(l));
    }

    void simple(const std::string& id, LayerKind kind, int block, float rate = 0.0f) {
        Shape out = current();
        if (kind == LayerKind::MaxPool) {
            if (out[0] < 2 || out[1] < 2)
                throw Error(ErrorKind::Config, "input too small for " + std::to_string(g_.config_.block_filters.size()) +
                                                   " pooling stages");
            out = {out[0] / 2, out[1] / 2, out[2]};
        } else if (kind == LayerKind::Flatten) {
            out = {shape_numel(out)};
        }
        g_.layers_.push_back(LayerSpec{id, kind, 0, 0, rate, block, true, out});
    }

    void dense(const std::string& id, std::size_t units) {
        const Shape in = current();
        const std::size_t d = in[0];
        LayerSpec l{id, LayerKind::Dense, units, 0, 0.0f, 0, true, {units}};
        add_param(l, "kernel", glorot({d, units}, d, units));
        add_param(l, "bias", Tensor({units}, 0.0f));
        g_.layers_.push_back(std::move(l));
    }

    void l1_head(const std::string& id, HeadMode mode) {
        const std::size_t d = current()[0];
        LayerSpec l{id, LayerKind::L1Head, 1, 0, 0.0f, 0, true, {1}};
        const std::size_t width = mode == HeadMode::ScalarL1 ? 1 : d;
        add_param(l, "weight", Tensor({width, 1}, -1.0f));
        add_param(l, "bias", Tensor({1}, 0.0f));
        g_.layers_.push_back(std::move(l));
    }

    void backbone() {
        const auto& cfg = g_.config_;
        for (std::size_t b = 0; b < cfg.block_filters.size(); ++b) {
            const int block = static_cast<int>(b + 1);
            const std::string prefix = "block" + std::to_string(block);
            for (std::size_t c = 0; c < cfg.convs_per_block[b]; ++c) {
                const std::string n = std::to_string(c + 1);
                conv(prefix + "_conv" + n, cfg.block_filters[b], 3, block);
                batchnorm(prefix + "_bn" + n, block);
                simple(prefix + "_relu" + n, LayerKind::Relu, block);
                simple(prefix + "_drop" + n, LayerKind::Dropout, block, cfg.conv_dropout);
            }
            simple(prefix + "_pool", LayerKind::MaxPool, block);
        }
        simple("flatten", LayerKind::Flatten, 0);
    }

    void feature_layer() {
        dense("feature_dense", g_.config_.feature_units);
        simple("feature_relu", LayerKind::Relu, 0);
        simple("feature_drop", LayerKind::Dropout, 0, g_.config_.feature_dropout);
    }

private:
    Shape current() const { return g_.layers_.empty() ? g_.input_shape_ : g_.layers_.back().output_shape; }

    Tensor glorot(Shape shape, std::size_t fan_in, std::size_t fan_out) {
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        Tensor t(std::move(shape));
        for (auto& v : t.data()) v = static_cast<float>(uniform(rng_, -limit, limit));
        return t;
    }

    void add_param(const LayerSpec& layer, const std::string& role, Tensor value, bool buffer = false) {
        Parameter p{layer.id + "/" + role, layer.id, layer.kind, role, std::move(value), buffer};
        if (!buffer) p.value.set_requires_grad(true);
        g_.index_[p.key] = g_.params_.size();
        g_.params_.push_back(std::move(p));
    }

    ModelGraph& g_;
    Rng& rng_;
};

namespace {

void check_input_shape(const Shape& input_shape) {
    if (input_shape.size() != 3 || input_shape[2] != 3 || input_shape[0] != input_shape[1] ||
        (input_shape[0] != 64 && input_shape[0] != 128 && input_shape[0] != 256))
        throw Error(ErrorKind::Config, "unsupported input shape " + shape_to_string(input_shape) +
                                           "; expected (H,H,3) with H in {64,128,256}");
}

} // namespace

ModelGraph build_baseline_cnn(const Shape& input_shape, const ModelConfig& config) {
    check_input_shape(input_shape);
    config.validate();
    ModelGraph g;
    g.kind_ = ModelKind::Classifier;
    g.input_shape_ = input_shape;
    g.config_ = config;
    Rng rng = make_rng({config.init_seed, 0xC1A55});
    GraphBuilder b(g, rng);
    b.backbone();
    b.feature_layer();
    b.dense("output_dense", 1);
    b.simple("output_sigmoid", LayerKind::Sigmoid, 0);
    g.tower_end_ = g.layers_.size();
    return g;
}

ModelGraph build_snn(const Shape& input_shape, const ModelConfig& config) {
    check_input_shape(input_shape);
    config.validate();
    ModelGraph g;
    g.kind_ = ModelKind::Siamese;
    g.input_shape_ = input_shape;
    g.config_ = config;
    Rng rng = make_rng({config.init_seed, 0x5A4E5E});
    GraphBuilder b(g, rng);
    b.backbone();
    b.feature_layer();
    g.tower_end_ = g.layers_.size();
    b.l1_head("l1_head", config.head);
    b.simple("similarity", LayerKind::Sigmoid, 0);
    return g;
}

ModelGraph build_model(ModelKind kind, const Shape& input_shape, const ModelConfig& config) {
    return kind == ModelKind::Classifier ? build_baseline_cnn(input_shape, config) : build_snn(input_shape, config);
}

// ---------------------------------------------------------------------------
// Forward passes

namespace {

Tensor run_layers(ModelGraph& g, Tape& tape, Tensor x, std::size_t begin, std::size_t end, Mode mode, Rng& rng) {
    const auto& layers = g.layers();
    for (std::size_t i = begin; i < end; ++i) {
        const LayerSpec& l = layers[i];
        switch (l.kind) {
        case LayerKind::Conv:
            x = conv2d(tape, x, g.parameter(l.id + "/kernel"), g.parameter(l.id + "/bias"), 1, Padding::Same);
            break;
        case LayerKind::BatchNorm: {
            // Frozen batchnorm layers keep their statistics fixed.
            const Mode bn_mode = l.trainable ? mode : Mode::Infer;
            x = batchnorm(tape, x, g.parameter(l.id + "/gamma"), g.parameter(l.id + "/beta"), bn_mode, g.stats(l.id));
            break;
        }
        case LayerKind::Relu: x = relu(tape, x); break;
        case LayerKind::MaxPool: x = maxpool2d(tape, x, 2, 2); break;
        case LayerKind::Dropout: x = dropout(tape, x, l.rate, mode, rng); break;
        case LayerKind::Dense:
            x = dense(tape, x, g.parameter(l.id + "/kernel"), g.parameter(l.id + "/bias"));
            break;
        case LayerKind::Flatten: x = flatten(tape, x); break;
        case LayerKind::Sigmoid: x = sigmoid(tape, x); break;
        case LayerKind::L1Head:
            throw Error(ErrorKind::Contract, "l1 head reached inside a single-input pass");
        }
    }
    return x;
}

void check_batch(const ModelGraph& g, const Tensor& batch) {
    const Shape& in = g.input_shape();
    if (batch.rank() != 4 || batch.dim(1) != in[0] || batch.dim(2) != in[1] || batch.dim(3) != in[2])
        throw Error(ErrorKind::Dimension, "batch shape " + shape_to_string(batch.shape()) + " does not match model input " +
                                              shape_to_string(in) + " (axes 1..3)");
}

} // namespace

Tensor forward_classifier(ModelGraph& graph, Tape& tape, const Tensor& batch, Mode mode, Rng& rng) {
    if (graph.kind() != ModelKind::Classifier) throw Error(ErrorKind::Contract, "forward_classifier on a Siamese graph");
    check_batch(graph, batch);
    return run_layers(graph, tape, batch, 0, graph.layers().size(), mode, rng);
}

Tensor forward_tower(ModelGraph& graph, Tape& tape, const Tensor& batch, Mode mode, Rng& rng) {
    check_batch(graph, batch);
    return run_layers(graph, tape, batch, 0, graph.tower_end(), mode, rng);
}

Tensor forward_head(ModelGraph& graph, Tape& tape, const Tensor& features_a, const Tensor& features_b) {
    if (graph.kind() != ModelKind::Siamese) throw Error(ErrorKind::Contract, "forward_head on a classifier graph");
    const auto dist = l1_distance(tape, features_a, features_b);
    const Tensor& input = graph.config().head == HeadMode::ScalarL1 ? dist.distance : dist.elementwise;
    const Tensor logit = dense(tape, input, graph.parameter("l1_head/weight"), graph.parameter("l1_head/bias"));
    return sigmoid(tape, logit);
}

Tensor forward_snn(ModelGraph& graph, Tape& tape, const Tensor& batch_a, const Tensor& batch_b, Mode mode, Rng& rng) {
    if (graph.kind() != ModelKind::Siamese) throw Error(ErrorKind::Contract, "forward_snn on a classifier graph");
    check_batch(graph, batch_a);
    check_batch(graph, batch_b);
    if (batch_a.dim(0) != batch_b.dim(0))
        throw Error(ErrorKind::Dimension, "pair batches differ in size on axis 0");
    const std::size_t n = batch_a.dim(0);
    const Tensor stacked = concat_batch(tape, batch_a, batch_b);
    const Tensor features = run_layers(graph, tape, stacked, 0, graph.tower_end(), mode, rng);
    return forward_head(graph, tape, slice_batch(tape, features, 0, n), slice_batch(tape, features, n, 2 * n));
}

std::vector<float> predict_classifier(ModelGraph& graph, const Tensor& batch) {
    Tape tape(Tape::State::Inactive);
    Rng rng(0);
    const Tensor s = forward_classifier(graph, tape, batch, Mode::Infer, rng);
    return {s.data().begin(), s.data().end()};
}

std::vector<float> predict_similarity(ModelGraph& graph, const Tensor& batch_a, const Tensor& batch_b) {
    Tape tape(Tape::State::Inactive);
    Rng rng(0);
    const Tensor s = forward_snn(graph, tape, batch_a, batch_b, Mode::Infer, rng);
    return {s.data().begin(), s.data().end()};
}

Tensor predict_features(ModelGraph& graph, const Tensor& batch) {
    Tape tape(Tape::State::Inactive);
    Rng rng(0);
    return forward_tower(graph, tape, batch, Mode::Infer, rng);
}

} // namespace siamcheck
