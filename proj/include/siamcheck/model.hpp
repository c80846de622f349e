#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "siamcheck/ops.hpp"

namespace siamcheck {

enum class ModelKind { Classifier, Siamese };

/// How the Siamese head turns the twin feature vectors into a logit.
enum class HeadMode {
    ScalarL1,   ///< w * sum|p - q| + b, w starts at -1 and b at 0
    WeightedL1, ///< sum_i w_i |p_i - q_i| + b
};

enum class FreezePolicy {
    None,          ///< every layer trainable
    AllButLastBlock, ///< conv blocks 1..B-1 frozen; last block and head train
};

enum class LayerKind { Conv, BatchNorm, Relu, MaxPool, Dropout, Dense, Flatten, Sigmoid, L1Head };

std::string_view to_string(ModelKind kind);
std::string_view to_string(HeadMode mode);
std::string_view to_string(FreezePolicy policy);
std::string_view to_string(LayerKind kind);
HeadMode parse_head_mode(std::string_view text);
FreezePolicy parse_freeze_policy(std::string_view text);

struct LayerSpec {
    std::string id;
    LayerKind kind;
    std::size_t units = 0;  ///< conv filters or dense units
    std::size_t kernel = 0; ///< conv kernel edge
    float rate = 0.0f;      ///< dropout rate
    int block = 0;          ///< conv block number (1-based); 0 outside the backbone
    bool trainable = true;
    Shape output_shape;     ///< per-sample shape after this layer
};

struct ModelConfig {
    std::vector<std::size_t> block_filters{64, 128, 256, 512, 512};
    std::vector<std::size_t> convs_per_block{2, 2, 3, 3, 3};
    float conv_dropout = 0.3f;
    std::size_t feature_units = 128;
    float feature_dropout = 0.3f;
    HeadMode head = HeadMode::ScalarL1;
    std::uint64_t init_seed = 0;

    /// VGG16 block layout with the randomly initialized head.
    static ModelConfig vgg16();
    /// VGG16 layout with the transfer-learning head for `kind`
    /// (128 units / 50% dropout for the classifier, 1024 / 30% per tower).
    static ModelConfig vgg16_transfer(ModelKind kind);
    /// Three single-conv blocks (8/16/32 filters), for CPU-scale experiments.
    static ModelConfig desk();

    void validate() const;
    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
};

struct Parameter {
    std::string key;      ///< "<layer id>/<role>"
    std::string layer_id;
    LayerKind layer_kind;
    std::string role;     ///< kernel, bias, gamma, beta, moving_mean, moving_variance, weight
    Tensor value;
    bool buffer = false;  ///< running statistics: serialized, never optimized
};

/// A layered network with its parameter store.
///
/// For Siamese graphs, layers [0, tower_end) form the tower that both inputs
/// run through; there is one copy of its parameters, so the twins share
/// storage by construction.
class ModelGraph {
public:
    ModelGraph() = default;
    ModelGraph(ModelGraph&&) = default;
    ModelGraph& operator=(ModelGraph&&) = default;
    // Parameters are shared handles; a copy would alias them.
    ModelGraph(const ModelGraph&) = delete;
    ModelGraph& operator=(const ModelGraph&) = delete;

    ModelKind kind() const { return kind_; }
    const Shape& input_shape() const { return input_shape_; }
    const ModelConfig& config() const { return config_; }
    const std::vector<LayerSpec>& layers() const { return layers_; }
    std::size_t tower_end() const { return tower_end_; }
    std::size_t block_count() const { return config_.block_filters.size(); }

    const std::vector<Parameter>& parameters() const { return params_; }
    Tensor& parameter(const std::string& key);
    const Tensor& parameter(const std::string& key) const;
    bool has_parameter(const std::string& key) const { return index_.count(key) != 0; }

    /// Trainable, non-buffer parameters in store order (the optimizer's list).
    std::vector<Tensor> trainable_parameters() const;
    /// Tower parameters as seen from one side of the twin; both sides return
    /// the same handles.
    std::vector<Tensor> tower_parameters(int side) const;

    std::size_t parameter_count() const;           ///< every stored scalar
    std::size_t trainable_parameter_count() const; ///< excludes frozen layers and buffers
    std::size_t feature_width() const;

    BatchNormStats& stats(const std::string& layer_id);
    bool layer_trainable(const std::string& layer_id) const;
    void set_trainable(const std::string& layer_id, bool trainable);
    void apply_freeze_policy(FreezePolicy policy);

private:
    friend ModelGraph build_baseline_cnn(const Shape&, const ModelConfig&);
    friend ModelGraph build_snn(const Shape&, const ModelConfig&);
    friend class GraphBuilder;

    ModelKind kind_ = ModelKind::Classifier;
    Shape input_shape_;
    ModelConfig config_;
    std::vector<LayerSpec> layers_;
    std::size_t tower_end_ = 0;
    std::vector<Parameter> params_;
    std::map<std::string, std::size_t> index_;
    std::map<std::string, BatchNormStats> stats_;
};

/// VGG-style classifier: conv blocks (conv, batchnorm, relu, dropout per conv;
/// 2x2 max pool per block), flatten, dense feature layer, one sigmoid unit
/// giving P(correctly installed). Input must be (H, H, 3), H in {64,128,256}.
ModelGraph build_baseline_cnn(const Shape& input_shape, const ModelConfig& config);

/// Twin of the baseline backbone plus a dense feature layer with dropout per
/// tower, an L1 head and a sigmoid similarity.
ModelGraph build_snn(const Shape& input_shape, const ModelConfig& config);

ModelGraph build_model(ModelKind kind, const Shape& input_shape, const ModelConfig& config);

/// Classifier scores [N,1]. In train mode batchnorm layers of frozen blocks
/// still use their running statistics.
Tensor forward_classifier(ModelGraph& graph, Tape& tape, const Tensor& batch, Mode mode, Rng& rng);

/// Tower features [N, feature_width].
Tensor forward_tower(ModelGraph& graph, Tape& tape, const Tensor& batch, Mode mode, Rng& rng);

/// Head over precomputed tower features: similarity [N,1].
Tensor forward_head(ModelGraph& graph, Tape& tape, const Tensor& features_a, const Tensor& features_b);

/// Similarity [N,1] for image pairs. Both inputs pass through the tower as one
/// stacked batch, so train-mode statistics see the pair symmetrically.
Tensor forward_snn(ModelGraph& graph, Tape& tape, const Tensor& batch_a, const Tensor& batch_b, Mode mode, Rng& rng);

/// Infer-mode conveniences on an inactive tape.
std::vector<float> predict_classifier(ModelGraph& graph, const Tensor& batch);
std::vector<float> predict_similarity(ModelGraph& graph, const Tensor& batch_a, const Tensor& batch_b);
Tensor predict_features(ModelGraph& graph, const Tensor& batch);

} // namespace siamcheck
