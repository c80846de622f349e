#include "siamcheck/weights.hpp"

#include <algorithm>
#include <cstring>

#include "siamcheck/error.hpp"

namespace siamcheck {

using nlohmann::json;

namespace {

BlobEntry entry_for(const ModelGraph& graph, const Parameter& p) {
    BlobEntry e;
    e.id = p.key;
    e.kind = std::string(to_string(p.layer_kind));
    e.shape = p.value.shape();
    e.values.assign(p.value.data().begin(), p.value.data().end());
    e.attrs = {{"layer", p.layer_id}, {"role", p.role}, {"buffer", p.buffer},
               {"trainable", graph.layer_trainable(p.layer_id)}};
    return e;
}

void copy_values(const BlobEntry& e, Tensor& dst) {
    std::copy(e.values.begin(), e.values.end(), dst.data().begin());
}

void check_shape(const BlobEntry& e, const Parameter& p) {
    if (e.shape != p.value.shape())
        throw Error(ErrorKind::Load, "layer '" + p.layer_id + "': " + p.role + " has shape " + shape_to_string(e.shape) +
                                         " in file, graph expects " + shape_to_string(p.value.shape()));
}

} // namespace

WeightFile to_weight_file(const ModelGraph& graph) {
    WeightFile file;
    file.kind = "weights";
    file.attrs = {{"model_kind", std::string(to_string(graph.kind()))},
                  {"input_shape", graph.input_shape()},
                  {"config", graph.config().to_json()}};
    for (const auto& p : graph.parameters()) file.entries.push_back(entry_for(graph, p));
    return file;
}

void save_weights(const ModelGraph& graph, const std::filesystem::path& path) {
    write_container(path, to_weight_file(graph));
}

WeightFile load_weights(const std::filesystem::path& path) {
    WeightFile file = read_container(path);
    if (file.kind != "weights")
        throw Error(ErrorKind::Format, path.string() + ": container holds '" + file.kind + "', not weights");
    return file;
}

void load_into(ModelGraph& graph, const WeightFile& file) {
    if (file.kind != "weights") throw Error(ErrorKind::Format, "container holds '" + file.kind + "', not weights");
    const std::string kind = file.attrs.value("model_kind", std::string{});
    if (kind != to_string(graph.kind()))
        throw Error(ErrorKind::Load, "weight file is for a " + kind + " model, graph is " +
                                         std::string(to_string(graph.kind())));
    std::vector<const BlobEntry*> matched;
    for (const auto& p : graph.parameters()) {
        const BlobEntry* e = file.find(p.key);
        if (!e) throw Error(ErrorKind::Load, "layer '" + p.layer_id + "': " + p.role + " missing from weight file");
        check_shape(*e, p);
        matched.push_back(e);
    }
    if (file.entries.size() != matched.size())
        for (const auto& e : file.entries)
            if (!graph.has_parameter(e.id))
                throw Error(ErrorKind::Load, "layer '" + e.attrs.value("layer", e.id) + "' not present in graph");

    std::size_t i = 0;
    for (const auto& p : graph.parameters()) copy_values(*matched[i++], graph.parameter(p.key));
    for (const auto& l : graph.layers()) {
        for (const auto* e : matched)
            if (e->attrs.value("layer", std::string{}) == l.id && e->attrs.contains("trainable")) {
                graph.set_trainable(l.id, e->attrs["trainable"].get<bool>());
                break;
            }
    }
}

ModelGraph model_from_weights(const WeightFile& file) {
    if (file.kind != "weights") throw Error(ErrorKind::Format, "container holds '" + file.kind + "', not weights");
    ModelKind kind;
    Shape input;
    ModelConfig config;
    try {
        const auto k = file.attrs.at("model_kind").get<std::string>();
        if (k == "classifier") kind = ModelKind::Classifier;
        else if (k == "siamese") kind = ModelKind::Siamese;
        else throw Error(ErrorKind::Load, "unknown model kind '" + k + "'");
        input = file.attrs.at("input_shape").get<Shape>();
        config = ModelConfig::from_json(file.attrs.at("config"));
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Load, std::string("weight file attributes: ") + e.what());
    }
    ModelGraph graph = build_model(kind, input, config);
    load_into(graph, file);
    return graph;
}

ModelGraph model_from_weights(const std::filesystem::path& path) {
    try {
        return model_from_weights(load_weights(path));
    } catch (const Error& e) {
        if (e.message().rfind(path.string(), 0) == 0) throw;
        throw Error(e.kind(), path.string() + ": " + e.message());
    }
}

void apply_transfer(ModelGraph& graph, const WeightFile& file, FreezePolicy policy) {
    std::vector<std::pair<const BlobEntry*, std::string>> plan;
    for (const auto& l : graph.layers()) {
        if (l.block == 0) continue;
        for (const auto& p : graph.parameters()) {
            if (p.layer_id != l.id) continue;
            const BlobEntry* e = file.find(p.key);
            if (!e) {
                if (l.kind == LayerKind::Conv)
                    throw Error(ErrorKind::Load, "layer '" + l.id + "': " + p.role + " missing from weight file");
                continue;
            }
            check_shape(*e, p);
            plan.emplace_back(e, p.key);
        }
    }
    for (const auto& [e, key] : plan) copy_values(*e, graph.parameter(key));
    graph.apply_freeze_policy(policy);
}

WeightFile tower_weight_file(const ModelGraph& graph, int side) {
    WeightFile file;
    file.kind = "weights";
    file.attrs = {{"model_kind", std::string(to_string(graph.kind()))}, {"part", "tower"}};
    const auto handles = graph.tower_parameters(side);
    for (const auto& p : graph.parameters())
        for (const auto& h : handles)
            if (h.same_storage(p.value)) {
                file.entries.push_back(entry_for(graph, p));
                break;
            }
    return file;
}

} // namespace siamcheck
