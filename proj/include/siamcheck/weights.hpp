#pragma once

#include <filesystem>

#include "siamcheck/container.hpp"
#include "siamcheck/model.hpp"

namespace siamcheck {

/// A weight file's decoded contents: one blob per parameter, plus the model
/// kind, input shape and config in the container attributes.
using WeightFile = Container;

WeightFile to_weight_file(const ModelGraph& graph);
void save_weights(const ModelGraph& graph, const std::filesystem::path& path);
WeightFile load_weights(const std::filesystem::path& path);

/// Copies every parameter of `graph` from `file`. The file must describe the
/// same parameters with the same shapes; nothing is modified on failure.
/// Trainable flags stored in the file are restored.
void load_into(ModelGraph& graph, const WeightFile& file);

/// Rebuilds the graph recorded in a weight file and loads it.
ModelGraph model_from_weights(const WeightFile& file);
ModelGraph model_from_weights(const std::filesystem::path& path);

/// Loads backbone parameters (conv blocks) into `graph` and applies the freeze
/// policy. Conv kernels and biases are required; batchnorm entries are loaded
/// when present and left freshly initialized otherwise. Head layers keep their
/// random initialization. Entries outside the backbone are ignored.
void apply_transfer(ModelGraph& graph, const WeightFile& file, FreezePolicy policy);

/// The tower's parameters as a standalone weight file (used to compare twins).
WeightFile tower_weight_file(const ModelGraph& graph, int side);

} // namespace siamcheck
