#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "siamcheck/data.hpp"
#include "siamcheck/model.hpp"
#include "siamcheck/train.hpp"

namespace siamcheck::cli {

enum class Variant { CnnScratch, SnnScratch, CnnTransfer, SnnTransfer, SnnVoting };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view text);
ModelKind model_kind_of(Variant v);
bool is_transfer(Variant v);

/// Every setting a command can use. Loaded from a JSON file, then overridden
/// by command-line flags; the resolved value is written next to the outputs.
struct RunConfig {
    TrainConfig train;
    std::string dataset_root;
    Layout layout = Layout::Bracket;
    std::vector<std::string> alphabets;
    Variant variant = Variant::CnnScratch;
    std::string architecture = "vgg16"; ///< vgg16 | desk
    HeadMode head = HeadMode::ScalarL1;
    FreezePolicy freeze = FreezePolicy::AllButLastBlock;
    std::size_t k = 5;
    std::size_t resolution = 64;
    std::string split = "validation";
    std::string train_split = "train";
    std::string weights;
    std::string reference;
    std::string out = "run";
    std::size_t preview_count = 3;
    std::uint64_t init_seed = 0;

    /// Checks ranges and variant requirements; throws Config.
    void validate() const;
    nlohmann::json to_json() const;
    /// Throws Config on unknown keys or wrongly typed values.
    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig from_file(const std::filesystem::path& path);

    ModelConfig model_config() const;
};

} // namespace siamcheck::cli
