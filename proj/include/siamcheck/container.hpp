#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "siamcheck/tensor.hpp"

namespace siamcheck {

/// Blob container shared by weight files and raw image shards.
///
/// Layout on disk:
///
///     SIAMCHECK-CONTAINER <version>\n
///     <manifest byte count>\n
///     <manifest: JSON text>\n
///     <payload: little-endian float32 blobs, manifest order, no padding>
///
/// Each manifest entry carries id, kind, shape, dtype, byte offset into the
/// payload, byte length, and the CRC-32 of its bytes.
inline constexpr int kContainerVersion = 1;
inline constexpr std::string_view kContainerMagic = "SIAMCHECK-CONTAINER";

struct BlobEntry {
    std::string id;
    std::string kind;
    Shape shape;
    std::vector<float> values;
    nlohmann::json attrs = nlohmann::json::object();
};

struct Container {
    std::string kind; ///< "weights" or "shard"
    nlohmann::json attrs = nlohmann::json::object();
    std::vector<BlobEntry> entries;

    const BlobEntry* find(std::string_view id) const;
};

std::uint32_t crc32_of(std::span<const std::byte> bytes);

/// Serializes to bytes; identical containers give identical bytes.
std::vector<char> encode_container(const Container& container);
/// Parses and fully validates before returning anything: magic and version
/// (Format), truncation and CRC (Corruption), shape vs. byte length (Load,
/// naming the entry).
Container decode_container(std::span<const char> bytes);

void write_container(const std::filesystem::path& path, const Container& container);
Container read_container(const std::filesystem::path& path);

} // namespace siamcheck
