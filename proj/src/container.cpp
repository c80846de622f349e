#include "siamcheck/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <zlib.h>

#include "siamcheck/error.hpp"

namespace siamcheck {

using nlohmann::json;

static_assert(sizeof(float) == 4);

const BlobEntry* Container::find(std::string_view id) const {
    for (const auto& e : entries)
        if (e.id == id) return &e;
    return nullptr;
}

std::uint32_t crc32_of(std::span<const std::byte> bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks for large blobs.
    const auto* p = reinterpret_cast<const Bytef*>(bytes.data());
    std::size_t left = bytes.size();
    while (left > 0) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(left, 1u << 30));
        crc = crc32(crc, p, chunk);
        p += chunk;
        left -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

namespace {

void append_le_floats(std::vector<char>& out, std::span<const float> values) {
    const std::size_t start = out.size();
    out.resize(start + values.size() * 4);
    if constexpr (std::endian::native == std::endian::little) {
        std::memcpy(out.data() + start, values.data(), values.size() * 4);
    } else {
        for (std::size_t i = 0; i < values.size(); ++i) {
            const auto bits = std::bit_cast<std::uint32_t>(values[i]);
            for (int b = 0; b < 4; ++b) out[start + i * 4 + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
        }
    }
}

std::vector<float> read_le_floats(const char* p, std::size_t count) {
    std::vector<float> values(count);
    if constexpr (std::endian::native == std::endian::little) {
        std::memcpy(values.data(), p, count * 4);
    } else {
        for (std::size_t i = 0; i < count; ++i) {
            std::uint32_t bits = 0;
            for (int b = 0; b < 4; ++b)
                bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i * 4 + b])) << (8 * b);
            values[i] = std::bit_cast<float>(bits);
        }
    }
    return values;
}

} // namespace

std::vector<char> encode_container(const Container& container) {
    std::vector<char> payload;
    json entries = json::array();
    for (const auto& e : container.entries) {
        if (shape_numel(e.shape) != e.values.size())
            throw Error(ErrorKind::Contract, "container entry '" + e.id + "' shape " + shape_to_string(e.shape) +
                                                 " does not match " + std::to_string(e.values.size()) + " values");
        const std::size_t offset = payload.size();
        append_le_floats(payload, e.values);
        const std::size_t bytes = payload.size() - offset;
        const auto crc = crc32_of(std::as_bytes(std::span<const char>(payload.data() + offset, bytes)));
        json entry = {{"id", e.id},       {"kind", e.kind},   {"shape", e.shape}, {"dtype", "float32"},
                      {"offset", offset}, {"bytes", bytes},   {"crc32", crc}};
        if (!e.attrs.empty()) entry["attrs"] = e.attrs;
        entries.push_back(std::move(entry));
    }
    json manifest = {{"format", "siamcheck-container"},
                     {"version", kContainerVersion},
                     {"kind", container.kind},
                     {"dtype", "float32"},
                     {"byte_order", "little"},
                     {"payload_bytes", payload.size()},
                     {"attrs", container.attrs},
                     {"entries", std::move(entries)}};
    const std::string text = manifest.dump(1);
    std::string header = std::string(kContainerMagic) + " " + std::to_string(kContainerVersion) + "\n" +
                         std::to_string(text.size()) + "\n" + text + "\n";
    std::vector<char> out(header.begin(), header.end());
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

Container decode_container(std::span<const char> bytes) {
    const std::string_view all(bytes.data(), bytes.size());
    const auto line1 = all.find('\n');
    if (line1 == std::string_view::npos || all.substr(0, kContainerMagic.size()) != kContainerMagic)
        throw Error(ErrorKind::Format, "not a siamcheck container (bad magic)");
    int version = 0;
    try {
        version = std::stoi(std::string(all.substr(kContainerMagic.size(), line1 - kContainerMagic.size())));
    } catch (const std::exception&) {
        throw Error(ErrorKind::Format, "unreadable container version");
    }
    if (version != kContainerVersion)
        throw Error(ErrorKind::Format, "container version " + std::to_string(version) + " unsupported (expected " +
                                           std::to_string(kContainerVersion) + ")");
    const auto line2 = all.find('\n', line1 + 1);
    if (line2 == std::string_view::npos) throw Error(ErrorKind::Corruption, "container truncated in header");
    std::size_t manifest_len = 0;
    try {
        manifest_len = std::stoull(std::string(all.substr(line1 + 1, line2 - line1 - 1)));
    } catch (const std::exception&) {
        throw Error(ErrorKind::Corruption, "unreadable manifest length");
    }
    const std::size_t manifest_start = line2 + 1;
    if (manifest_start + manifest_len + 1 > all.size())
        throw Error(ErrorKind::Corruption, "container truncated in manifest");
    json manifest;
    try {
        manifest = json::parse(all.substr(manifest_start, manifest_len));
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Corruption, std::string("manifest is not valid JSON: ") + e.what());
    }
    if (manifest.value("version", -1) != kContainerVersion)
        throw Error(ErrorKind::Format, "manifest version does not match container header");
    if (manifest.value("dtype", "") != "float32")
        throw Error(ErrorKind::Format, "unsupported dtype '" + manifest.value("dtype", "") + "'");

    const std::size_t payload_start = manifest_start + manifest_len + 1;
    const std::size_t payload_len = all.size() - payload_start;
    const auto declared = manifest.value("payload_bytes", std::size_t{0});
    if (payload_len != declared)
        throw Error(ErrorKind::Corruption, "payload is " + std::to_string(payload_len) + " bytes, manifest declares " +
                                               std::to_string(declared));
    const char* payload = bytes.data() + payload_start;

    Container out;
    try {
        out.kind = manifest.at("kind").get<std::string>();
        out.attrs = manifest.value("attrs", json::object());
        for (const auto& entry : manifest.at("entries")) {
            BlobEntry e;
            e.id = entry.at("id").get<std::string>();
            e.kind = entry.value("kind", "");
            e.shape = entry.at("shape").get<Shape>();
            e.attrs = entry.value("attrs", json::object());
            const auto offset = entry.at("offset").get<std::size_t>();
            const auto len = entry.at("bytes").get<std::size_t>();
            const auto crc = entry.at("crc32").get<std::uint32_t>();
            for (auto d : e.shape)
                if (d == 0) throw Error(ErrorKind::Load, "layer '" + e.id + "': zero-sized axis in manifest shape");
            if (shape_numel(e.shape) * 4 != len)
                throw Error(ErrorKind::Load, "layer '" + e.id + "': manifest shape " + shape_to_string(e.shape) +
                                                 " does not match blob of " + std::to_string(len) + " bytes");
            if (offset > payload_len || len > payload_len - offset)
                throw Error(ErrorKind::Corruption, "layer '" + e.id + "': blob extends past end of payload");
            if (crc32_of(std::as_bytes(std::span<const char>(payload + offset, len))) != crc)
                throw Error(ErrorKind::Corruption, "layer '" + e.id + "': CRC mismatch");
            e.values = read_le_floats(payload + offset, len / 4);
            out.entries.push_back(std::move(e));
        }
    } catch (const json::exception& ex) {
        throw Error(ErrorKind::Corruption, std::string("malformed manifest: ") + ex.what());
    }
    return out;
}

void write_container(const std::filesystem::path& path, const Container& container) {
    const auto bytes = encode_container(container);
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw Error(ErrorKind::Io, "cannot open '" + tmp.string() + "' for writing");
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!os) throw Error(ErrorKind::Io, "write failed for '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error(ErrorKind::Io, "cannot move '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

Container read_container(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "'");
    std::vector<char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    try {
        return decode_container(bytes);
    } catch (const Error& e) {
        throw Error(e.kind(), path.string() + ": " + e.message());
    }
}

} // namespace siamcheck
