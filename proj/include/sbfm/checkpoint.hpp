#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sbfm/digest.hpp"
#include "sbfm/field.hpp"
#include "sbfm/serialize.hpp"

namespace sbfm {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Canonical serialization the checkpoint header digests.
inline std::string field_config_digest(const FieldConfig& cfg) {
    return sha256_hex(to_json(cfg).dump());
}

// Binary, little-endian: magic "SBFM", version u32, config digest (32 raw
// bytes), param count u64, then f64 parameters in layout order. A sidecar
// "<path>.json" duplicates the config.
inline void save_checkpoint(const std::filesystem::path& path, const FieldParams& params) {
    const std::string digest_hex = field_config_digest(params.config());
    std::string bytes;
    bytes += "SBFM";
    detail::put_u32(bytes, kCheckpointVersion);
    for (std::size_t i = 0; i < 64; i += 2) {
        const std::string byte_hex = digest_hex.substr(i, 2);
        bytes.push_back(static_cast<char>(std::stoi(byte_hex, nullptr, 16)));
    }
    detail::put_u64(bytes, params.values().size());
    for (double v : params.values()) detail::put_f64(bytes, v);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));

    nlohmann::ordered_json sidecar;
    sidecar["format"] = "sbfm-checkpoint";
    sidecar["version"] = kCheckpointVersion;
    sidecar["config_sha256"] = digest_hex;
    sidecar["param_count"] = params.values().size();
    sidecar["config"] = to_json(params.config());
    std::ofstream mf(path.string() + ".json", std::ios::trunc);
    mf << sidecar.dump(2) << "\n";
}

inline FieldParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream mf(path.string() + ".json");
    if (!mf)
        throw std::runtime_error("load_checkpoint: missing sidecar " + path.string() + ".json");
    nlohmann::json sidecar = nlohmann::json::parse(mf);
    FieldParams params(field_config_from_json(sidecar.at("config")));

    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (bytes.size() < 4 + 4 + 32 + 8 || std::memcmp(bytes.data(), "SBFM", 4) != 0)
        throw std::runtime_error("load_checkpoint: bad magic in " + path.string());
    detail::ByteReader r(bytes);
    r.u32();  // magic
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw std::runtime_error("load_checkpoint: unsupported version " +
                                 std::to_string(version));
    std::string digest_hex;
    static const char* hex = "0123456789abcdef";
    for (int i = 0; i < 32; ++i) {
        const std::uint8_t b = static_cast<std::uint8_t>(r.u8());
        digest_hex.push_back(hex[b >> 4]);
        digest_hex.push_back(hex[b & 0xf]);
    }
    if (digest_hex != field_config_digest(params.config()))
        throw std::runtime_error("load_checkpoint: config digest mismatch in " + path.string());
    const std::uint64_t count = r.u64();
    if (count != params.values().size())
        throw std::runtime_error("load_checkpoint: parameter count mismatch in " +
                                 path.string());
    for (double& v : params.values()) v = r.f64();
    if (!r.exhausted())
        throw std::runtime_error("load_checkpoint: trailing bytes in " + path.string());
    return params;
}

}  // namespace sbfm
