#pragma once

/*
 * toy_data.hpp — synthetic paired object-removal dataset.
 *
 * Each of K objects has a deterministic signature: a sum of three seeded
 * sinusoids on the audio grid and a Gaussian bump in time with per-channel
 * amplitude on the raw video grid, thresholded at 10% of its peak (the
 * support mask is 1 exactly where the thresholded signal is nonzero).
 *
 * A scene mixes N distinct objects linearly; removal subtracts one embedded
 * signature. Embedded signatures are quantized to the dyadic grid 2^-24 so
 * that mixing and removal are exact in f64: x0 - x1 reproduces the removed
 * embedding bit for bit.
 *
 * The stored video block is the temporally projected one (raw grid -> audio
 * grid); the raw grid exists only inside generation, where it also feeds the
 * mask-gated condition.
 */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sbfm/digest.hpp"
#include "sbfm/latent.hpp"
#include "sbfm/rng.hpp"

namespace sbfm {

struct ToyDataConfig {
    std::uint64_t seed = 42;
    std::size_t n_pairs = 4096;
    std::size_t n_objects = 8;         // K
    std::size_t objects_per_scene = 2;  // N
    std::size_t t_a = 32;
    std::size_t c_a = 1;
    std::size_t t_v = 8;
    std::size_t c_v = 4;

    std::size_t d_a() const noexcept { return t_a * c_a; }
    std::size_t d_v_total() const noexcept { return t_a * c_v; }  // post-projection
    std::size_t raw_video_len() const noexcept { return t_v * c_v; }
    std::size_t cond_a_dim() const noexcept { return n_objects; }
    std::size_t cond_v_dim() const noexcept { return c_v; }

    void validate() const {
        if (n_pairs < 1) throw std::invalid_argument("ToyDataConfig: n_pairs must be >= 1");
        if (objects_per_scene < 2)
            throw std::invalid_argument("ToyDataConfig: objects_per_scene must be >= 2");
        if (objects_per_scene > n_objects)
            throw std::invalid_argument(
                "ToyDataConfig: objects_per_scene must not exceed n_objects");
        for (std::size_t v : {t_a, c_a, t_v, c_v})
            if (v == 0) throw std::invalid_argument("ToyDataConfig: grid dims must be >= 1");
    }
};

struct ObjectSignature {
    std::uint32_t object_id = 0;
    std::vector<double> audio_sig;           // length t_a * c_a, time-major
    std::vector<double> video_sig;           // length t_v * c_v, time-major
    std::vector<std::uint8_t> support_mask;  // 1 exactly where |video_sig| > 0
};

struct ProjectorSpec {
    std::size_t t_v = 8;
    std::size_t t_a = 32;
    enum class Mode { LinearResample } mode = Mode::LinearResample;
};

// Per-channel 1-D linear resampling from t_v to t_a time samples with
// endpoint alignment. Input and output are time-major [time][channel].
inline std::vector<double> temporal_project(std::span<const double> video_block,
                                            const ProjectorSpec& spec) {
    if (spec.t_v == 0 || video_block.size() % spec.t_v != 0)
        throw std::invalid_argument("temporal_project: input length is not a multiple of t_v");
    const std::size_t channels = video_block.size() / spec.t_v;
    if (spec.t_v == spec.t_a) return {video_block.begin(), video_block.end()};

    std::vector<double> out(spec.t_a * channels);
    for (std::size_t i = 0; i < spec.t_a; ++i) {
        double pos = 0.0;
        if (spec.t_a > 1 && spec.t_v > 1)
            pos = static_cast<double>(i) * static_cast<double>(spec.t_v - 1) /
                  static_cast<double>(spec.t_a - 1);
        const std::size_t lo = std::min(static_cast<std::size_t>(pos), spec.t_v - 1);
        const std::size_t hi = std::min(lo + 1, spec.t_v - 1);
        const double w = pos - static_cast<double>(lo);
        for (std::size_t c = 0; c < channels; ++c)
            out[i * channels + c] =
                (1.0 - w) * video_block[lo * channels + c] + w * video_block[hi * channels + c];
    }
    return out;
}

struct RemovalPair {
    LatentState x0;
    LatentState x1;
    std::uint32_t removed_id = 0;
    ConditionEmbedding cond;
};

struct Dataset {
    ToyDataConfig config;
    std::vector<RemovalPair> pairs;
};

namespace detail {

// round to the dyadic grid 2^-24; sums of a few hundred quantized signatures
// stay exactly representable, which makes mixture subtraction exact
inline double quantize(double v) { return std::round(v * 16777216.0) / 16777216.0; }

}  // namespace detail

// Signatures are pure functions of (dataset seed, object id); the pair count
// and scene composition do not affect them.
inline ObjectSignature make_object_signature(const ToyDataConfig& cfg, std::uint32_t object_id) {
    RandomStream rng(cfg.seed, "data/object/" + std::to_string(object_id));
    ObjectSignature sig;
    sig.object_id = object_id;

    sig.audio_sig.resize(cfg.t_a * cfg.c_a);
    for (std::size_t c = 0; c < cfg.c_a; ++c) {
        double amp[3], freq[3], phase[3];
        for (int k = 0; k < 3; ++k) {
            amp[k] = rng.uniform(0.6, 1.6);
            freq[k] = rng.uniform(1.0, 4.0);
            phase[k] = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
        }
        for (std::size_t i = 0; i < cfg.t_a; ++i) {
            const double u = static_cast<double>(i) / static_cast<double>(cfg.t_a);
            double v = 0.0;
            for (int k = 0; k < 3; ++k)
                v += amp[k] * std::sin(2.0 * 3.14159265358979323846 * freq[k] * u + phase[k]);
            sig.audio_sig[i * cfg.c_a + c] = v;
        }
    }

    // one bump per object (shared center/width), random per-channel amplitude
    const double center = rng.uniform(0.25, 0.75);
    const double width = rng.uniform(0.12, 0.22);
    std::vector<double> chan_amp(cfg.c_v);
    for (double& a : chan_amp) a = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.8, 1.8);

    sig.video_sig.resize(cfg.t_v * cfg.c_v);
    sig.support_mask.assign(cfg.t_v * cfg.c_v, 0);
    for (std::size_t i = 0; i < cfg.t_v; ++i) {
        const double u = cfg.t_v == 1 ? 0.5
                                      : static_cast<double>(i) / static_cast<double>(cfg.t_v - 1);
        const double g = std::exp(-0.5 * (u - center) * (u - center) / (width * width));
        for (std::size_t c = 0; c < cfg.c_v; ++c) {
            double v = chan_amp[c] * g;
            if (std::abs(v) < 0.1 * std::abs(chan_amp[c])) v = 0.0;  // 10% of peak
            sig.video_sig[i * cfg.c_v + c] = v;
            sig.support_mask[i * cfg.c_v + c] = v != 0.0 ? 1 : 0;
        }
    }
    return sig;
}

// [audio_sig, P_tau(video_sig)], quantized to the dyadic grid
inline LatentState embed_signature(const ToyDataConfig& cfg, const ObjectSignature& sig) {
    std::vector<double> audio(sig.audio_sig.size());
    for (std::size_t i = 0; i < audio.size(); ++i) audio[i] = detail::quantize(sig.audio_sig[i]);
    ProjectorSpec proj{cfg.t_v, cfg.t_a};
    std::vector<double> video = temporal_project(sig.video_sig, proj);
    for (double& v : video) v = detail::quantize(v);
    return LatentState::from_blocks(std::move(audio), std::move(video));
}

// phi_a: orthonormal (one-hot) code of the removed id.
// phi_v: channel-wise mean of mask .* video over masked positions, zero for
// channels with an empty mask. Operates on the raw video grid.
inline ConditionEmbedding encode_condition(std::span<const std::uint8_t> mask,
                                           std::span<const double> raw_video,
                                           std::size_t channels, std::uint32_t removed_id,
                                           std::size_t n_objects) {
    if (mask.size() != raw_video.size() || channels == 0 ||
        raw_video.size() % channels != 0)
        throw std::invalid_argument("encode_condition: mask/video shape mismatch");
    ConditionEmbedding cond;
    cond.phi_a.assign(n_objects, 0.0);
    if (removed_id >= n_objects)
        throw std::invalid_argument("encode_condition: removed_id out of range");
    cond.phi_a[removed_id] = 1.0;

    cond.phi_v.assign(channels, 0.0);
    const std::size_t steps = raw_video.size() / channels;
    for (std::size_t c = 0; c < channels; ++c) {
        double acc = 0.0;
        std::size_t count = 0;
        for (std::size_t i = 0; i < steps; ++i) {
            const std::size_t idx = i * channels + c;
            if (mask[idx]) {
                acc += raw_video[idx];
                ++count;
            }
        }
        cond.phi_v[c] = count == 0 ? 0.0 : acc / static_cast<double>(count);
    }
    return cond;
}

// Pure function of the config: scenes of N distinct objects, x0 the full
// mixture, x1 = x0 - embedded removed signature (exact), condition from the
// removed object's mask over the raw source video.
inline Dataset generate_dataset(const ToyDataConfig& cfg) {
    cfg.validate();
    Dataset ds;
    ds.config = cfg;
    ds.pairs.reserve(cfg.n_pairs);

    std::vector<ObjectSignature> sigs;
    std::vector<LatentState> embeds;
    sigs.reserve(cfg.n_objects);
    for (std::uint32_t id = 0; id < cfg.n_objects; ++id) {
        sigs.push_back(make_object_signature(cfg, id));
        embeds.push_back(embed_signature(cfg, sigs.back()));
    }

    std::vector<std::uint32_t> ids(cfg.n_objects);
    for (std::uint32_t i = 0; i < cfg.n_objects; ++i) ids[i] = i;

    for (std::size_t p = 0; p < cfg.n_pairs; ++p) {
        RandomStream rng(cfg.seed, "data/pair/" + std::to_string(p));
        // partial Fisher-Yates: first N entries are the scene, without replacement
        std::vector<std::uint32_t> scene = ids;
        for (std::size_t i = 0; i < cfg.objects_per_scene; ++i) {
            const std::size_t j =
                i + static_cast<std::size_t>(rng.uniform_below(scene.size() - i));
            std::swap(scene[i], scene[j]);
        }
        scene.resize(cfg.objects_per_scene);
        std::sort(scene.begin(), scene.end());
        const std::uint32_t removed =
            scene[static_cast<std::size_t>(rng.uniform_below(scene.size()))];

        RemovalPair pair;
        pair.removed_id = removed;
        pair.x0 = LatentState(cfg.d_a(), cfg.d_v_total());
        std::vector<double> raw_video(cfg.raw_video_len(), 0.0);
        for (std::uint32_t id : scene) {
            auto e = embeds[id].joint();
            auto x0 = pair.x0.joint();
            for (std::size_t i = 0; i < x0.size(); ++i) x0[i] += e[i];
            for (std::size_t i = 0; i < raw_video.size(); ++i)
                raw_video[i] += sigs[id].video_sig[i];
        }
        pair.x1 = pair.x0;
        {
            auto e = embeds[removed].joint();
            auto x1 = pair.x1.joint();
            for (std::size_t i = 0; i < x1.size(); ++i) x1[i] -= e[i];
        }
        pair.cond = encode_condition(sigs[removed].support_mask, raw_video, cfg.c_v, removed,
                                     cfg.n_objects);
        ds.pairs.push_back(std::move(pair));
    }
    return ds;
}

// ---------------------------------------------------------------------------
// On-disk format (little-endian):
//   header: magic "SBDS", version u32, seed u64, n_pairs u64,
//           K u32, N u32, t_a u32, c_a u32, t_v u32, c_v u32
//   records: x0 f64[d], x1 f64[d], removed_id u32,
//            phi_a f64[K], phi_v f64[c_v]
// Sidecar JSON manifest carries the SHA-256 content digest.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_f64(std::string& out, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, sizeof bits);
    put_u64(out, bits);
}

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

    std::uint8_t u8() { return byte(); }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(byte()) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(byte()) << (8 * i);
        return v;
    }
    double f64() {
        const std::uint64_t bits = u64();
        double d;
        std::memcpy(&d, &bits, sizeof d);
        return d;
    }
    bool exhausted() const noexcept { return pos_ == data_.size(); }

private:
    std::uint8_t byte() {
        if (pos_ >= data_.size())
            throw std::runtime_error("dataset file truncated");
        return data_[pos_++];
    }
    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline constexpr std::uint32_t kDatasetVersion = 1;

inline std::string serialize_dataset(const Dataset& ds) {
    const ToyDataConfig& cfg = ds.config;
    std::string out;
    out += "SBDS";
    detail::put_u32(out, kDatasetVersion);
    detail::put_u64(out, cfg.seed);
    detail::put_u64(out, static_cast<std::uint64_t>(ds.pairs.size()));
    detail::put_u32(out, static_cast<std::uint32_t>(cfg.n_objects));
    detail::put_u32(out, static_cast<std::uint32_t>(cfg.objects_per_scene));
    detail::put_u32(out, static_cast<std::uint32_t>(cfg.t_a));
    detail::put_u32(out, static_cast<std::uint32_t>(cfg.c_a));
    detail::put_u32(out, static_cast<std::uint32_t>(cfg.t_v));
    detail::put_u32(out, static_cast<std::uint32_t>(cfg.c_v));
    for (const RemovalPair& p : ds.pairs) {
        for (double v : p.x0.joint()) detail::put_f64(out, v);
        for (double v : p.x1.joint()) detail::put_f64(out, v);
        detail::put_u32(out, p.removed_id);
        for (double v : p.cond.phi_a) detail::put_f64(out, v);
        for (double v : p.cond.phi_v) detail::put_f64(out, v);
    }
    return out;
}

// header + n_pairs * record size, in bytes
inline std::size_t expected_dataset_file_size(const ToyDataConfig& cfg) {
    const std::size_t header = 4 + 4 + 8 + 8 + 6 * 4;
    const std::size_t d = cfg.d_a() + cfg.d_v_total();
    const std::size_t record = 8 * (2 * d + cfg.cond_a_dim() + cfg.cond_v_dim()) + 4;
    return header + cfg.n_pairs * record;
}

// Writes the dataset and a sidecar "<path>.manifest.json" with the digest.
// Returns the SHA-256 hex digest of the file contents.
inline std::string write_dataset(const std::filesystem::path& path, const Dataset& ds) {
    const std::string bytes = serialize_dataset(ds);
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("write_dataset: cannot open " + path.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    const std::string digest = sha256_hex(bytes);
    nlohmann::ordered_json manifest;
    manifest["format"] = "sbds";
    manifest["version"] = kDatasetVersion;
    manifest["sha256"] = digest;
    manifest["seed"] = ds.config.seed;
    manifest["n_pairs"] = ds.pairs.size();
    manifest["n_objects"] = ds.config.n_objects;
    manifest["objects_per_scene"] = ds.config.objects_per_scene;
    manifest["t_a"] = ds.config.t_a;
    manifest["c_a"] = ds.config.c_a;
    manifest["t_v"] = ds.config.t_v;
    manifest["c_v"] = ds.config.c_v;
    std::ofstream mf(path.string() + ".manifest.json", std::ios::trunc);
    mf << manifest.dump(2) << "\n";
    return digest;
}

inline Dataset read_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_dataset: cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    detail::ByteReader r(bytes);
    if (bytes.size() < 4 || bytes[0] != 'S' || bytes[1] != 'B' || bytes[2] != 'D' ||
        bytes[3] != 'S')
        throw std::runtime_error("read_dataset: bad magic in " + path.string());
    r.u32();  // magic, already checked
    const std::uint32_t version = r.u32();
    if (version != kDatasetVersion)
        throw std::runtime_error("read_dataset: unsupported version " + std::to_string(version));

    Dataset ds;
    ds.config.seed = r.u64();
    const std::uint64_t n_pairs = r.u64();
    ds.config.n_pairs = n_pairs;
    ds.config.n_objects = r.u32();
    ds.config.objects_per_scene = r.u32();
    ds.config.t_a = r.u32();
    ds.config.c_a = r.u32();
    ds.config.t_v = r.u32();
    ds.config.c_v = r.u32();
    ds.config.validate();

    const std::size_t d_a = ds.config.d_a();
    const std::size_t d_v = ds.config.d_v_total();
    ds.pairs.reserve(n_pairs);
    for (std::uint64_t p = 0; p < n_pairs; ++p) {
        RemovalPair pair;
        pair.x0 = LatentState(d_a, d_v);
        pair.x1 = LatentState(d_a, d_v);
        for (double& v : pair.x0.joint()) v = r.f64();
        for (double& v : pair.x1.joint()) v = r.f64();
        pair.removed_id = r.u32();
        pair.cond.phi_a.resize(ds.config.cond_a_dim());
        for (double& v : pair.cond.phi_a) v = r.f64();
        pair.cond.phi_v.resize(ds.config.cond_v_dim());
        for (double& v : pair.cond.phi_v) v = r.f64();
        ds.pairs.push_back(std::move(pair));
    }
    if (!r.exhausted())
        throw std::runtime_error("read_dataset: trailing bytes in " + path.string());
    return ds;
}

}  // namespace sbfm
