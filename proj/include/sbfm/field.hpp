#pragma once

/*
 * field.hpp — the trainable velocity field.
 *
 * A shared dense trunk consumes [x, time_embedding(t) + phi_a, phi_v] and two
 * dense heads map the trunk output to per-modality velocities (v_a, v_v).
 * phi_a is added into the time embedding, phi_v is concatenated to the trunk
 * input. In `linear` head mode both heads are replaced by a single linear
 * layer whose output is split along the block boundary.
 *
 * Parameters live in one flat f64 vector with an explicit layout table;
 * gradients are computed by hand-written backprop in the same layout.
 */

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sbfm/common.hpp"
#include "sbfm/latent.hpp"
#include "sbfm/rng.hpp"

namespace sbfm {

enum class Activation { Tanh, GeluApprox };
enum class HeadMode { Mlp, Linear };

struct FieldConfig {
    std::size_t d_a = 32;
    std::size_t d_v_total = 128;
    std::size_t trunk_width = 128;
    std::size_t trunk_depth = 3;
    std::size_t head_width = 64;
    std::size_t head_depth = 2;
    std::size_t cond_a_dim = 8;
    std::size_t cond_v_dim = 4;
    std::size_t time_embed_dim = 32;
    Activation activation = Activation::Tanh;
    HeadMode heads = HeadMode::Mlp;

    std::size_t latent_dim() const noexcept { return d_a + d_v_total; }
    std::size_t trunk_in_dim() const noexcept {
        return latent_dim() + time_embed_dim + cond_v_dim;
    }

    void validate() const {
        for (std::size_t v : {d_a, d_v_total, trunk_width, trunk_depth, head_width, head_depth,
                              cond_a_dim, cond_v_dim, time_embed_dim})
            if (v == 0) throw std::invalid_argument("FieldConfig: all dimensions must be >= 1");
        if (time_embed_dim % 2 != 0)
            throw std::invalid_argument("FieldConfig: time_embed_dim must be even");
        if (cond_a_dim > time_embed_dim)
            throw std::invalid_argument(
                "FieldConfig: cond_a_dim must not exceed time_embed_dim (phi_a is added "
                "into the time embedding)");
    }
};

// Sinusoidal features [sin(w_k t) ..., cos(w_k t) ...] with geometrically
// spaced frequencies in [1, 100]; dim must be even.
inline std::vector<double> time_embedding(double t, std::size_t dim) {
    if (dim == 0 || dim % 2 != 0)
        throw std::invalid_argument("time_embedding: dim must be positive and even");
    const std::size_t half = dim / 2;
    const double w_min = 1.0, w_max = 100.0;
    std::vector<double> out(dim);
    for (std::size_t k = 0; k < half; ++k) {
        const double frac =
            half == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(half - 1);
        const double w = w_min * std::pow(w_max / w_min, frac);
        out[k] = std::sin(w * t);
        out[half + k] = std::cos(w * t);
    }
    return out;
}

struct TensorSpec {
    std::string name;
    std::size_t offset = 0;
    std::size_t rows = 0;  // output dim
    std::size_t cols = 0;  // input dim; 1 for biases

    std::size_t size() const noexcept { return rows * cols; }
};

struct ParamLayout {
    std::vector<TensorSpec> tensors;
    std::size_t total_size = 0;

    std::size_t index_of(std::string_view name) const {
        for (std::size_t i = 0; i < tensors.size(); ++i)
            if (tensors[i].name == name) return i;
        throw std::invalid_argument("ParamLayout: no tensor named '" + std::string(name) + "'");
    }
};

// One dense layer: z = W a_in + b, a_out = f(z) when activated.
struct DenseSpec {
    std::string name;
    std::size_t w_index = 0;
    std::size_t b_index = 0;
    std::size_t in = 0;
    std::size_t out = 0;
    bool activated = false;
};

struct FieldArchitecture {
    ParamLayout layout;
    std::vector<DenseSpec> trunk;
    std::vector<DenseSpec> head_a;
    std::vector<DenseSpec> head_v;
    std::optional<DenseSpec> split;  // Linear head mode
};

namespace detail {

inline DenseSpec add_dense(FieldArchitecture& arch, const std::string& name, std::size_t in,
                           std::size_t out, bool activated) {
    DenseSpec spec;
    spec.name = name;
    spec.in = in;
    spec.out = out;
    spec.activated = activated;
    spec.w_index = arch.layout.tensors.size();
    arch.layout.tensors.push_back({name + ".w", arch.layout.total_size, out, in});
    arch.layout.total_size += out * in;
    spec.b_index = arch.layout.tensors.size();
    arch.layout.tensors.push_back({name + ".b", arch.layout.total_size, out, 1});
    arch.layout.total_size += out;
    return spec;
}

}  // namespace detail

inline FieldArchitecture build_architecture(const FieldConfig& cfg) {
    cfg.validate();
    FieldArchitecture arch;
    std::size_t in = cfg.trunk_in_dim();
    for (std::size_t l = 0; l < cfg.trunk_depth; ++l) {
        arch.trunk.push_back(
            detail::add_dense(arch, "trunk." + std::to_string(l), in, cfg.trunk_width, true));
        in = cfg.trunk_width;
    }
    if (cfg.heads == HeadMode::Linear) {
        arch.split = detail::add_dense(arch, "split", cfg.trunk_width, cfg.latent_dim(), false);
        return arch;
    }
    for (const auto& [head, prefix, out_dim] :
         {std::tuple{&arch.head_a, "head_a.", cfg.d_a},
          std::tuple{&arch.head_v, "head_v.", cfg.d_v_total}}) {
        std::size_t hin = cfg.trunk_width;
        for (std::size_t l = 0; l + 1 < cfg.head_depth; ++l) {
            head->push_back(
                detail::add_dense(arch, prefix + std::to_string(l), hin, cfg.head_width, true));
            hin = cfg.head_width;
        }
        head->push_back(detail::add_dense(
            arch, prefix + std::to_string(cfg.head_depth - 1), hin, out_dim, false));
    }
    return arch;
}

// Flat parameter vector plus its layout. Value semantics; forward/backward
// never mutate it.
class FieldParams {
public:
    explicit FieldParams(FieldConfig cfg)
        : config_(cfg), arch_(build_architecture(cfg)), values_(arch_.layout.total_size, 0.0) {}

    // Truncated-normal weights scaled by 1/sqrt(fan_in), zero biases; the
    // final layer of each head (or the split layer) stays zero so the initial
    // field is identically zero.
    static FieldParams random_init(FieldConfig cfg, RandomStream& rng) {
        FieldParams p(cfg);
        auto fill = [&](const DenseSpec& spec) {
            const double scale = 1.0 / std::sqrt(static_cast<double>(spec.in));
            auto w = p.tensor(spec.w_index);
            for (double& x : w) x = scale * rng.truncated_normal();
        };
        for (const auto& spec : p.arch_.trunk) fill(spec);
        auto fill_head = [&](const std::vector<DenseSpec>& head) {
            for (std::size_t l = 0; l + 1 < head.size(); ++l) fill(head[l]);
        };
        fill_head(p.arch_.head_a);
        fill_head(p.arch_.head_v);
        return p;
    }

    const FieldConfig& config() const noexcept { return config_; }
    const FieldArchitecture& arch() const noexcept { return arch_; }
    const ParamLayout& layout() const noexcept { return arch_.layout; }

    std::vector<double>& values() noexcept { return values_; }
    const std::vector<double>& values() const noexcept { return values_; }

    std::span<double> tensor(std::size_t index) {
        const TensorSpec& ts = arch_.layout.tensors.at(index);
        return {values_.data() + ts.offset, ts.size()};
    }
    std::span<const double> tensor(std::size_t index) const {
        const TensorSpec& ts = arch_.layout.tensors.at(index);
        return {values_.data() + ts.offset, ts.size()};
    }
    std::span<double> tensor(std::string_view name) {
        return tensor(arch_.layout.index_of(name));
    }
    std::span<const double> tensor(std::string_view name) const {
        return tensor(arch_.layout.index_of(name));
    }

private:
    FieldConfig config_;
    FieldArchitecture arch_;
    std::vector<double> values_;
};

struct Velocity {
    std::vector<double> audio;
    std::vector<double> video;
};

namespace detail {

inline double activate(Activation act, double z) {
    switch (act) {
        case Activation::Tanh:
            return std::tanh(z);
        case Activation::GeluApprox: {
            const double c = 0.7978845608028654;  // sqrt(2/pi)
            const double u = c * (z + 0.044715 * z * z * z);
            return 0.5 * z * (1.0 + std::tanh(u));
        }
    }
    return 0.0;
}

inline double activate_grad(Activation act, double z) {
    switch (act) {
        case Activation::Tanh: {
            const double a = std::tanh(z);
            return 1.0 - a * a;
        }
        case Activation::GeluApprox: {
            const double c = 0.7978845608028654;
            const double u = c * (z + 0.044715 * z * z * z);
            const double th = std::tanh(u);
            const double sech2 = 1.0 - th * th;
            return 0.5 * (1.0 + th) + 0.5 * z * sech2 * c * (1.0 + 3.0 * 0.044715 * z * z);
        }
    }
    return 0.0;
}

// z = W a + b
inline void dense_apply(const FieldParams& p, const DenseSpec& spec, std::span<const double> a,
                        std::vector<double>& z) {
    auto w = p.tensor(spec.w_index);
    auto b = p.tensor(spec.b_index);
    z.assign(spec.out, 0.0);
    for (std::size_t o = 0; o < spec.out; ++o) {
        const double* row = w.data() + o * spec.in;
        double acc = b[o];
        for (std::size_t i = 0; i < spec.in; ++i) acc += row[i] * a[i];
        z[o] = acc;
    }
}

struct ForwardCache {
    std::vector<double> input;
    // one (pre-activation, activation) pair per dense layer, in graph order:
    // trunk, then head_a, then head_v (or the split layer)
    std::vector<std::vector<double>> z;
    std::vector<std::vector<double>> a;
    Velocity out;
};

inline std::vector<double> assemble_input(const FieldConfig& cfg, const LatentState& x, double t,
                                          const ConditionEmbedding& cond) {
    if (x.d_a() != cfg.d_a || x.d_v() != cfg.d_v_total)
        throw std::invalid_argument("field forward: latent shape does not match config");
    if (cond.phi_a.size() != cfg.cond_a_dim || cond.phi_v.size() != cfg.cond_v_dim)
        throw std::invalid_argument("field forward: condition shape does not match config");
    std::vector<double> in;
    in.reserve(cfg.trunk_in_dim());
    auto j = x.joint();
    in.insert(in.end(), j.begin(), j.end());
    std::vector<double> te = time_embedding(t, cfg.time_embed_dim);
    for (std::size_t i = 0; i < cfg.cond_a_dim; ++i) te[i] += cond.phi_a[i];
    in.insert(in.end(), te.begin(), te.end());
    in.insert(in.end(), cond.phi_v.begin(), cond.phi_v.end());
    return in;
}

inline void run_layer(const FieldParams& p, const DenseSpec& spec, std::span<const double> a_in,
                      ForwardCache& cache) {
    std::vector<double> z;
    dense_apply(p, spec, a_in, z);
    if (!all_finite(z.data(), z.size()))
        throw numeric_error("field forward: non-finite activation in layer " + spec.name);
    std::vector<double> a(z.size());
    if (spec.activated)
        for (std::size_t i = 0; i < z.size(); ++i)
            a[i] = activate(p.config().activation, z[i]);
    else
        a = z;
    cache.z.push_back(std::move(z));
    cache.a.push_back(std::move(a));
}

inline ForwardCache forward_cached(const FieldParams& p, const LatentState& x, double t,
                                   const ConditionEmbedding& cond) {
    const FieldConfig& cfg = p.config();
    const FieldArchitecture& arch = p.arch();
    ForwardCache cache;
    cache.input = assemble_input(cfg, x, t, cond);

    std::span<const double> cur = cache.input;
    for (const auto& spec : arch.trunk) {
        run_layer(p, spec, cur, cache);
        cur = cache.a.back();
    }
    const std::size_t trunk_out_index = cache.a.size() - 1;

    if (arch.split) {
        run_layer(p, *arch.split, cache.a[trunk_out_index], cache);
        const auto& s = cache.a.back();
        cache.out.audio.assign(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(cfg.d_a));
        cache.out.video.assign(s.begin() + static_cast<std::ptrdiff_t>(cfg.d_a), s.end());
        return cache;
    }

    cur = cache.a[trunk_out_index];
    for (const auto& spec : arch.head_a) {
        run_layer(p, spec, cur, cache);
        cur = cache.a.back();
    }
    cache.out.audio = cache.a.back();

    cur = cache.a[trunk_out_index];
    for (const auto& spec : arch.head_v) {
        run_layer(p, spec, cur, cache);
        cur = cache.a.back();
    }
    cache.out.video = cache.a.back();
    return cache;
}

}  // namespace detail

// Evaluate the field: (x, t, condition) -> per-modality velocities.
inline Velocity forward(const FieldParams& params, const LatentState& x, double t,
                        const ConditionEmbedding& cond) {
    return detail::forward_cached(params, x, t, cond).out;
}

// One training sample for the gradient pass. Residuals are (v_pred - u_target)
// per modality, already computed against the same parameter vector.
struct BackwardItem {
    LatentState x;
    double t = 0.0;
    ConditionEmbedding cond;
    std::vector<double> residual_a;
    std::vector<double> residual_v;
    double lambda = 1.0;
};

namespace detail {

// delta enters as dL/da_out and leaves as dL/da_in
inline void dense_backward(const FieldParams& p, const DenseSpec& spec,
                           std::span<const double> a_in, std::span<const double> z,
                           std::vector<double>& delta, std::span<double> grad) {
    const TensorSpec& wt = p.layout().tensors[spec.w_index];
    const TensorSpec& bt = p.layout().tensors[spec.b_index];
    auto w = p.tensor(spec.w_index);

    std::vector<double> e(spec.out);
    for (std::size_t o = 0; o < spec.out; ++o)
        e[o] = spec.activated ? delta[o] * activate_grad(p.config().activation, z[o]) : delta[o];

    double* gw = grad.data() + wt.offset;
    double* gb = grad.data() + bt.offset;
    for (std::size_t o = 0; o < spec.out; ++o) {
        const double eo = e[o];
        double* grow = gw + o * spec.in;
        for (std::size_t i = 0; i < spec.in; ++i) grow[i] += eo * a_in[i];
        gb[o] += eo;
    }
    std::vector<double> din(spec.in, 0.0);
    for (std::size_t o = 0; o < spec.out; ++o) {
        const double eo = e[o];
        const double* row = w.data() + o * spec.in;
        for (std::size_t i = 0; i < spec.in; ++i) din[i] += row[i] * eo;
    }
    delta = std::move(din);
}

// Backprop one chain of layers; `first_cache` is the index of the chain's
// first layer inside the cache, `delta` starts as dL/d(chain output).
inline std::vector<double> chain_backward(const FieldParams& p,
                                          const std::vector<DenseSpec>& chain,
                                          const ForwardCache& cache, std::size_t first_cache,
                                          std::span<const double> chain_input,
                                          std::vector<double> delta, std::span<double> grad) {
    for (std::size_t l = chain.size(); l-- > 0;) {
        std::span<const double> a_in =
            l == 0 ? chain_input : std::span<const double>(cache.a[first_cache + l - 1]);
        dense_backward(p, chain[l], a_in, cache.z[first_cache + l], delta, grad);
    }
    return delta;
}

inline void backward_accumulate(const FieldParams& p, const BackwardItem& item,
                                double inv_batch, std::span<double> grad) {
    const FieldConfig& cfg = p.config();
    const FieldArchitecture& arch = p.arch();
    if (item.residual_a.size() != cfg.d_a || item.residual_v.size() != cfg.d_v_total)
        throw std::invalid_argument("field backward: residual shape does not match config");

    ForwardCache cache = forward_cached(p, item.x, item.t, item.cond);
    const std::size_t trunk_out_index = arch.trunk.size() - 1;
    std::span<const double> trunk_out = cache.a[trunk_out_index];

    // d/dv of (1/B) sum_i (|ra|^2 + lambda |rv|^2) with residuals held fixed
    std::vector<double> g_a(cfg.d_a), g_v(cfg.d_v_total);
    for (std::size_t i = 0; i < cfg.d_a; ++i) g_a[i] = 2.0 * inv_batch * item.residual_a[i];
    for (std::size_t i = 0; i < cfg.d_v_total; ++i)
        g_v[i] = 2.0 * item.lambda * inv_batch * item.residual_v[i];

    std::vector<double> delta_trunk;
    if (arch.split) {
        std::vector<double> g(cfg.latent_dim());
        std::copy(g_a.begin(), g_a.end(), g.begin());
        std::copy(g_v.begin(), g_v.end(), g.begin() + static_cast<std::ptrdiff_t>(cfg.d_a));
        dense_backward(p, *arch.split, trunk_out, cache.z[trunk_out_index + 1], g, grad);
        delta_trunk = std::move(g);
    } else {
        const std::size_t ha_first = arch.trunk.size();
        const std::size_t hv_first = ha_first + arch.head_a.size();
        std::vector<double> da = chain_backward(p, arch.head_a, cache, ha_first, trunk_out,
                                                std::move(g_a), grad);
        std::vector<double> dv = chain_backward(p, arch.head_v, cache, hv_first, trunk_out,
                                                std::move(g_v), grad);
        delta_trunk.resize(cfg.trunk_width);
        for (std::size_t i = 0; i < cfg.trunk_width; ++i) delta_trunk[i] = da[i] + dv[i];
    }
    chain_backward(p, arch.trunk, cache, 0, cache.input, std::move(delta_trunk), grad);
}

}  // namespace detail

// Gradient of the batch-mean weighted squared residual, same layout as the
// parameter vector. Items are accumulated in order.
inline std::vector<double> backward(const FieldParams& params,
                                    std::span<const BackwardItem> batch) {
    std::vector<double> grad(params.layout().total_size, 0.0);
    if (batch.empty()) return grad;
    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    for (const BackwardItem& item : batch)
        detail::backward_accumulate(params, item, inv_batch, grad);
    return grad;
}

}  // namespace sbfm
