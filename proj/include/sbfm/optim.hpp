#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "sbfm/common.hpp"

namespace sbfm {

struct OptimConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
    double lr_init = 1e-5;
    double lr_peak = 1e-4;
    std::size_t warmup_steps = 5000;
    std::size_t batch_size = 64;
    std::size_t max_epochs = 100;
    double grad_clip = 0.0;  // max L2 norm; 0 disables clipping
    std::uint64_t seed = 42;

    void validate() const {
        if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
            throw std::invalid_argument("OptimConfig: betas must lie in [0, 1)");
        if (!(lr_init <= lr_peak))
            throw std::invalid_argument("OptimConfig: lr_init must be <= lr_peak");
        if (warmup_steps < 1)
            throw std::invalid_argument("OptimConfig: warmup_steps must be >= 1");
        if (batch_size < 1) throw std::invalid_argument("OptimConfig: batch_size must be >= 1");
        if (!(eps > 0.0)) throw std::invalid_argument("OptimConfig: eps must be > 0");
        if (!(weight_decay >= 0.0 && grad_clip >= 0.0))
            throw std::invalid_argument("OptimConfig: weight_decay and grad_clip must be >= 0");
    }
};

// Linear ramp from lr_init at step 0 to lr_peak at warmup_steps, constant
// lr_peak afterward.
inline double lr_at(std::size_t step, const OptimConfig& config) {
    if (step >= config.warmup_steps) return config.lr_peak;
    const double frac = static_cast<double>(step) / static_cast<double>(config.warmup_steps);
    return config.lr_init + frac * (config.lr_peak - config.lr_init);
}

struct AdamMoments {
    std::vector<double> m;
    std::vector<double> v;
    std::size_t step = 0;  // completed steps

    explicit AdamMoments(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

// One decoupled-weight-decay Adam update. Decay is applied to the parameters
// before the adaptive term, so with zero gradients the parameters shrink by
// exactly (1 - lr * wd) per step. Bias correction uses the 1-based step count.
inline void optimizer_step(std::span<double> params, std::span<const double> grads,
                           AdamMoments& moments, const OptimConfig& config) {
    if (params.size() != grads.size() || params.size() != moments.m.size())
        throw std::invalid_argument("optimizer_step: layout mismatch");
    if (!all_finite(grads.data(), grads.size()))
        throw numeric_error("optimizer_step: non-finite gradient at step " +
                            std::to_string(moments.step));

    const double lr = lr_at(moments.step, config);
    const std::size_t t = moments.step + 1;
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));

    for (std::size_t i = 0; i < params.size(); ++i) {
        params[i] -= lr * config.weight_decay * params[i];
        moments.m[i] = config.beta1 * moments.m[i] + (1.0 - config.beta1) * grads[i];
        moments.v[i] = config.beta2 * moments.v[i] + (1.0 - config.beta2) * grads[i] * grads[i];
        const double m_hat = moments.m[i] / bc1;
        const double v_hat = moments.v[i] / bc2;
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + config.eps);
    }
    moments.step = t;
}

// Scale gradients in place so their global L2 norm is at most max_norm.
inline void clip_gradient(std::span<double> grads, double max_norm) {
    if (max_norm <= 0.0) return;
    double sq = 0.0;
    for (double g : grads) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm <= max_norm) return;
    const double scale = max_norm / norm;
    for (double& g : grads) g *= scale;
}

}  // namespace sbfm
