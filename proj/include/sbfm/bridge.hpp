#pragma once

/*
 * bridge.hpp — closed-form quantities of the pinned Brownian bridge.
 *
 * For endpoints (x0, x1) and noise scale sigma, the bridge SDE
 *
 *     dX_t = (x1 - X_t)/(1 - t) dt + sigma dW_t,   X_0 = x0,
 *
 * has Gaussian marginals X_t ~ N(mu_t, sigma^2 t(1-t) I) with
 * mu_t = t x1 + (1-t) x0, pinned at both endpoints. Its probability flow
 *
 *     u_t(x) = (x1 - x0) + (1-2t)/(2t(1-t)) * (x - mu_t)
 *
 * is the conditional flow regressed on during training; sigma = 0 collapses
 * it to the straight-line flow u = x1 - x0. The coefficient is singular at
 * t in {0, 1}, so every evaluation is restricted to [eps, 1-eps].
 */

#include <cmath>
#include <stdexcept>
#include <string>

#include "sbfm/latent.hpp"
#include "sbfm/rng.hpp"

namespace sbfm {

// Noise scale and clamping policy of the bridge. sigma = 0 degenerates to the
// deterministic interpolation; eps_clamp bounds the flow coefficient by
// roughly 1/(2 eps).
struct BridgeSchedule {
    double sigma = 0.1;
    double eps_clamp = 1e-3;

    void validate() const {
        if (!(sigma >= 0.0))
            throw std::invalid_argument("BridgeSchedule: sigma must be >= 0");
        if (!(eps_clamp > 0.0 && eps_clamp < 0.5))
            throw std::invalid_argument("BridgeSchedule: eps_clamp must lie in (0, 0.5)");
    }

    bool in_clamped_range(double t) const noexcept {
        return t >= eps_clamp && t <= 1.0 - eps_clamp;
    }

    void require_clamped(double t, const char* where) const {
        if (!in_clamped_range(t))
            throw std::domain_error(std::string(where) + ": t = " + std::to_string(t) +
                                    " outside clamped range [" + std::to_string(eps_clamp) +
                                    ", " + std::to_string(1.0 - eps_clamp) + "]");
    }
};

inline void require_unit_time(double t, const char* where) {
    if (!(t >= 0.0 && t <= 1.0))
        throw std::domain_error(std::string(where) + ": t = " + std::to_string(t) +
                                " outside [0, 1]");
}

// mu_t = t x1 + (1-t) x0
inline LatentState mean_path(const EndpointPair& pair, double t) {
    require_unit_time(t, "mean_path");
    LatentState out(pair.x0.d_a(), pair.x0.d_v());
    auto x0 = pair.x0.joint();
    auto x1 = pair.x1.joint();
    auto o = out.joint();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = t * x1[i] + (1.0 - t) * x0[i];
    return out;
}

// sigma^2 t (1-t); zero at both endpoints
inline double marginal_variance(const BridgeSchedule& schedule, double t) {
    return schedule.sigma * schedule.sigma * t * (1.0 - t);
}

// Draw from N(mu_t, sigma^2 t(1-t) I). The degenerate cases (sigma = 0 or an
// endpoint time) return the mean exactly and consume no randomness.
inline LatentState sample_bridge_point(const EndpointPair& pair, const BridgeSchedule& schedule,
                                       double t, RandomStream& rng) {
    require_unit_time(t, "sample_bridge_point");
    if (t == 0.0) return pair.x0;
    if (t == 1.0) return pair.x1;
    LatentState out = mean_path(pair, t);
    const double var = marginal_variance(schedule, t);
    if (var > 0.0) {
        const double sd = std::sqrt(var);
        for (double& v : out.joint()) v += sd * rng.normal();
    }
    return out;
}

// u^CFM = x1 - x0, independent of t and x
inline LatentState cfm_conditional_flow(const EndpointPair& pair) {
    LatentState out(pair.x0.d_a(), pair.x0.d_v());
    auto x0 = pair.x0.joint();
    auto x1 = pair.x1.joint();
    auto o = out.joint();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = x1[i] - x0[i];
    return out;
}

// u = (x1 - x0) + (1-2t)/(2t(1-t)) * (x - mu_t)
inline LatentState sb_conditional_flow(const EndpointPair& pair, const LatentState& x, double t,
                                       const BridgeSchedule& schedule) {
    schedule.require_clamped(t, "sb_conditional_flow");
    require_same_partition(pair.x0, x, "sb_conditional_flow");
    const double coeff = (1.0 - 2.0 * t) / (2.0 * t * (1.0 - t));
    LatentState out(x.d_a(), x.d_v());
    auto x0 = pair.x0.joint();
    auto x1 = pair.x1.joint();
    auto xs = x.joint();
    auto o = out.joint();
    for (std::size_t i = 0; i < o.size(); ++i) {
        const double mu = t * x1[i] + (1.0 - t) * x0[i];
        o[i] = (x1[i] - x0[i]) + coeff * (xs[i] - mu);
    }
    return out;
}

// Gaussian score of the marginal: -(x - mu_t) / (sigma^2 t(1-t))
inline LatentState conditional_score(const EndpointPair& pair, const LatentState& x, double t,
                                     const BridgeSchedule& schedule) {
    if (schedule.sigma == 0.0)
        throw std::domain_error("conditional_score: degenerate (sigma = 0) marginal has no score");
    schedule.require_clamped(t, "conditional_score");
    require_same_partition(pair.x0, x, "conditional_score");
    const double inv_var = 1.0 / marginal_variance(schedule, t);
    LatentState out(x.d_a(), x.d_v());
    auto x0 = pair.x0.joint();
    auto x1 = pair.x1.joint();
    auto xs = x.joint();
    auto o = out.joint();
    for (std::size_t i = 0; i < o.size(); ++i) {
        const double mu = t * x1[i] + (1.0 - t) * x0[i];
        o[i] = -(xs[i] - mu) * inv_var;
    }
    return out;
}

// Drift of the pinned SDE: (x1 - x) / (1 - t)
inline LatentState bridge_sde_drift(const EndpointPair& pair, const LatentState& x, double t,
                                    double eps_clamp = 1e-3) {
    if (!(t >= 0.0 && t <= 1.0 - eps_clamp))
        throw std::domain_error("bridge_sde_drift: t = " + std::to_string(t) +
                                " outside [0, 1 - eps]");
    require_same_partition(pair.x0, x, "bridge_sde_drift");
    const double inv = 1.0 / (1.0 - t);
    LatentState out(x.d_a(), x.d_v());
    auto x1 = pair.x1.joint();
    auto xs = x.joint();
    auto o = out.joint();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = (x1[i] - xs[i]) * inv;
    return out;
}

}  // namespace sbfm
