#pragma once

#include <cstddef>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "sbfm/bridge.hpp"
#include "sbfm/common.hpp"
#include "sbfm/latent.hpp"
#include "sbfm/rng.hpp"

namespace sbfm {

// Uniform-step integration grid. Sampling runs on [eps, 1-eps] because the
// conditional flow (and any field trained on it) is only defined on clamped
// times; the state at t_end stands in for the t=1 output.
struct IntegrationPlan {
    std::size_t n_steps = 30;
    double t_start = 1e-3;
    double t_end = 1.0 - 1e-3;
    bool record_path = false;

    void validate() const {
        if (n_steps < 1) throw std::invalid_argument("IntegrationPlan: n_steps must be >= 1");
        if (!(t_start < t_end))
            throw std::invalid_argument("IntegrationPlan: t_start must be < t_end");
    }

    double step() const noexcept {
        return (t_end - t_start) / static_cast<double>(n_steps);
    }

    // grid time; evaluates to t_end exactly at k = n_steps
    double time_at(std::size_t k) const noexcept {
        return t_start +
               (static_cast<double>(k) * (t_end - t_start)) / static_cast<double>(n_steps);
    }
};

// Recorded path. With record_path the states cover the full grid
// (n_steps + 1 entries); otherwise only the initial and final states are kept.
struct Trajectory {
    std::vector<double> times;
    std::vector<LatentState> states;

    const LatentState& endpoint() const { return states.back(); }
};

namespace detail {

inline void check_finite_state(const LatentState& x, std::size_t step) {
    auto j = x.joint();
    if (!all_finite(j.data(), j.size()))
        throw divergence_error(step, "non-finite state");
}

}  // namespace detail

// Forward Euler: x_{k+1} = x_k + h * field(x_k, t_k).
// `field` maps (const LatentState&, double t) -> LatentState.
template <typename Field>
Trajectory euler_ode(Field&& field, const LatentState& x_init, const IntegrationPlan& plan) {
    plan.validate();
    const double h = plan.step();
    Trajectory traj;
    traj.times.reserve(plan.record_path ? plan.n_steps + 1 : 2);
    traj.states.reserve(plan.record_path ? plan.n_steps + 1 : 2);
    traj.times.push_back(plan.time_at(0));
    traj.states.push_back(x_init);

    LatentState x = x_init;
    for (std::size_t k = 0; k < plan.n_steps; ++k) {
        const double t = plan.time_at(k);
        const LatentState v = field(static_cast<const LatentState&>(x), t);
        require_same_partition(x, v, "euler_ode");
        auto xs = x.joint();
        auto vs = v.joint();
        for (std::size_t i = 0; i < xs.size(); ++i) xs[i] += h * vs[i];
        detail::check_finite_state(x, k);
        if (plan.record_path) {
            traj.times.push_back(plan.time_at(k + 1));
            traj.states.push_back(x);
        }
    }
    if (!plan.record_path) {
        traj.times.push_back(plan.time_at(plan.n_steps));
        traj.states.push_back(std::move(x));
    }
    return traj;
}

// Euler-Maruyama on the pinned SDE:
// x_{k+1} = x_k + h (x1 - x_k)/(1 - t_k) + sigma sqrt(h) z_k.
// sigma = 0 consumes no randomness and reduces to plain Euler on the drift.
inline Trajectory euler_maruyama_sde(const EndpointPair& pair, const BridgeSchedule& schedule,
                                     const LatentState& x_init, const IntegrationPlan& plan,
                                     RandomStream& rng) {
    plan.validate();
    schedule.validate();
    if (plan.t_end > 1.0 - schedule.eps_clamp)
        throw std::invalid_argument("euler_maruyama_sde: t_end must be <= 1 - eps");
    const double h = plan.step();
    const double noise_scale = schedule.sigma * std::sqrt(h);

    Trajectory traj;
    traj.times.push_back(plan.time_at(0));
    traj.states.push_back(x_init);

    LatentState x = x_init;
    for (std::size_t k = 0; k < plan.n_steps; ++k) {
        const double t = plan.time_at(k);
        const LatentState drift = bridge_sde_drift(pair, x, t, schedule.eps_clamp);
        auto xs = x.joint();
        auto ds = drift.joint();
        if (schedule.sigma > 0.0) {
            for (std::size_t i = 0; i < xs.size(); ++i)
                xs[i] += h * ds[i] + noise_scale * rng.normal();
        } else {
            for (std::size_t i = 0; i < xs.size(); ++i) xs[i] += h * ds[i];
        }
        detail::check_finite_state(x, k);
        if (plan.record_path) {
            traj.times.push_back(plan.time_at(k + 1));
            traj.states.push_back(x);
        }
    }
    if (!plan.record_path) {
        traj.times.push_back(plan.time_at(plan.n_steps));
        traj.states.push_back(std::move(x));
    }
    return traj;
}

// Lockstep core shared by the per-modality samplers: one joint velocity
// callback (const LatentState&, double) -> (audio block, video block).
template <typename JointField>
Trajectory lockstep_simulate(JointField&& field, const LatentState& x_init,
                             const IntegrationPlan& plan) {
    plan.validate();
    const double h = plan.step();
    Trajectory traj;
    traj.times.push_back(plan.time_at(0));
    traj.states.push_back(x_init);

    LatentState x = x_init;
    for (std::size_t k = 0; k < plan.n_steps; ++k) {
        const double t = plan.time_at(k);
        const auto [va, vv] = field(static_cast<const LatentState&>(x), t);
        if (va.size() != x.d_a() || vv.size() != x.d_v())
            throw std::invalid_argument("lockstep_simulate: block shape mismatch");
        auto a = x.audio();
        auto v = x.video();
        for (std::size_t i = 0; i < a.size(); ++i) a[i] += h * va[i];
        for (std::size_t i = 0; i < v.size(); ++i) v[i] += h * vv[i];
        detail::check_finite_state(x, k);
        if (plan.record_path) {
            traj.times.push_back(plan.time_at(k + 1));
            traj.states.push_back(x);
        }
    }
    if (!plan.record_path) {
        traj.times.push_back(plan.time_at(plan.n_steps));
        traj.states.push_back(std::move(x));
    }
    return traj;
}

// Advance the two blocks in lockstep on one shared grid, the audio block by
// field_a and the video block by field_v. Both callbacks see the full joint
// state and return only their own block's velocity (std::vector<double>).
template <typename FieldA, typename FieldV>
Trajectory per_modality_simulate(FieldA&& field_a, FieldV&& field_v, const LatentState& x_init,
                                 const IntegrationPlan& plan) {
    return lockstep_simulate(
        [&](const LatentState& x, double t) {
            return std::pair<std::vector<double>, std::vector<double>>(field_a(x, t),
                                                                       field_v(x, t));
        },
        x_init, plan);
}

template <typename FieldA, typename FieldV>
LatentState per_modality_sample(FieldA&& field_a, FieldV&& field_v, const LatentState& x_init,
                                const IntegrationPlan& plan) {
    IntegrationPlan endpoint_plan = plan;
    endpoint_plan.record_path = false;
    return per_modality_simulate(field_a, field_v, x_init, endpoint_plan).endpoint();
}

// One CSV per run: path_id, step, t, coord_0..coord_{d-1}.
inline void write_trajectory_csv(std::ostream& os, std::span<const Trajectory> paths) {
    if (paths.empty()) return;
    const std::size_t d = paths.front().states.front().dim();
    os << "path_id,step,t";
    for (std::size_t i = 0; i < d; ++i) os << ",coord_" << i;
    os << "\n";
    os.precision(17);
    for (std::size_t p = 0; p < paths.size(); ++p) {
        const Trajectory& traj = paths[p];
        for (std::size_t k = 0; k < traj.states.size(); ++k) {
            os << p << "," << k << "," << traj.times[k];
            for (double v : traj.states[k].joint()) os << "," << v;
            os << "\n";
        }
    }
}

}  // namespace sbfm
