#pragma once

/*
 * verify.hpp — the identity suite behind `sbfm verify` and the acceptance
 * checks: the closed-form derivation chain, the SDE marginal law, the
 * sigma -> 0 degeneration, Euler's first-order rate on the oracle field, the
 * finite-difference score oracle, and the energy-distance calibration.
 */

#include <chrono>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "sbfm/bridge.hpp"
#include "sbfm/integrate.hpp"
#include "sbfm/metrics.hpp"
#include "sbfm/objective.hpp"
#include "sbfm/rng.hpp"

namespace sbfm {

struct VerifyCheck {
    std::string name;
    bool passed = false;
    double value = 0.0;  // measured quantity (deviation, error, ratio, ...)
    double limit = 0.0;  // the bound it is held to
    double seconds = 0.0;
    std::string detail;
};

namespace detail {

class Stopwatch {
public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

inline EndpointPair random_endpoints(RandomStream& rng, std::size_t d_a, std::size_t d_v,
                                     double scale) {
    LatentState x0(d_a, d_v), x1(d_a, d_v);
    for (double& v : x0.joint()) v = scale * rng.normal();
    for (double& v : x1.joint()) v = scale * rng.normal();
    return EndpointPair(std::move(x0), std::move(x1));
}

}  // namespace detail

// drift - (sigma^2/2) score = SB flow and SB flow = CFM flow + correction,
// over randomized (pair, x, t, sigma) draws.
inline VerifyCheck check_derivation_chain(std::uint64_t seed, std::size_t n_draws = 10000,
                                          double tolerance = 1e-10) {
    detail::Stopwatch watch;
    RandomStream rng(seed, "verify/chain");
    double worst = 0.0;
    for (std::size_t n = 0; n < n_draws; ++n) {
        const BridgeSchedule schedule{rng.uniform(0.05, 2.0), 1e-3};
        const EndpointPair pair = detail::random_endpoints(rng, 2, 3, 1.5);
        const ChainCheckResult r = derivation_chain_check(pair, schedule, 1, rng, tolerance);
        worst = std::max(worst, r.max_deviation);
    }
    VerifyCheck check;
    check.name = "derivation-chain identities";
    check.value = worst;
    check.limit = tolerance;
    check.passed = worst < tolerance;
    check.seconds = watch.seconds();
    std::ostringstream os;
    os << n_draws << " randomized (pair, x, t, sigma) draws, max |deviation| = " << worst;
    check.detail = os.str();
    return check;
}

// 20000 Euler-Maruyama paths (d=2, sigma=1, 200 steps) against
// N(mu_t, sigma^2 t(1-t)) at t in {0.25, 0.5, 0.75}: per-coordinate mean
// within 3 sqrt(var/n), variance within 5% relative.
inline VerifyCheck check_sde_marginal_law(std::uint64_t seed, std::size_t n_paths = 20000) {
    detail::Stopwatch watch;
    // h = 0.25/51 puts 0.25, 0.5, 0.75 on the 200-step grid with t_end < 1-eps
    const double h = 0.25 / 51.0;
    IntegrationPlan plan{200, 0.0, 200.0 * h, true};
    const BridgeSchedule schedule{1.0, 1e-3};
    const EndpointPair pair(LatentState::from_blocks({-1.0}, {2.0}),
                            LatentState::from_blocks({1.5}, {-0.5}));

    RandomStream rng(seed, "verify/sde-marginals");
    const std::size_t checkpoints[3] = {51, 102, 153};
    double mean[3][2] = {};
    double sq[3][2] = {};
    for (std::size_t path = 0; path < n_paths; ++path) {
        const Trajectory traj = euler_maruyama_sde(pair, schedule, pair.x0, plan, rng);
        for (int c = 0; c < 3; ++c)
            for (int i = 0; i < 2; ++i) {
                const double s = traj.states[checkpoints[c]][static_cast<std::size_t>(i)];
                mean[c][i] += s;
                sq[c][i] += s * s;
            }
    }

    VerifyCheck check;
    check.name = "SDE marginal law";
    check.limit = 1.0;  // normalized: worst (mean error / bound, var error / 5%)
    double worst = 0.0;
    std::ostringstream os;
    for (int c = 0; c < 3; ++c) {
        const double t = plan.time_at(checkpoints[c]);
        const LatentState mu = mean_path(pair, t);
        const double var = marginal_variance(schedule, t);
        for (int i = 0; i < 2; ++i) {
            const double m = mean[c][i] / static_cast<double>(n_paths);
            const double v = sq[c][i] / static_cast<double>(n_paths) - m * m;
            const double mean_bound = 3.0 * std::sqrt(var / static_cast<double>(n_paths));
            worst = std::max(worst, std::abs(m - mu[static_cast<std::size_t>(i)]) / mean_bound);
            worst = std::max(worst, std::abs(v - var) / var / 0.05);
        }
        os << " t=" << t << " ok;";
    }
    check.value = worst;
    check.passed = worst < 1.0;
    check.seconds = watch.seconds();
    check.detail = std::to_string(n_paths) + " paths, worst normalized deviation " +
                   std::to_string(worst);
    return check;
}

// SBFM targets with sigma = 0 equal CFM targets bitwise.
inline VerifyCheck check_sigma0_degeneration(std::uint64_t seed, std::size_t n_draws = 10000) {
    detail::Stopwatch watch;
    RandomStream pair_rng(seed, "verify/sigma0-pairs");
    LossConfig sb_cfg;
    sb_cfg.kind = ObjectiveKind::Sbfm;
    sb_cfg.schedule.sigma = 0.0;
    LossConfig cfm_cfg = sb_cfg;
    cfm_cfg.kind = ObjectiveKind::Cfm;

    std::size_t mismatches = 0;
    for (std::size_t n = 0; n < n_draws; ++n) {
        const EndpointPair pair = detail::random_endpoints(pair_rng, 2, 2, 1.5);
        RandomStream t1(seed + n, "verify/t"), z1(seed + n, "verify/z");
        RandomStream t2(seed + n, "verify/t"), z2(seed + n, "verify/z");
        const TrainingPoint a = draw_training_point(pair, sb_cfg, t1, z1);
        const TrainingPoint b = draw_training_point(pair, cfm_cfg, t2, z2);
        if (a.t != b.t || !(a.x_t == b.x_t) || a.u_target_a != b.u_target_a ||
            a.u_target_v != b.u_target_v)
            ++mismatches;
    }
    VerifyCheck check;
    check.name = "sigma=0 degeneration (bitwise)";
    check.value = static_cast<double>(mismatches);
    check.limit = 1.0;
    check.passed = mismatches == 0;
    check.seconds = watch.seconds();
    check.detail = std::to_string(n_draws) + " draws, " + std::to_string(mismatches) +
                   " target mismatches";
    return check;
}

// Endpoint-error ratio between 30 and 60 Euler steps on the exact conditional
// flow, averaged over Gaussian endpoint pairs; first order means ~2.
inline VerifyCheck check_euler_order(std::uint64_t seed, std::size_t n_pairs = 1000,
                                     double lo = 1.7, double hi = 2.3) {
    detail::Stopwatch watch;
    const BridgeSchedule schedule{0.1, 1e-3};
    IntegrationPlan plan30{30, schedule.eps_clamp, 1.0 - schedule.eps_clamp, false};
    IntegrationPlan plan60 = plan30;
    plan60.n_steps = 60;
    RandomStream rng30(seed, "verify/euler-order");
    RandomStream rng60(seed, "verify/euler-order");
    const double e30 = gaussian_bridge_transport_check(schedule, plan30, n_pairs, 4, rng30);
    const double e60 = gaussian_bridge_transport_check(schedule, plan60, n_pairs, 4, rng60);

    VerifyCheck check;
    check.name = "Euler first-order rate";
    check.value = e30 / e60;
    check.limit = hi;
    check.passed = check.value >= lo && check.value <= hi;
    check.seconds = watch.seconds();
    std::ostringstream os;
    os << "mean endpoint error " << e30 << " (30 steps) vs " << e60 << " (60 steps), ratio "
       << check.value << " in [" << lo << ", " << hi << "]";
    check.detail = os.str();
    return check;
}

// Oracle-field transport error at 30 steps, sigma = 0.1, d = 4.
inline VerifyCheck check_oracle_transport(std::uint64_t seed, std::size_t n_pairs = 1000,
                                          double limit = 5e-2) {
    detail::Stopwatch watch;
    const BridgeSchedule schedule{0.1, 1e-3};
    IntegrationPlan plan{30, schedule.eps_clamp, 1.0 - schedule.eps_clamp, false};
    RandomStream rng(seed, "verify/transport");
    const double err = gaussian_bridge_transport_check(schedule, plan, n_pairs, 4, rng);
    VerifyCheck check;
    check.name = "oracle-field transport";
    check.value = err;
    check.limit = limit;
    check.passed = err < limit;
    check.seconds = watch.seconds();
    check.detail = "mean endpoint error " + std::to_string(err) + " over " +
                   std::to_string(n_pairs) + " Gaussian pairs";
    return check;
}

// Analytic score vs central finite differences of the Gaussian log-density.
inline VerifyCheck check_fd_score(std::uint64_t seed, std::size_t n_points = 100,
                                  double limit = 1e-6) {
    detail::Stopwatch watch;
    RandomStream rng(seed, "verify/fd-score");
    const BridgeSchedule schedule{0.8, 1e-3};
    double worst = 0.0;
    for (std::size_t n = 0; n < n_points; ++n) {
        const EndpointPair pair = detail::random_endpoints(rng, 2, 2, 1.0);
        const double t = rng.uniform(0.05, 0.95);
        const LatentState x = sample_bridge_point(pair, schedule, t, rng);
        worst = std::max(worst, fd_score_check(pair, schedule, x, t));
    }
    VerifyCheck check;
    check.name = "finite-difference score oracle";
    check.value = worst;
    check.limit = limit;
    check.passed = worst < limit;
    check.seconds = watch.seconds();
    check.detail = std::to_string(n_points) + " randomized points, max rel error " +
                   std::to_string(worst);
    return check;
}

// Calibration of the permutation test: identical distributions stay under the
// 5% threshold, well-separated ones exceed it.
inline VerifyCheck check_energy_distance(std::uint64_t seed) {
    detail::Stopwatch watch;
    RandomStream rng(seed, "verify/energy");
    auto cloud = [&](std::size_t n, double mean) {
        std::vector<std::vector<double>> out(n, std::vector<double>(2));
        for (auto& v : out)
            for (double& x : v) x = mean + rng.normal();
        return out;
    };
    const auto a = cloud(400, 0.0);
    const auto b = cloud(400, 0.0);
    const auto far = cloud(400, 3.0);

    RandomStream perm1(seed, "verify/energy-perm1");
    const double same_stat = energy_distance(a, b);
    const double same_threshold = energy_distance_permutation_threshold(a, b, perm1);
    RandomStream perm2(seed, "verify/energy-perm2");
    const double far_stat = energy_distance(a, far);
    const double far_threshold = energy_distance_permutation_threshold(a, far, perm2);

    VerifyCheck check;
    check.name = "energy-distance permutation calibration";
    check.value = same_stat;
    check.limit = same_threshold;
    check.passed = same_stat < same_threshold && far_stat > far_threshold;
    check.seconds = watch.seconds();
    std::ostringstream os;
    os << "same-dist " << same_stat << " < " << same_threshold << "; separated " << far_stat
       << " > " << far_threshold;
    check.detail = os.str();
    return check;
}

inline std::vector<VerifyCheck> run_verification_suite(std::uint64_t seed) {
    return {check_derivation_chain(seed),  check_sde_marginal_law(seed),
            check_sigma0_degeneration(seed), check_euler_order(seed),
            check_oracle_transport(seed),  check_fd_score(seed),
            check_energy_distance(seed)};
}

}  // namespace sbfm
