#pragma once

/*
 * metrics.hpp — independent verification oracles and evaluation metrics.
 *
 * The derivation-chain checks confirm the algebra the training targets rest
 * on: drift - (sigma^2/2) score = SB flow, and SB flow = straight-line flow
 * plus the (1-2t)/(2t(1-t)) correction. The transport check integrates the
 * exact conditional flow and measures endpoint error. Energy distance with a
 * permutation threshold stands in for the perceptual distribution metrics
 * this artifact does not have.
 */

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "sbfm/bridge.hpp"
#include "sbfm/common.hpp"
#include "sbfm/field.hpp"
#include "sbfm/integrate.hpp"
#include "sbfm/latent.hpp"
#include "sbfm/rng.hpp"
#include "sbfm/threads.hpp"
#include "sbfm/toy_data.hpp"

namespace sbfm {

// Max over coordinates of |fd - analytic| / max(1, |analytic|), comparing the
// analytic conditional score against central finite differences of the
// closed-form Gaussian log-density at step 1e-5.
inline double fd_score_check(const EndpointPair& pair, const BridgeSchedule& schedule,
                             const LatentState& x, double t, double h = 1e-5) {
    const LatentState analytic = conditional_score(pair, x, t, schedule);
    const LatentState mu = mean_path(pair, t);
    const double inv_var = 1.0 / marginal_variance(schedule, t);
    auto log_density = [&](const LatentState& p) {
        double acc = 0.0;
        auto ps = p.joint();
        auto ms = mu.joint();
        for (std::size_t i = 0; i < ps.size(); ++i) {
            const double d = ps[i] - ms[i];
            acc += d * d;
        }
        return -0.5 * acc * inv_var;
    };
    double worst = 0.0;
    LatentState probe = x;
    auto ps = probe.joint();
    auto as = analytic.joint();
    for (std::size_t i = 0; i < ps.size(); ++i) {
        const double orig = ps[i];
        ps[i] = orig + h;
        const double up = log_density(probe);
        ps[i] = orig - h;
        const double down = log_density(probe);
        ps[i] = orig;
        const double fd = (up - down) / (2.0 * h);
        const double err = std::abs(fd - as[i]) / std::max(1.0, std::abs(as[i]));
        worst = std::max(worst, err);
    }
    return worst;
}

struct ChainCheckResult {
    bool ok = false;
    double max_deviation = 0.0;
};

// Verify, at randomized bridge points (x, t), that
//   drift - (sigma^2/2) score == sb_flow, and
//   sb_flow == cfm_flow + (1-2t)/(2t(1-t)) (x - mu_t),
// both to within `tolerance` in the max norm.
inline ChainCheckResult derivation_chain_check(const EndpointPair& pair,
                                               const BridgeSchedule& schedule,
                                               std::size_t n_points, RandomStream& rng,
                                               double tolerance = 1e-10) {
    if (!(schedule.sigma > 0.0))
        throw std::invalid_argument("derivation_chain_check: sigma must be > 0");
    const double eps = schedule.eps_clamp;
    ChainCheckResult result;
    const LatentState cfm = cfm_conditional_flow(pair);
    for (std::size_t n = 0; n < n_points; ++n) {
        const double t = rng.uniform(eps, 1.0 - eps);
        LatentState x = sample_bridge_point(pair, schedule, t, rng);
        for (double& v : x.joint()) v += 0.25 * rng.normal();  // roam off the bridge path

        const LatentState flow = sb_conditional_flow(pair, x, t, schedule);
        const LatentState score = conditional_score(pair, x, t, schedule);
        const LatentState drift = bridge_sde_drift(pair, x, t, schedule.eps_clamp);
        const LatentState mu = mean_path(pair, t);
        const double coeff = (1.0 - 2.0 * t) / (2.0 * t * (1.0 - t));
        const double half_sigma2 = 0.5 * schedule.sigma * schedule.sigma;

        auto f = flow.joint();
        auto s = score.joint();
        auto d = drift.joint();
        auto m = mu.joint();
        auto xs = x.joint();
        auto c = cfm.joint();
        for (std::size_t i = 0; i < f.size(); ++i) {
            const double dev1 = std::abs(d[i] - half_sigma2 * s[i] - f[i]);
            const double dev2 = std::abs(c[i] + coeff * (xs[i] - m[i]) - f[i]);
            result.max_deviation = std::max({result.max_deviation, dev1, dev2});
        }
    }
    result.ok = result.max_deviation < tolerance;
    return result;
}

// Integrate the exact conditional flow (per sampled pair) on [eps, 1-eps] and
// report the mean endpoint error |x(1-eps) - x1| over n_pairs endpoint draws
// from two fixed Gaussians: x0 ~ N(0, I), x1 ~ N(1, 0.0625 I). With sigma = 0
// the oracle field is the straight-line flow, matching its x = mu_t domain.
inline double gaussian_bridge_transport_check(const BridgeSchedule& schedule,
                                              const IntegrationPlan& plan, std::size_t n_pairs,
                                              std::size_t dim, RandomStream& rng) {
    if (dim < 2)
        throw std::invalid_argument("gaussian_bridge_transport_check: dim must be >= 2");
    const std::size_t d_a = dim / 2, d_v = dim - dim / 2;
    double total_err = 0.0;
    for (std::size_t n = 0; n < n_pairs; ++n) {
        LatentState x0(d_a, d_v), x1(d_a, d_v);
        for (double& v : x0.joint()) v = rng.normal();
        for (double& v : x1.joint()) v = 1.0 + 0.25 * rng.normal();
        const EndpointPair pair(x0, x1);

        Trajectory traj;
        if (schedule.sigma > 0.0) {
            traj = euler_ode(
                [&](const LatentState& x, double t) {
                    return sb_conditional_flow(pair, x, t, schedule);
                },
                pair.x0, plan);
        } else {
            const LatentState u = cfm_conditional_flow(pair);
            traj = euler_ode([&](const LatentState&, double) { return u; }, pair.x0, plan);
        }

        double sq = 0.0;
        auto e = traj.endpoint().joint();
        auto t1 = pair.x1.joint();
        for (std::size_t i = 0; i < e.size(); ++i) {
            const double d = e[i] - t1[i];
            sq += d * d;
        }
        total_err += std::sqrt(sq);
    }
    return total_err / static_cast<double>(n_pairs);
}

namespace detail {

inline double euclidean(std::span<const double> a, std::span<const double> b) {
    double sq = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        sq += d * d;
    }
    return std::sqrt(sq);
}

inline double mean_cross_distance(std::span<const std::vector<double>> a,
                                  std::span<const std::vector<double>> b) {
    double acc = 0.0;
    for (const auto& x : a)
        for (const auto& y : b) acc += euclidean(x, y);
    return acc / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
}

inline double mean_within_distance(std::span<const std::vector<double>> a) {
    if (a.size() < 2)
        throw std::invalid_argument("energy_distance: need >= 2 samples per set");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = i + 1; j < a.size(); ++j) acc += euclidean(a[i], a[j]);
    return 2.0 * acc / (static_cast<double>(a.size()) * static_cast<double>(a.size() - 1));
}

}  // namespace detail

// 2 E|A-B| - E|A-A'| - E|B-B'| with unbiased pairwise estimators. Symmetric;
// can dip slightly below zero on identical finite sets.
inline double energy_distance(std::span<const std::vector<double>> a,
                              std::span<const std::vector<double>> b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("energy_distance: empty set");
    if (a.front().size() != b.front().size())
        throw std::invalid_argument("energy_distance: dimension mismatch");
    return 2.0 * detail::mean_cross_distance(a, b) - detail::mean_within_distance(a) -
           detail::mean_within_distance(b);
}

// Permutation threshold: pool both sets, redraw the labels n_perms times and
// return the (1 - alpha) quantile of the permuted energy distances.
inline double energy_distance_permutation_threshold(std::span<const std::vector<double>> a,
                                                    std::span<const std::vector<double>> b,
                                                    RandomStream& rng,
                                                    std::size_t n_perms = 200,
                                                    double alpha = 0.05) {
    std::vector<std::vector<double>> pool(a.begin(), a.end());
    pool.insert(pool.end(), b.begin(), b.end());
    std::vector<double> stats;
    stats.reserve(n_perms);
    for (std::size_t p = 0; p < n_perms; ++p) {
        for (std::size_t i = pool.size(); i-- > 1;) {
            const std::size_t j = static_cast<std::size_t>(rng.uniform_below(i + 1));
            std::swap(pool[i], pool[j]);
        }
        std::span<const std::vector<double>> pa(pool.data(), a.size());
        std::span<const std::vector<double>> pb(pool.data() + a.size(), b.size());
        stats.push_back(energy_distance(pa, pb));
    }
    std::sort(stats.begin(), stats.end());
    const double idx = (1.0 - alpha) * static_cast<double>(n_perms);
    std::size_t k = static_cast<std::size_t>(std::ceil(idx));
    if (k > 0) --k;
    return stats[std::min(k, stats.size() - 1)];
}

struct ModalityBreakdown {
    double audio = 0.0;
    double video = 0.0;
    double joint = 0.0;
};

struct MetricReport {
    ModalityBreakdown paired_mse;
    ModalityBreakdown baseline_mse;  // identity transport: x0 vs x1
    ModalityBreakdown energy;        // generated set vs true target set
    std::size_t n_pairs = 0;
    std::size_t n_divergent = 0;

    nlohmann::ordered_json to_json() const {
        auto block = [](const ModalityBreakdown& m) {
            return nlohmann::ordered_json{
                {"audio", m.audio}, {"video", m.video}, {"joint", m.joint}};
        };
        return {{"paired_mse", block(paired_mse)},
                {"baseline_mse", block(baseline_mse)},
                {"energy_distance", block(energy)},
                {"n_pairs", n_pairs},
                {"n_divergent", n_divergent},
                {"note",
                 "paired MSE, identity-baseline MSE and energy distance are the desk-scale "
                 "stand-ins for perceptual removal metrics"}};
    }
};

struct PairError {
    std::size_t index = 0;
    double audio_se = 0.0;
    double video_se = 0.0;
    double joint_se = 0.0;
    bool divergent = false;
};

struct EvalResult {
    MetricReport report;
    std::vector<PairError> per_pair;
};

// Transport every test x0 with its condition through the per-modality ODE and
// compare against the paired x1. Divergent trajectories are counted and
// excluded from all means and from the energy-distance sets.
inline EvalResult evaluate_model(const FieldParams& params,
                                 std::span<const RemovalPair> test_pairs,
                                 const IntegrationPlan& plan) {
    if (test_pairs.empty()) throw std::invalid_argument("evaluate_model: empty test split");
    IntegrationPlan endpoint_plan = plan;
    endpoint_plan.record_path = false;

    EvalResult result;
    const std::size_t n = test_pairs.size();
    result.per_pair.resize(n);
    std::vector<LatentState> generated(n);

    for_each_shard(n, thread_cap(), [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const RemovalPair& pair = test_pairs[i];
            PairError pe;
            pe.index = i;
            try {
                Trajectory traj = lockstep_simulate(
                    [&](const LatentState& x, double t) {
                        Velocity v = forward(params, x, t, pair.cond);
                        return std::pair<std::vector<double>, std::vector<double>>(
                            std::move(v.audio), std::move(v.video));
                    },
                    pair.x0, endpoint_plan);
                generated[i] = traj.endpoint();
            } catch (const divergence_error&) {
                pe.divergent = true;
            } catch (const numeric_error&) {
                // field evaluation overflowed before the state did
                pe.divergent = true;
            }
            result.per_pair[i] = pe;
        }
    });

    auto sq_err = [](std::span<const double> a, std::span<const double> b) {
        double acc = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double d = a[i] - b[i];
            acc += d * d;
        }
        return acc;
    };

    std::vector<std::vector<double>> gen_a, gen_v, gen_j, true_a, true_v, true_j;
    double pa = 0.0, pv = 0.0, ba = 0.0, bv = 0.0;
    std::size_t kept = 0;
    for (std::size_t i = 0; i < n; ++i) {
        PairError& pe = result.per_pair[i];
        if (pe.divergent) {
            ++result.report.n_divergent;
            continue;
        }
        const RemovalPair& pair = test_pairs[i];
        const LatentState& gen = generated[i];
        pe.audio_se = sq_err(gen.audio(), pair.x1.audio());
        pe.video_se = sq_err(gen.video(), pair.x1.video());
        pe.joint_se = pe.audio_se + pe.video_se;
        pa += pe.audio_se;
        pv += pe.video_se;
        ba += sq_err(pair.x0.audio(), pair.x1.audio());
        bv += sq_err(pair.x0.video(), pair.x1.video());
        gen_a.emplace_back(gen.audio().begin(), gen.audio().end());
        gen_v.emplace_back(gen.video().begin(), gen.video().end());
        gen_j.emplace_back(gen.joint().begin(), gen.joint().end());
        true_a.emplace_back(pair.x1.audio().begin(), pair.x1.audio().end());
        true_v.emplace_back(pair.x1.video().begin(), pair.x1.video().end());
        true_j.emplace_back(pair.x1.joint().begin(), pair.x1.joint().end());
        ++kept;
    }
    if (kept == 0) throw std::runtime_error("evaluate_model: every trajectory diverged");

    result.report.n_pairs = kept;
    const double inv = 1.0 / static_cast<double>(kept);
    result.report.paired_mse = {pa * inv, pv * inv, (pa + pv) * inv};
    result.report.baseline_mse = {ba * inv, bv * inv, (ba + bv) * inv};
    if (kept >= 2) {
        result.report.energy.audio = energy_distance(gen_a, true_a);
        result.report.energy.video = energy_distance(gen_v, true_v);
        result.report.energy.joint = energy_distance(gen_j, true_j);
    }
    return result;
}

inline void write_per_pair_errors_csv(std::ostream& os, const EvalResult& result) {
    os << "pair,audio_se,video_se,joint_se,divergent\n";
    os.precision(17);
    for (const PairError& pe : result.per_pair)
        os << pe.index << "," << pe.audio_se << "," << pe.video_se << "," << pe.joint_se << ","
           << (pe.divergent ? 1 : 0) << "\n";
}

}  // namespace sbfm
