#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "sbfm/bridge.hpp"
#include "sbfm/latent.hpp"
#include "sbfm/rng.hpp"

namespace sbfm {

enum class ObjectiveKind { Sbfm, Cfm };

struct LossConfig {
    double lambda = 3.0;
    ObjectiveKind kind = ObjectiveKind::Sbfm;
    BridgeSchedule schedule{};
    // time distribution: uniform on the clamped interval (the only option)

    void validate() const {
        if (!(lambda > 0.0)) throw std::invalid_argument("LossConfig: lambda must be > 0");
        schedule.validate();
    }
};

// One regression target: time, bridge point, and the conditional-flow target
// split along the block boundary.
struct TrainingPoint {
    double t = 0.0;
    LatentState x_t;
    std::vector<double> u_target_a;
    std::vector<double> u_target_v;
};

// Draw t ~ U[eps, 1-eps] from time_rng and X_t from the bridge marginal via
// noise_rng, then evaluate the conditional flow (SB, or straight-line for the
// CFM objective) at that point.
inline TrainingPoint draw_training_point(const EndpointPair& pair, const LossConfig& config,
                                         RandomStream& time_rng, RandomStream& noise_rng) {
    const double eps = config.schedule.eps_clamp;
    TrainingPoint out;
    out.t = time_rng.uniform(eps, 1.0 - eps);
    out.x_t = sample_bridge_point(pair, config.schedule, out.t, noise_rng);
    const LatentState u = config.kind == ObjectiveKind::Cfm
                              ? cfm_conditional_flow(pair)
                              : sb_conditional_flow(pair, out.x_t, out.t, config.schedule);
    out.u_target_a.assign(u.audio().begin(), u.audio().end());
    out.u_target_v.assign(u.video().begin(), u.video().end());
    return out;
}

// Per-batch loss split by modality. Parts are stored unweighted;
// total = audio_part + lambda * video_part.
struct LossReport {
    double total = 0.0;
    double audio_part = 0.0;
    double video_part = 0.0;
    std::size_t batch_size = 0;
};

namespace detail {

inline double mean_squared_residual(std::span<const std::vector<double>> pred,
                                    std::span<const std::vector<double>> target,
                                    const char* which) {
    double acc = 0.0;
    for (std::size_t n = 0; n < pred.size(); ++n) {
        if (pred[n].size() != target[n].size())
            throw std::invalid_argument(std::string("weighted_loss: ") + which +
                                        " block shape mismatch");
        for (std::size_t i = 0; i < pred[n].size(); ++i) {
            const double r = pred[n][i] - target[n][i];
            acc += r * r;
        }
    }
    return acc / static_cast<double>(pred.size());
}

}  // namespace detail

// audio_part = mean_n |pred_a - target_a|^2 (sum over coordinates), likewise
// for video; total = audio_part + lambda * video_part.
inline LossReport weighted_loss(std::span<const std::vector<double>> pred_a,
                                std::span<const std::vector<double>> pred_v,
                                std::span<const std::vector<double>> target_a,
                                std::span<const std::vector<double>> target_v, double lambda) {
    if (pred_a.size() != pred_v.size() || pred_a.size() != target_a.size() ||
        pred_a.size() != target_v.size() || pred_a.empty())
        throw std::invalid_argument("weighted_loss: inconsistent or empty batch");
    LossReport report;
    report.batch_size = pred_a.size();
    report.audio_part = detail::mean_squared_residual(pred_a, target_a, "audio");
    report.video_part = detail::mean_squared_residual(pred_v, target_v, "video");
    report.total = report.audio_part + lambda * report.video_part;
    return report;
}

}  // namespace sbfm
