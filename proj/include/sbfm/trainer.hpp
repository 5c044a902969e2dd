#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sbfm/checkpoint.hpp"
#include "sbfm/field.hpp"
#include "sbfm/objective.hpp"
#include "sbfm/optim.hpp"
#include "sbfm/serialize.hpp"
#include "sbfm/threads.hpp"
#include "sbfm/toy_data.hpp"

namespace sbfm {

// 90/5/5 split in file order; pairs are i.i.d. by construction.
struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
    std::vector<std::size_t> test;
};

inline SplitIndices split_dataset(std::size_t n) {
    SplitIndices s;
    const std::size_t n_train = static_cast<std::size_t>(std::floor(0.90 * static_cast<double>(n)));
    const std::size_t n_val = static_cast<std::size_t>(std::floor(0.05 * static_cast<double>(n)));
    for (std::size_t i = 0; i < n_train; ++i) s.train.push_back(i);
    for (std::size_t i = n_train; i < n_train + n_val && i < n; ++i) s.validation.push_back(i);
    for (std::size_t i = n_train + n_val; i < n; ++i) s.test.push_back(i);
    return s;
}

struct EpochRecord {
    LossReport train;
    LossReport validation;
    double wall_seconds = 0.0;
};

struct RunManifest {
    std::uint64_t seed = 0;
    std::string dataset_digest;
    nlohmann::ordered_json config;
    std::size_t n_train = 0, n_validation = 0, n_test = 0;
    std::vector<EpochRecord> epochs;
    std::optional<std::size_t> selected_epoch;
    std::string selected_checkpoint;
    bool diverged = false;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["format"] = "sbfm-run-manifest";
        j["version"] = 1;
        j["seed"] = seed;
        j["dataset_digest"] = dataset_digest;
        j["config"] = config;
        j["split"] = {{"train", n_train}, {"validation", n_validation}, {"test", n_test}};
        nlohmann::ordered_json series = nlohmann::ordered_json::array();
        for (std::size_t e = 0; e < epochs.size(); ++e) {
            const EpochRecord& r = epochs[e];
            series.push_back(
                {{"epoch", e},
                 {"train",
                  {{"total", r.train.total},
                   {"audio_part", r.train.audio_part},
                   {"video_part", r.train.video_part},
                   {"batch_size", r.train.batch_size}}},
                 {"validation",
                  {{"total", r.validation.total},
                   {"audio_part", r.validation.audio_part},
                   {"video_part", r.validation.video_part},
                   {"batch_size", r.validation.batch_size}}}});
        }
        j["epochs"] = series;
        if (selected_epoch)
            j["selected_epoch"] = *selected_epoch;
        else
            j["selected_epoch"] = nullptr;
        j["selected_checkpoint"] = selected_checkpoint;
        j["diverged"] = diverged;
        // wall clock lives in its own key so reproducibility checks can drop it
        nlohmann::ordered_json wall = nlohmann::ordered_json::array();
        for (const EpochRecord& r : epochs) wall.push_back(r.wall_seconds);
        j["wall_seconds_per_epoch"] = wall;
        return j;
    }
};

struct TrainOutput {
    RunManifest manifest;
    std::filesystem::path run_dir;
    std::filesystem::path best_checkpoint;  // empty when no epoch ran
    std::filesystem::path last_checkpoint;
};

namespace detail {

inline LossReport evaluate_split(const FieldParams& params, const Dataset& ds,
                                 std::span<const std::size_t> indices,
                                 const LossConfig& loss_cfg, RandomStream& draw_rng) {
    LossReport report;
    report.batch_size = indices.size();
    if (indices.empty()) return report;
    double audio = 0.0, video = 0.0;
    for (std::size_t idx : indices) {
        const RemovalPair& pair = ds.pairs[idx];
        const EndpointPair ep(pair.x0, pair.x1);
        const TrainingPoint tp = draw_training_point(ep, loss_cfg, draw_rng, draw_rng);
        const Velocity pred = forward(params, tp.x_t, tp.t, pair.cond);
        for (std::size_t i = 0; i < pred.audio.size(); ++i) {
            const double r = pred.audio[i] - tp.u_target_a[i];
            audio += r * r;
        }
        for (std::size_t i = 0; i < pred.video.size(); ++i) {
            const double r = pred.video[i] - tp.u_target_v[i];
            video += r * r;
        }
    }
    const double inv = 1.0 / static_cast<double>(indices.size());
    report.audio_part = audio * inv;
    report.video_part = video * inv;
    report.total = report.audio_part + loss_cfg.lambda * report.video_part;
    return report;
}

inline void write_metrics_csv(const std::filesystem::path& path, const std::string& run_id,
                              std::span<const EpochRecord> epochs) {
    std::ofstream os(path, std::ios::trunc);
    os << "run,metric,step,value\n";
    os.precision(17);
    for (std::size_t e = 0; e < epochs.size(); ++e) {
        const EpochRecord& r = epochs[e];
        os << run_id << ",train_total," << e << "," << r.train.total << "\n";
        os << run_id << ",train_audio," << e << "," << r.train.audio_part << "\n";
        os << run_id << ",train_video," << e << "," << r.train.video_part << "\n";
        os << run_id << ",val_total," << e << "," << r.validation.total << "\n";
        os << run_id << ",val_audio," << e << "," << r.validation.audio_part << "\n";
        os << run_id << ",val_video," << e << "," << r.validation.video_part << "\n";
    }
}

}  // namespace detail

// Full optimization loop: seeded shuffling, AdamW with linear warmup,
// per-epoch validation with a fixed draw stream (so epochs are comparable),
// per-epoch checkpoints with best+last retention, and a JSON manifest.
// Deterministic given the seed in single-threaded mode; with SBFM_THREADS > 1
// shard gradients are reduced in fixed shard order (deterministic for a fixed
// thread count, but a different bit pattern than single-threaded).
inline TrainOutput train(const Dataset& ds, const FieldConfig& field_cfg,
                         const LossConfig& loss_cfg, const OptimConfig& optim_cfg,
                         const std::filesystem::path& run_dir,
                         const std::string& dataset_digest = "") {
    field_cfg.validate();
    loss_cfg.validate();
    optim_cfg.validate();
    if (field_cfg.d_a != ds.config.d_a() || field_cfg.d_v_total != ds.config.d_v_total() ||
        field_cfg.cond_a_dim != ds.config.cond_a_dim() ||
        field_cfg.cond_v_dim != ds.config.cond_v_dim())
        throw std::invalid_argument("train: field config does not match dataset dims");

    std::filesystem::create_directories(run_dir / "checkpoints");
    const SplitIndices split = split_dataset(ds.pairs.size());

    TrainOutput out;
    out.run_dir = run_dir;
    RunManifest& manifest = out.manifest;
    manifest.seed = optim_cfg.seed;
    manifest.dataset_digest = dataset_digest;
    manifest.config = {{"field", to_json(field_cfg)},
                       {"objective", to_json(loss_cfg)},
                       {"optimizer", to_json(optim_cfg)}};
    manifest.n_train = split.train.size();
    manifest.n_validation = split.validation.size();
    manifest.n_test = split.test.size();

    auto flush = [&] {
        std::ofstream mf(run_dir / "manifest.json", std::ios::trunc);
        mf << manifest.to_json().dump(2) << "\n";
        detail::write_metrics_csv(run_dir / "metrics.csv", run_dir.filename().string(),
                                  manifest.epochs);
    };

    RandomStream init_rng(optim_cfg.seed, "init");
    RandomStream shuffle_rng(optim_cfg.seed, "shuffle");
    RandomStream time_rng(optim_cfg.seed, "time-draws");
    RandomStream noise_rng(optim_cfg.seed, "bridge-noise");

    FieldParams params = FieldParams::random_init(field_cfg, init_rng);
    AdamMoments moments(params.values().size());

    std::vector<std::size_t> order = split.train;
    double best_total = std::numeric_limits<double>::infinity();
    std::filesystem::path best_path, last_path;
    const std::size_t n_threads = thread_cap();

    try {
        for (std::size_t epoch = 0; epoch < optim_cfg.max_epochs; ++epoch) {
            const auto wall_start = std::chrono::steady_clock::now();

            // seeded per-epoch permutation
            for (std::size_t i = order.size(); i-- > 1;)
                std::swap(order[i], order[static_cast<std::size_t>(shuffle_rng.uniform_below(i + 1))]);

            double train_audio = 0.0, train_video = 0.0;
            std::size_t seen = 0;
            for (std::size_t begin = 0; begin < order.size(); begin += optim_cfg.batch_size) {
                const std::size_t end = std::min(begin + optim_cfg.batch_size, order.size());
                const std::size_t bs = end - begin;

                std::vector<BackwardItem> items(bs);
                for (std::size_t k = 0; k < bs; ++k) {
                    const RemovalPair& pair = ds.pairs[order[begin + k]];
                    const EndpointPair ep(pair.x0, pair.x1);
                    TrainingPoint tp = draw_training_point(ep, loss_cfg, time_rng, noise_rng);
                    BackwardItem& item = items[k];
                    item.x = std::move(tp.x_t);
                    item.t = tp.t;
                    item.cond = pair.cond;
                    item.residual_a = std::move(tp.u_target_a);  // targets; residuals in place below
                    item.residual_v = std::move(tp.u_target_v);
                    item.lambda = loss_cfg.lambda;
                }

                std::vector<std::vector<double>> shard_grads(
                    std::min(n_threads, bs), std::vector<double>(params.values().size(), 0.0));
                const double inv_batch = 1.0 / static_cast<double>(bs);
                for_each_shard(bs, n_threads, [&](std::size_t s, std::size_t lo, std::size_t hi) {
                    for (std::size_t k = lo; k < hi; ++k) {
                        BackwardItem& item = items[k];
                        const Velocity pred = forward(params, item.x, item.t, item.cond);
                        for (std::size_t i = 0; i < pred.audio.size(); ++i)
                            item.residual_a[i] = pred.audio[i] - item.residual_a[i];
                        for (std::size_t i = 0; i < pred.video.size(); ++i)
                            item.residual_v[i] = pred.video[i] - item.residual_v[i];
                        detail::backward_accumulate(params, item, inv_batch, shard_grads[s]);
                    }
                });
                std::vector<double>& grad = shard_grads.front();
                for (std::size_t s = 1; s < shard_grads.size(); ++s)
                    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += shard_grads[s][i];

                for (const BackwardItem& item : items) {
                    for (double r : item.residual_a) train_audio += r * r;
                    for (double r : item.residual_v) train_video += r * r;
                }
                seen += bs;

                clip_gradient(grad, optim_cfg.grad_clip);
                optimizer_step(params.values(), grad, moments, optim_cfg);
            }

            EpochRecord record;
            record.train.batch_size = seen;
            if (seen > 0) {
                record.train.audio_part = train_audio / static_cast<double>(seen);
                record.train.video_part = train_video / static_cast<double>(seen);
                record.train.total =
                    record.train.audio_part + loss_cfg.lambda * record.train.video_part;
            }

            // fixed validation stream: every epoch scores the same (t, noise) draws
            RandomStream val_rng(optim_cfg.seed, "validation-draws");
            record.validation =
                detail::evaluate_split(params, ds, split.validation, loss_cfg, val_rng);

            char name[32];
            std::snprintf(name, sizeof name, "epoch_%04zu.sbfm", epoch);
            const std::filesystem::path ckpt = run_dir / "checkpoints" / name;
            save_checkpoint(ckpt, params);

            const std::filesystem::path prev_best = best_path, prev_last = last_path;
            last_path = ckpt;
            const double val_total =
                split.validation.empty() ? record.train.total : record.validation.total;
            if (val_total < best_total) {
                best_total = val_total;
                best_path = ckpt;
                manifest.selected_epoch = epoch;
                manifest.selected_checkpoint = std::string("checkpoints/") + name;
            }
            for (const std::filesystem::path& stale : {prev_best, prev_last}) {
                if (stale.empty() || stale == best_path || stale == last_path) continue;
                std::filesystem::remove(stale);
                std::filesystem::remove(stale.string() + ".json");
            }

            record.wall_seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start)
                    .count();
            manifest.epochs.push_back(record);

            if (!std::isfinite(record.validation.total) || !std::isfinite(record.train.total))
                throw numeric_error("train: non-finite loss at epoch " + std::to_string(epoch));
        }
    } catch (const numeric_error&) {
        // divergence aborts the run, but the manifest is always flushed first
        manifest.diverged = true;
        flush();
        throw;
    }

    out.best_checkpoint = best_path;
    out.last_checkpoint = last_path;
    flush();
    return out;
}

}  // namespace sbfm
