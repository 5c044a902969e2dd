// sbfm — Schrödinger bridge flow matching at desk scale.
//
// Subcommands: gen-data, train, sample, verify, eval. Flags override config
// file values, which override built-in defaults. The config file is INI-style
// with sections named after the library modules (bridge_math, field_model,
// objective, trainer, toy_data, simulate); every flag below lists its config
// key as a second long name. All randomness flows from --seed via named
// substreams. SBFM_THREADS caps internal parallelism (0/unset =
// single-threaded deterministic mode).

#include <CLI11.hpp>

#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "sbfm/checkpoint.hpp"
#include "sbfm/metrics.hpp"
#include "sbfm/serialize.hpp"
#include "sbfm/toy_data.hpp"
#include "sbfm/trainer.hpp"
#include "sbfm/verify.hpp"

namespace {

// CLI11 treats INI sections as subcommand scopes; this formatter flattens
// them into dotted keys ("[toy_data] pairs" -> "toy_data.pairs") so sections
// can mirror the library modules instead.
class FlatSectionConfig : public CLI::ConfigBase {
  public:
    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        std::vector<CLI::ConfigItem> out;
        for (const CLI::ConfigItem& item : CLI::ConfigBase::from_config(input)) {
            if (item.name == "++" || item.name == "--") continue;  // scope markers
            CLI::ConfigItem flat;
            std::string prefix;
            for (const auto& parent : item.parents) prefix += parent + ".";
            flat.name = prefix + item.name;
            flat.inputs = item.inputs;
            out.push_back(std::move(flat));
        }
        return out;
    }
};

struct RunConfig {
    std::uint64_t seed = 42;
    sbfm::BridgeSchedule bridge{};
    double lambda = 3.0;
    std::string objective = "sbfm";
    std::size_t trunk_width = 128;
    std::size_t trunk_depth = 3;
    std::size_t head_width = 64;
    std::size_t head_depth = 2;
    std::size_t time_embed_dim = 32;
    std::string activation = "tanh";
    std::string heads = "mlp";
    sbfm::OptimConfig optim{};
    sbfm::ToyDataConfig data{};
    std::size_t steps = 30;
    bool record_path = false;

    sbfm::LossConfig loss_config() const {
        sbfm::LossConfig cfg;
        cfg.lambda = lambda;
        cfg.kind = sbfm::objective_kind_from_string(objective);
        cfg.schedule = bridge;
        return cfg;
    }

    sbfm::FieldConfig field_config(const sbfm::ToyDataConfig& ds) const {
        sbfm::FieldConfig cfg;
        cfg.d_a = ds.d_a();
        cfg.d_v_total = ds.d_v_total();
        cfg.cond_a_dim = ds.cond_a_dim();
        cfg.cond_v_dim = ds.cond_v_dim();
        cfg.trunk_width = trunk_width;
        cfg.trunk_depth = trunk_depth;
        cfg.head_width = head_width;
        cfg.head_depth = head_depth;
        cfg.time_embed_dim = time_embed_dim;
        cfg.activation = sbfm::activation_from_string(activation);
        cfg.heads = sbfm::head_mode_from_string(heads);
        return cfg;
    }

    sbfm::IntegrationPlan plan() const {
        return {steps, bridge.eps_clamp, 1.0 - bridge.eps_clamp, record_path};
    }
};

// every RunConfig key lives on the root app (subcommands fall through to it),
// so one config file serves every command and `sbfm --help` lists every key
// with its default
void register_run_config(CLI::App* cmd, RunConfig& cfg) {
    cmd->set_config("--config", "", "config file (INI; sections mirror module names)");
    cmd->allow_config_extras(false);
    cmd->config_formatter(std::make_shared<FlatSectionConfig>());

    cmd->add_option("--seed,--run.seed", cfg.seed, "root seed for all named substreams")
        ->capture_default_str();

    cmd->add_option("--sigma,--bridge_math.sigma", cfg.bridge.sigma, "bridge noise scale")
        ->capture_default_str();
    cmd->add_option("--eps-clamp,--bridge_math.eps-clamp", cfg.bridge.eps_clamp,
                    "time clamp for the singular flow coefficient")
        ->capture_default_str();

    cmd->add_option("--lambda,--objective.lambda", cfg.lambda, "video-loss weight")
        ->capture_default_str();
    cmd->add_option("--objective,--objective.kind", cfg.objective,
                    "training objective (sbfm | cfm)")
        ->capture_default_str();

    cmd->add_option("--trunk-width,--field_model.trunk-width", cfg.trunk_width, "trunk width")
        ->capture_default_str();
    cmd->add_option("--trunk-depth,--field_model.trunk-depth", cfg.trunk_depth, "trunk depth")
        ->capture_default_str();
    cmd->add_option("--head-width,--field_model.head-width", cfg.head_width,
                    "modality head width")
        ->capture_default_str();
    cmd->add_option("--head-depth,--field_model.head-depth", cfg.head_depth,
                    "modality head depth")
        ->capture_default_str();
    cmd->add_option("--time-embed-dim,--field_model.time-embed-dim", cfg.time_embed_dim,
                    "sinusoidal time-embedding width (even)")
        ->capture_default_str();
    cmd->add_option("--activation,--field_model.activation", cfg.activation,
                    "activation (tanh | gelu-approx)")
        ->capture_default_str();
    cmd->add_option("--heads,--field_model.heads", cfg.heads,
                    "head mode (mlp | linear split layer)")
        ->capture_default_str();

    cmd->add_option("--beta1,--trainer.beta1", cfg.optim.beta1, "Adam beta1")
        ->capture_default_str();
    cmd->add_option("--beta2,--trainer.beta2", cfg.optim.beta2, "Adam beta2")
        ->capture_default_str();
    cmd->add_option("--adam-eps,--trainer.adam-eps", cfg.optim.eps, "Adam epsilon")
        ->capture_default_str();
    cmd->add_option("--weight-decay,--trainer.weight-decay", cfg.optim.weight_decay,
                    "decoupled weight decay")
        ->capture_default_str();
    cmd->add_option("--lr-init,--trainer.lr-init", cfg.optim.lr_init, "warmup start LR")
        ->capture_default_str();
    cmd->add_option("--lr-peak,--trainer.lr-peak", cfg.optim.lr_peak, "post-warmup LR")
        ->capture_default_str();
    cmd->add_option("--warmup-steps,--trainer.warmup-steps", cfg.optim.warmup_steps,
                    "linear warmup length in steps")
        ->capture_default_str();
    cmd->add_option("--batch-size,--trainer.batch-size", cfg.optim.batch_size, "batch size")
        ->capture_default_str();
    cmd->add_option("--max-epochs,--trainer.max-epochs", cfg.optim.max_epochs, "epoch budget")
        ->capture_default_str();
    cmd->add_option("--grad-clip,--trainer.grad-clip", cfg.optim.grad_clip,
                    "max gradient norm (0 = off)")
        ->capture_default_str();

    cmd->add_option("--pairs,--toy_data.pairs", cfg.data.n_pairs, "number of pairs")
        ->capture_default_str();
    cmd->add_option("--objects,--toy_data.objects", cfg.data.n_objects, "object vocabulary K")
        ->capture_default_str();
    cmd->add_option("--objects-per-scene,--toy_data.objects-per-scene",
                    cfg.data.objects_per_scene, "objects mixed per scene N (>= 2)")
        ->capture_default_str();
    cmd->add_option("--t-a,--toy_data.t-a", cfg.data.t_a, "audio grid length")
        ->capture_default_str();
    cmd->add_option("--c-a,--toy_data.c-a", cfg.data.c_a, "audio channels")
        ->capture_default_str();
    cmd->add_option("--t-v,--toy_data.t-v", cfg.data.t_v, "raw video grid length")
        ->capture_default_str();
    cmd->add_option("--c-v,--toy_data.c-v", cfg.data.c_v, "video channels")
        ->capture_default_str();

    cmd->add_option("--steps,--simulate.steps", cfg.steps, "Euler steps for sampling")
        ->capture_default_str();
    cmd->add_flag("--record-path,--simulate.record-path", cfg.record_path,
                  "record and dump full trajectories");
}

std::string timestamped_run_dir(std::uint64_t seed) {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[64];
    std::strftime(buf, sizeof buf, "%Y%m%d_%H%M%S", &tm);
    return "runs/run_" + std::string(buf) + "_seed" + std::to_string(seed);
}

std::vector<std::size_t> split_indices(const sbfm::Dataset& ds, const std::string& split) {
    const sbfm::SplitIndices s = sbfm::split_dataset(ds.pairs.size());
    if (split == "train") return s.train;
    if (split == "validation") return s.validation;
    if (split == "test") return s.test;
    if (split == "all") {
        std::vector<std::size_t> all(ds.pairs.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        return all;
    }
    throw std::invalid_argument("unknown split '" + split +
                                "' (train | validation | test | all)");
}

int cmd_gen_data(const RunConfig& cfg, const std::string& out_path) {
    sbfm::ToyDataConfig data_cfg = cfg.data;
    data_cfg.seed = cfg.seed;
    data_cfg.validate();
    const sbfm::Dataset ds = sbfm::generate_dataset(data_cfg);
    if (const auto parent = std::filesystem::path(out_path).parent_path(); !parent.empty())
        std::filesystem::create_directories(parent);
    const std::string digest = sbfm::write_dataset(out_path, ds);
    std::cout << "wrote " << out_path << " (" << std::filesystem::file_size(out_path)
              << " bytes, " << ds.pairs.size() << " pairs)\n";
    std::cout << "sha256 " << digest << "\n";
    return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& dataset_path, std::string run_dir) {
    const sbfm::Dataset ds = sbfm::read_dataset(dataset_path);
    if (run_dir.empty()) run_dir = timestamped_run_dir(cfg.seed);
    sbfm::OptimConfig optim = cfg.optim;
    optim.seed = cfg.seed;
    const std::string digest = sbfm::sha256_hex_file(dataset_path);

    const sbfm::TrainOutput out = sbfm::train(ds, cfg.field_config(ds.config),
                                              cfg.loss_config(), optim, run_dir, digest);
    std::cout << "run dir    " << run_dir << "\n";
    std::cout << "epochs     " << out.manifest.epochs.size() << "\n";
    if (out.manifest.selected_epoch) {
        const auto& best = out.manifest.epochs[*out.manifest.selected_epoch];
        std::cout << "selected   epoch " << *out.manifest.selected_epoch
                  << " (validation total " << best.validation.total << ")\n";
        std::cout << "checkpoint " << out.best_checkpoint.string() << "\n";
    }
    return 0;
}

int cmd_sample(const RunConfig& cfg, const std::string& checkpoint_path,
               const std::string& dataset_path, const std::string& split, std::size_t limit,
               const std::string& out_dir) {
    const sbfm::FieldParams params = sbfm::load_checkpoint(checkpoint_path);
    const sbfm::Dataset ds = sbfm::read_dataset(dataset_path);
    std::vector<std::size_t> indices = split_indices(ds, split);
    if (limit > 0 && indices.size() > limit) indices.resize(limit);
    if (indices.empty()) throw std::runtime_error("sample: selected split is empty");

    std::filesystem::create_directories(out_dir);
    const sbfm::IntegrationPlan plan = cfg.plan();

    std::vector<sbfm::Trajectory> trajectories;
    std::ofstream gen(std::filesystem::path(out_dir) / "generated.csv", std::ios::trunc);
    gen << "pair_id,removed_id";
    const std::size_t d = ds.pairs.front().x0.dim();
    for (std::size_t i = 0; i < d; ++i) gen << ",coord_" << i;
    gen << "\n";
    gen.precision(17);

    for (std::size_t idx : indices) {
        const sbfm::RemovalPair& pair = ds.pairs[idx];
        const sbfm::Trajectory traj = sbfm::lockstep_simulate(
            [&](const sbfm::LatentState& x, double t) {
                sbfm::Velocity v = sbfm::forward(params, x, t, pair.cond);
                return std::pair<std::vector<double>, std::vector<double>>(std::move(v.audio),
                                                                           std::move(v.video));
            },
            pair.x0, plan);
        gen << idx << "," << pair.removed_id;
        for (double v : traj.endpoint().joint()) gen << "," << v;
        gen << "\n";
        if (cfg.record_path) trajectories.push_back(traj);
    }
    std::cout << "sampled " << indices.size() << " pairs from '" << split << "' split ("
              << plan.n_steps << " Euler steps on [" << plan.t_start << ", " << plan.t_end
              << "])\n";
    std::cout << "wrote " << (std::filesystem::path(out_dir) / "generated.csv").string() << "\n";
    if (cfg.record_path) {
        std::ofstream tr(std::filesystem::path(out_dir) / "trajectories.csv", std::ios::trunc);
        sbfm::write_trajectory_csv(tr, trajectories);
        std::cout << "wrote " << (std::filesystem::path(out_dir) / "trajectories.csv").string()
                  << "\n";
    }
    return 0;
}

int cmd_verify(const RunConfig& cfg, const std::string& report_path) {
    const std::vector<sbfm::VerifyCheck> checks = sbfm::run_verification_suite(cfg.seed);
    bool all_ok = true;
    std::printf("%-42s %-6s %-14s %-14s %s\n", "check", "status", "value", "limit", "seconds");
    for (const sbfm::VerifyCheck& c : checks) {
        all_ok &= c.passed;
        std::printf("%-42s %-6s %-14.4g %-14.4g %.2f\n", c.name.c_str(),
                    c.passed ? "PASS" : "FAIL", c.value, c.limit, c.seconds);
        if (!c.passed) std::printf("    violated: %s\n", c.detail.c_str());
    }
    nlohmann::ordered_json report;
    report["seed"] = cfg.seed;
    report["all_passed"] = all_ok;
    nlohmann::ordered_json items = nlohmann::ordered_json::array();
    for (const sbfm::VerifyCheck& c : checks)
        items.push_back({{"name", c.name},
                         {"passed", c.passed},
                         {"value", c.value},
                         {"limit", c.limit},
                         {"seconds", c.seconds},
                         {"detail", c.detail}});
    report["checks"] = items;
    std::ofstream rf(report_path, std::ios::trunc);
    rf << report.dump(2) << "\n";
    std::cout << (all_ok ? "all checks passed" : "VERIFICATION FAILED") << "; report at "
              << report_path << "\n";
    return all_ok ? 0 : 1;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path,
             const std::string& dataset_path, const std::string& split,
             const std::string& out_path, const std::string& per_pair_csv) {
    const sbfm::FieldParams params = sbfm::load_checkpoint(checkpoint_path);
    const sbfm::Dataset ds = sbfm::read_dataset(dataset_path);
    const std::vector<std::size_t> indices = split_indices(ds, split);
    if (indices.empty()) throw std::runtime_error("eval: selected split is empty");
    std::vector<sbfm::RemovalPair> pairs;
    pairs.reserve(indices.size());
    for (std::size_t idx : indices) pairs.push_back(ds.pairs[idx]);

    const sbfm::EvalResult result = sbfm::evaluate_model(params, pairs, cfg.plan());
    nlohmann::ordered_json j = result.report.to_json();
    j["split"] = split;
    j["checkpoint"] = checkpoint_path;
    j["dataset_digest"] = sbfm::sha256_hex_file(dataset_path);
    std::ofstream out(out_path, std::ios::trunc);
    out << j.dump(2) << "\n";

    const sbfm::MetricReport& r = result.report;
    std::cout << "pairs " << r.n_pairs << " (divergent " << r.n_divergent << ")\n";
    std::printf("paired_mse   audio %.6g  video %.6g  joint %.6g\n", r.paired_mse.audio,
                r.paired_mse.video, r.paired_mse.joint);
    std::printf("baseline_mse audio %.6g  video %.6g  joint %.6g\n", r.baseline_mse.audio,
                r.baseline_mse.video, r.baseline_mse.joint);
    std::printf("energy_dist  audio %.6g  video %.6g  joint %.6g\n", r.energy.audio,
                r.energy.video, r.energy.joint);
    std::cout << "report at " << out_path << "\n";
    if (!per_pair_csv.empty()) {
        std::ofstream csv(per_pair_csv, std::ios::trunc);
        sbfm::write_per_pair_errors_csv(csv, result);
        std::cout << "per-pair errors at " << per_pair_csv << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "Schrödinger bridge flow matching for paired source->target transport.\n"
        "Run-config flags below apply to every subcommand."};
    app.require_subcommand(1);

    RunConfig cfg;
    register_run_config(&app, cfg);

    auto* gen = app.add_subcommand("gen-data", "generate the synthetic removal dataset");
    gen->fallthrough();
    std::string gen_out = "dataset.sbds";
    gen->add_option("--out", gen_out, "output dataset path")->capture_default_str();

    auto* train = app.add_subcommand("train", "train the velocity field");
    train->fallthrough();
    std::string train_dataset = "dataset.sbds";
    std::string train_run_dir;
    train->add_option("--dataset", train_dataset, "dataset file")->capture_default_str();
    train->add_option("--run-dir", train_run_dir,
                      "run directory (default: runs/run_<timestamp>_seed<seed>)");

    auto* sample = app.add_subcommand("sample", "transport test pairs through a checkpoint");
    sample->fallthrough();
    std::string sample_checkpoint, sample_dataset = "dataset.sbds", sample_split = "test";
    std::string sample_out = "samples";
    std::size_t sample_limit = 0;
    sample->add_option("--checkpoint", sample_checkpoint, "checkpoint file")->required();
    sample->add_option("--dataset", sample_dataset, "dataset file")->capture_default_str();
    sample->add_option("--split", sample_split, "train | validation | test | all")
        ->capture_default_str();
    sample->add_option("--limit", sample_limit, "max pairs (0 = whole split)")
        ->capture_default_str();
    sample->add_option("--out-dir", sample_out, "output directory")->capture_default_str();

    auto* verify = app.add_subcommand("verify", "run the analytic identity suite");
    verify->fallthrough();
    std::string verify_report = "verify_report.json";
    verify->add_option("--report", verify_report, "report JSON path")->capture_default_str();

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
    eval->fallthrough();
    std::string eval_checkpoint, eval_dataset = "dataset.sbds", eval_split = "test";
    std::string eval_out = "eval_report.json", eval_csv;
    eval->add_option("--checkpoint", eval_checkpoint, "checkpoint file")->required();
    eval->add_option("--dataset", eval_dataset, "dataset file")->capture_default_str();
    eval->add_option("--split", eval_split, "train | validation | test | all")
        ->capture_default_str();
    eval->add_option("--out", eval_out, "metric report JSON path")->capture_default_str();
    eval->add_option("--per-pair-csv", eval_csv, "optional per-pair error CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (gen->parsed()) return cmd_gen_data(cfg, gen_out);
        if (train->parsed()) return cmd_train(cfg, train_dataset, train_run_dir);
        if (sample->parsed())
            return cmd_sample(cfg, sample_checkpoint, sample_dataset, sample_split,
                              sample_limit, sample_out);
        if (verify->parsed()) return cmd_verify(cfg, verify_report);
        if (eval->parsed())
            return cmd_eval(cfg, eval_checkpoint, eval_dataset, eval_split, eval_out, eval_csv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
