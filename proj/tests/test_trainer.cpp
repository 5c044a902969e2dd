#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "sbfm/metrics.hpp"
#include "sbfm/trainer.hpp"

using namespace sbfm;

namespace {

ToyDataConfig small_data() {
    ToyDataConfig cfg;
    cfg.seed = 7;
    cfg.n_pairs = 200;
    cfg.n_objects = 4;
    cfg.objects_per_scene = 2;
    cfg.t_a = 8;
    cfg.c_a = 1;
    cfg.t_v = 4;
    cfg.c_v = 2;
    return cfg;
}

FieldConfig small_field(const ToyDataConfig& data) {
    FieldConfig cfg;
    cfg.d_a = data.d_a();
    cfg.d_v_total = data.d_v_total();
    cfg.cond_a_dim = data.cond_a_dim();
    cfg.cond_v_dim = data.cond_v_dim();
    cfg.trunk_width = 32;
    cfg.trunk_depth = 2;
    cfg.head_width = 16;
    cfg.head_depth = 2;
    cfg.time_embed_dim = 8;
    return cfg;
}

std::filesystem::path fresh_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "sbfm_trainer_tests" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

nlohmann::json loss_series(const RunManifest& manifest) {
    nlohmann::json j = manifest.to_json();
    j.erase("wall_seconds_per_epoch");
    return j;
}

}  // namespace

TEST_CASE("the 90/5/5 split covers the dataset without overlap") {
    const SplitIndices s = split_dataset(4096);
    CHECK(s.train.size() == 3686);
    CHECK(s.validation.size() == 204);
    CHECK(s.test.size() == 206);
    CHECK(s.train.size() + s.validation.size() + s.test.size() == 4096);
    CHECK(s.validation.front() == s.train.back() + 1);
    CHECK(s.test.front() == s.validation.back() + 1);
}

TEST_CASE("zero epochs produce an empty series and no selected checkpoint") {
    const ToyDataConfig data_cfg = small_data();
    const Dataset ds = generate_dataset(data_cfg);
    OptimConfig opt;
    opt.max_epochs = 0;
    const auto dir = fresh_dir("zero-epochs");
    const TrainOutput out = train(ds, small_field(data_cfg), LossConfig{}, opt, dir);
    CHECK(out.manifest.epochs.empty());
    CHECK_FALSE(out.manifest.selected_epoch.has_value());
    CHECK(out.best_checkpoint.empty());
    CHECK(std::filesystem::exists(dir / "manifest.json"));
}

TEST_CASE("same seed, single-threaded: bitwise-identical manifests") {
    const ToyDataConfig data_cfg = small_data();
    const Dataset ds = generate_dataset(data_cfg);
    OptimConfig opt;
    opt.max_epochs = 3;
    opt.batch_size = 32;
    opt.warmup_steps = 20;
    opt.lr_peak = 1e-3;

    const TrainOutput a = train(ds, small_field(data_cfg), LossConfig{}, opt, fresh_dir("det-a"));
    const TrainOutput b = train(ds, small_field(data_cfg), LossConfig{}, opt, fresh_dir("det-b"));
    CHECK(loss_series(a.manifest) == loss_series(b.manifest));

    OptimConfig other = opt;
    other.seed = opt.seed + 1;
    const TrainOutput c =
        train(ds, small_field(data_cfg), LossConfig{}, other, fresh_dir("det-c"));
    CHECK(loss_series(a.manifest) != loss_series(c.manifest));
}

TEST_CASE("selection picks the argmin of the validation series and keeps best+last") {
    const ToyDataConfig data_cfg = small_data();
    const Dataset ds = generate_dataset(data_cfg);
    OptimConfig opt;
    opt.max_epochs = 4;
    opt.batch_size = 32;
    opt.warmup_steps = 50;
    opt.lr_peak = 5e-4;
    const auto dir = fresh_dir("selection");
    const TrainOutput out = train(ds, small_field(data_cfg), LossConfig{}, opt, dir);

    REQUIRE(out.manifest.selected_epoch.has_value());
    double best = std::numeric_limits<double>::infinity();
    std::size_t argmin = 0;
    for (std::size_t e = 0; e < out.manifest.epochs.size(); ++e) {
        const double v = out.manifest.epochs[e].validation.total;
        if (v < best) {
            best = v;
            argmin = e;
        }
    }
    CHECK(*out.manifest.selected_epoch == argmin);
    CHECK(out.manifest.epochs[argmin].validation.total == best);

    // retention: only best and last remain on disk
    std::size_t checkpoints = 0;
    for (const auto& entry : std::filesystem::directory_iterator(dir / "checkpoints"))
        if (entry.path().extension() == ".sbfm") ++checkpoints;
    const std::size_t expected =
        out.best_checkpoint == out.last_checkpoint ? 1 : 2;
    CHECK(checkpoints == expected);
    CHECK(std::filesystem::exists(out.best_checkpoint));
    CHECK(std::filesystem::exists(out.last_checkpoint));

    // the selected checkpoint loads and reproduces the recorded validation loss
    const FieldParams best_params = load_checkpoint(out.best_checkpoint);
    const SplitIndices split = split_dataset(ds.pairs.size());
    RandomStream val_rng(opt.seed, "validation-draws");
    const LossReport replayed =
        detail::evaluate_split(best_params, ds, split.validation, LossConfig{}, val_rng);
    CHECK(replayed.total == out.manifest.epochs[argmin].validation.total);
}

TEST_CASE("metrics.csv is tidy long format with six metrics per epoch") {
    const ToyDataConfig data_cfg = small_data();
    const Dataset ds = generate_dataset(data_cfg);
    OptimConfig opt;
    opt.max_epochs = 2;
    opt.batch_size = 64;
    const auto dir = fresh_dir("metrics-csv");
    train(ds, small_field(data_cfg), LossConfig{}, opt, dir);

    std::ifstream csv(dir / "metrics.csv");
    REQUIRE(csv.good());
    std::string line;
    std::getline(csv, line);
    CHECK(line == "run,metric,step,value");
    std::size_t rows = 0;
    while (std::getline(csv, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 6 * 2);
}

TEST_CASE("training beats the analytic zero-field baseline") {
    // E|u|^2 for the zero-field predictor: the displacement energy plus the
    // bridge correction noise sigma^2 d E[(1-2t)^2 / (4t(1-t))], with the
    // time expectation over U[eps, 1-eps] in closed form:
    //   (2 ln((1-eps)/eps) - 4(1-2eps)) / (4 (1-2eps))
    const ToyDataConfig data_cfg = small_data();
    const Dataset ds = generate_dataset(data_cfg);
    LossConfig loss_cfg;
    const double eps = loss_cfg.schedule.eps_clamp;
    const double sigma = loss_cfg.schedule.sigma;

    const double time_integral =
        (2.0 * std::log((1.0 - eps) / eps) - 4.0 * (1.0 - 2.0 * eps)) / (4.0 * (1.0 - 2.0 * eps));
    // quadrature cross-check of the closed form
    {
        const std::size_t n = 200000;
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double t = eps + (1.0 - 2.0 * eps) * (static_cast<double>(i) + 0.5) /
                                        static_cast<double>(n);
            const double c = (1.0 - 2.0 * t);
            acc += c * c / (4.0 * t * (1.0 - t));
        }
        acc /= static_cast<double>(n);
        CHECK(time_integral == Catch::Approx(acc).epsilon(1e-4));
    }

    const SplitIndices split = split_dataset(ds.pairs.size());
    double disp_a = 0.0, disp_v = 0.0;
    for (std::size_t idx : split.validation) {
        const RemovalPair& pair = ds.pairs[idx];
        for (std::size_t i = 0; i < pair.x0.d_a(); ++i) {
            const double d = pair.x1.audio()[i] - pair.x0.audio()[i];
            disp_a += d * d;
        }
        for (std::size_t i = 0; i < pair.x0.d_v(); ++i) {
            const double d = pair.x1.video()[i] - pair.x0.video()[i];
            disp_v += d * d;
        }
    }
    disp_a /= static_cast<double>(split.validation.size());
    disp_v /= static_cast<double>(split.validation.size());
    const double noise_a = sigma * sigma * time_integral * static_cast<double>(data_cfg.d_a());
    const double noise_v =
        sigma * sigma * time_integral * static_cast<double>(data_cfg.d_v_total());
    const double baseline =
        (disp_a + noise_a) + loss_cfg.lambda * (disp_v + noise_v);

    OptimConfig opt;
    opt.max_epochs = 60;
    opt.batch_size = 32;
    opt.warmup_steps = 150;
    opt.lr_peak = 3e-3;
    opt.seed = 11;
    const auto dir = fresh_dir("baseline-beat");
    const TrainOutput out = train(ds, small_field(data_cfg), loss_cfg, opt, dir);

    REQUIRE(out.manifest.selected_epoch.has_value());
    const double selected =
        out.manifest.epochs[*out.manifest.selected_epoch].validation.total;
    INFO("selected " << selected << " baseline " << baseline);
    CHECK(selected < baseline / 10.0);
    // and the first epoch starts near the baseline: the init field is zero
    CHECK(out.manifest.epochs.front().validation.total < 2.0 * baseline);
}

TEST_CASE("divergence aborts the run with the manifest flushed") {
    const ToyDataConfig data_cfg = small_data();
    const Dataset ds = generate_dataset(data_cfg);
    OptimConfig opt;
    opt.max_epochs = 50;
    opt.batch_size = 32;
    opt.warmup_steps = 1;
    opt.lr_init = opt.lr_peak = 1e18;  // blows the parameters up
    const auto dir = fresh_dir("divergence");
    CHECK_THROWS_AS(train(ds, small_field(data_cfg), LossConfig{}, opt, dir), numeric_error);
    REQUIRE(std::filesystem::exists(dir / "manifest.json"));
    std::ifstream mf(dir / "manifest.json");
    const nlohmann::json manifest = nlohmann::json::parse(mf);
    CHECK(manifest.at("diverged").get<bool>());
}

TEST_CASE("field config must match the dataset dims") {
    const ToyDataConfig data_cfg = small_data();
    const Dataset ds = generate_dataset(data_cfg);
    FieldConfig wrong = small_field(data_cfg);
    wrong.d_a += 1;
    CHECK_THROWS_AS(train(ds, wrong, LossConfig{}, OptimConfig{}, fresh_dir("bad-dims")),
                    std::invalid_argument);
}
