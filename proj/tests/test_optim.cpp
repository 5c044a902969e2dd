#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "sbfm/field.hpp"
#include "sbfm/integrate.hpp"
#include "sbfm/objective.hpp"
#include "sbfm/optim.hpp"
#include "sbfm/toy_data.hpp"

using namespace sbfm;

TEST_CASE("documented defaults stay pinned") {
    const OptimConfig opt;
    CHECK(opt.beta1 == 0.9);
    CHECK(opt.beta2 == 0.999);
    CHECK(opt.eps == 1e-8);
    CHECK(opt.weight_decay == 1e-4);
    CHECK(opt.lr_init == 1e-5);
    CHECK(opt.lr_peak == 1e-4);
    CHECK(opt.warmup_steps == 5000);
    CHECK(opt.batch_size == 64);

    const LossConfig loss;
    CHECK(loss.lambda == 3.0);
    CHECK(loss.kind == ObjectiveKind::Sbfm);
    CHECK(loss.schedule.sigma == 0.1);
    CHECK(loss.schedule.eps_clamp == 1e-3);

    const IntegrationPlan plan;
    CHECK(plan.n_steps == 30);

    const ToyDataConfig data;
    CHECK(data.n_pairs == 4096);
    CHECK(data.n_objects == 8);
    CHECK(data.objects_per_scene == 2);
    CHECK(data.t_a == 32);
    CHECK(data.c_a == 1);
    CHECK(data.t_v == 8);
    CHECK(data.c_v == 4);
    CHECK(data.d_a() == 32);
    CHECK(data.d_v_total() == 128);

    const FieldConfig field;
    CHECK(field.trunk_width == 128);
    CHECK(field.trunk_depth == 3);
    CHECK(field.head_width == 64);
    CHECK(field.head_depth == 2);
    CHECK(field.time_embed_dim == 32);
    CHECK(field.activation == Activation::Tanh);
    CHECK(field.heads == HeadMode::Mlp);
}

TEST_CASE("learning-rate warmup: 1e-5 at step 0, 1e-4 at step 5000, linear between") {
    OptimConfig cfg;
    CHECK(lr_at(0, cfg) == 1e-5);
    CHECK(lr_at(5000, cfg) == 1e-4);
    CHECK(lr_at(50000, cfg) == 1e-4);
    // midpoint of the ramp
    CHECK(lr_at(2500, cfg) == Catch::Approx(5.5e-5).epsilon(1e-14));
}

TEST_CASE("zero gradient and zero weight decay leave parameters untouched") {
    OptimConfig cfg;
    cfg.weight_decay = 0.0;
    std::vector<double> params{1.0, -2.0, 0.5};
    const std::vector<double> before = params;
    std::vector<double> grads(3, 0.0);
    AdamMoments moments(3);
    for (int i = 0; i < 10; ++i) optimizer_step(params, grads, moments, cfg);
    CHECK(params == before);
}

TEST_CASE("decoupled decay shrinks parameters by (1 - lr wd) per step") {
    OptimConfig cfg;
    cfg.weight_decay = 1e-4;
    cfg.lr_init = cfg.lr_peak = 1e-2;  // fixed lr
    std::vector<double> params{2.0};
    std::vector<double> grads{0.0};
    AdamMoments moments(1);
    double expected = 2.0;
    for (int i = 0; i < 20; ++i) {
        optimizer_step(params, grads, moments, cfg);
        expected *= 1.0 - cfg.lr_peak * cfg.weight_decay;
        CHECK(params[0] == Catch::Approx(expected).epsilon(1e-14));
    }
}

TEST_CASE("converges on a single-parameter quadratic") {
    // loss (x - 3)^2 / 2, gradient (x - 3)
    OptimConfig cfg;
    cfg.lr_init = cfg.lr_peak = 1e-2;
    cfg.weight_decay = 0.0;
    std::vector<double> params{0.0};
    AdamMoments moments(1);
    for (int step = 0; step < 5000; ++step) {
        std::vector<double> grads{params[0] - 3.0};
        optimizer_step(params, grads, moments, cfg);
        if (std::abs(params[0] - 3.0) < 1e-6) break;
    }
    CHECK(std::abs(params[0] - 3.0) < 1e-6);
}

TEST_CASE("non-finite gradient aborts with the step index") {
    OptimConfig cfg;
    std::vector<double> params{1.0};
    AdamMoments moments(1);
    std::vector<double> ok{0.5};
    optimizer_step(params, ok, moments, cfg);
    std::vector<double> bad{std::numeric_limits<double>::quiet_NaN()};
    try {
        optimizer_step(params, bad, moments, cfg);
        FAIL("expected numeric_error");
    } catch (const numeric_error& e) {
        CHECK(std::string(e.what()).find("step 1") != std::string::npos);
    }
}

TEST_CASE("lr = 0 freezes the parameters regardless of gradients and decay") {
    OptimConfig cfg;
    cfg.lr_init = cfg.lr_peak = 0.0;
    cfg.weight_decay = 10.0;
    std::vector<double> params{1.5, -0.5};
    const std::vector<double> before = params;
    AdamMoments moments(2);
    std::vector<double> grads{100.0, -7.0};
    for (int i = 0; i < 5; ++i) optimizer_step(params, grads, moments, cfg);
    CHECK(params == before);
}

TEST_CASE("gradient clipping caps the global norm") {
    std::vector<double> g{3.0, 4.0};  // norm 5
    clip_gradient(g, 1.0);
    CHECK(std::sqrt(g[0] * g[0] + g[1] * g[1]) == Catch::Approx(1.0).epsilon(1e-12));
    std::vector<double> small{0.3, 0.4};
    const std::vector<double> before = small;
    clip_gradient(small, 1.0);
    CHECK(small == before);  // untouched below the cap
    std::vector<double> off{30.0, 40.0};
    clip_gradient(off, 0.0);  // 0 disables clipping
    CHECK(off[0] == 30.0);
}

TEST_CASE("config validation") {
    OptimConfig cfg;
    cfg.beta1 = 1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = OptimConfig{};
    cfg.lr_init = 1.0;
    cfg.lr_peak = 0.5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
