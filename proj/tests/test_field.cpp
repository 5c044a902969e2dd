#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "sbfm/checkpoint.hpp"
#include "sbfm/field.hpp"
#include "sbfm/rng.hpp"

using namespace sbfm;

namespace {

FieldConfig small_config() {
    FieldConfig cfg;
    cfg.d_a = 2;
    cfg.d_v_total = 2;
    cfg.trunk_width = 8;
    cfg.trunk_depth = 2;
    cfg.head_width = 4;
    cfg.head_depth = 2;
    cfg.cond_a_dim = 3;
    cfg.cond_v_dim = 2;
    cfg.time_embed_dim = 4;
    return cfg;
}

ConditionEmbedding random_cond(const FieldConfig& cfg, RandomStream& rng) {
    ConditionEmbedding cond;
    cond.phi_a.resize(cfg.cond_a_dim);
    cond.phi_v.resize(cfg.cond_v_dim);
    for (double& v : cond.phi_a) v = rng.normal();
    for (double& v : cond.phi_v) v = rng.normal();
    return cond;
}

LatentState random_state(const FieldConfig& cfg, RandomStream& rng) {
    LatentState x(cfg.d_a, cfg.d_v_total);
    for (double& v : x.joint()) v = rng.normal();
    return x;
}

// randomize every tensor, including the normally zero-initialized final
// layers, so gradients reach all parameters
FieldParams dense_random_params(const FieldConfig& cfg, RandomStream& rng) {
    FieldParams p(cfg);
    for (double& v : p.values()) v = 0.4 * rng.normal();
    return p;
}

// the loss whose gradient backward() reports; item residual fields hold the
// regression target here
double weighted_loss_value(const FieldParams& p, std::span<const BackwardItem> batch) {
    double acc = 0.0;
    for (const BackwardItem& item : batch) {
        const Velocity out = forward(p, item.x, item.t, item.cond);
        double a = 0.0, v = 0.0;
        for (std::size_t i = 0; i < out.audio.size(); ++i) {
            const double r = out.audio[i] - item.residual_a[i];
            a += r * r;
        }
        for (std::size_t i = 0; i < out.video.size(); ++i) {
            const double r = out.video[i] - item.residual_v[i];
            v += r * r;
        }
        acc += a + item.lambda * v;
    }
    return acc / static_cast<double>(batch.size());
}

}  // namespace

TEST_CASE("time_embedding basics") {
    const auto at_zero = time_embedding(0.0, 8);
    for (int i = 0; i < 4; ++i) {
        CHECK(at_zero[i] == 0.0);      // sin block
        CHECK(at_zero[4 + i] == 1.0);  // cos block
    }
    CHECK(time_embedding(0.37, 16) == time_embedding(0.37, 16));
    CHECK_THROWS_AS(time_embedding(0.5, 7), std::invalid_argument);

    // Lipschitz sanity: max frequency 100 bounds the slope
    const auto a = time_embedding(0.5, 32);
    const auto b = time_embedding(0.5 + 1e-9, 32);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-6);
}

TEST_CASE("layout covers the flat vector exactly") {
    const FieldConfig cfg = small_config();
    const FieldArchitecture arch = build_architecture(cfg);
    std::size_t expected_offset = 0;
    for (const TensorSpec& ts : arch.layout.tensors) {
        CHECK(ts.offset == expected_offset);
        expected_offset += ts.size();
    }
    CHECK(arch.layout.total_size == expected_offset);

    FieldConfig linear = cfg;
    linear.heads = HeadMode::Linear;
    const FieldArchitecture larch = build_architecture(linear);
    CHECK(larch.split.has_value());
    CHECK(larch.head_a.empty());
    CHECK(larch.split->out == cfg.d_a + cfg.d_v_total);
}

TEST_CASE("zero parameters and zero-initialized heads give the zero field") {
    const FieldConfig cfg = small_config();
    RandomStream rng(5, "zero-field");
    const LatentState x = random_state(cfg, rng);
    const ConditionEmbedding cond = random_cond(cfg, rng);

    const FieldParams zeros(cfg);
    const Velocity v0 = forward(zeros, x, 0.3, cond);
    for (double v : v0.audio) CHECK(v == 0.0);
    for (double v : v0.video) CHECK(v == 0.0);

    // random init zero-initializes each head's final layer
    RandomStream init(7, "init");
    const FieldParams p = FieldParams::random_init(cfg, init);
    const Velocity v1 = forward(p, x, 0.3, cond);
    for (double v : v1.audio) CHECK(v == 0.0);
    for (double v : v1.video) CHECK(v == 0.0);

    FieldConfig linear_cfg = cfg;
    linear_cfg.heads = HeadMode::Linear;
    RandomStream init2(7, "init");
    const FieldParams lp = FieldParams::random_init(linear_cfg, init2);
    const Velocity v2 = forward(lp, x, 0.3, cond);
    for (double v : v2.audio) CHECK(v == 0.0);
    for (double v : v2.video) CHECK(v == 0.0);
}

TEST_CASE("permuting hidden units with matching in/out weights preserves the output") {
    const FieldConfig cfg = small_config();
    RandomStream rng(11, "perm");
    FieldParams p = dense_random_params(cfg, rng);
    const LatentState x = random_state(cfg, rng);
    const ConditionEmbedding cond = random_cond(cfg, rng);
    const Velocity before = forward(p, x, 0.42, cond);

    // swap hidden units 1 and 3 of trunk layer 0: rows of trunk.0, columns of trunk.1
    const std::size_t u = 1, w = 3;
    auto w0 = p.tensor("trunk.0.w");
    auto b0 = p.tensor("trunk.0.b");
    const std::size_t in0 = cfg.trunk_in_dim();
    for (std::size_t i = 0; i < in0; ++i) std::swap(w0[u * in0 + i], w0[w * in0 + i]);
    std::swap(b0[u], b0[w]);
    auto w1 = p.tensor("trunk.1.w");
    for (std::size_t o = 0; o < cfg.trunk_width; ++o)
        std::swap(w1[o * cfg.trunk_width + u], w1[o * cfg.trunk_width + w]);

    const Velocity after = forward(p, x, 0.42, cond);
    for (std::size_t i = 0; i < before.audio.size(); ++i)
        CHECK(after.audio[i] == Catch::Approx(before.audio[i]).margin(1e-12));
    for (std::size_t i = 0; i < before.video.size(); ++i)
        CHECK(after.video[i] == Catch::Approx(before.video[i]).margin(1e-12));
}

TEST_CASE("forward is bitwise deterministic") {
    const FieldConfig cfg = small_config();
    RandomStream rng(13, "determinism");
    const FieldParams p = dense_random_params(cfg, rng);
    const LatentState x = random_state(cfg, rng);
    const ConditionEmbedding cond = random_cond(cfg, rng);
    const Velocity a = forward(p, x, 0.61, cond);
    const Velocity b = forward(p, x, 0.61, cond);
    CHECK(a.audio == b.audio);
    CHECK(a.video == b.video);
}

TEST_CASE("golden regression pin for a fixed seed and input") {
    FieldConfig cfg = small_config();
    RandomStream init(20240, "golden-init");
    FieldParams p = dense_random_params(cfg, init);
    LatentState x = LatentState::from_blocks({0.25, -0.5}, {1.0, 0.125});
    ConditionEmbedding cond{{0.5, 0.0, -0.25}, {0.75, -1.0}};
    const Velocity v = forward(p, x, 0.375, cond);

    // frozen once from this exact configuration; guards numerical drift
    const double expected_audio[2] = {0x1.7274667f4896cp-3, -0x1.4e9338728bb1fp-3};
    const double expected_video[2] = {0x1.e464df9e031f8p-1, -0x1.a6dfbadd87bf8p-3};
    for (int i = 0; i < 2; ++i) {
        CHECK(v.audio[i] == expected_audio[i]);
        CHECK(v.video[i] == expected_video[i]);
    }
}

TEST_CASE("gradient matches central finite differences on random small nets") {
    const double fd_step = 1e-5;
    for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
        FieldConfig cfg = small_config();
        if (seed % 2 == 0) cfg.activation = Activation::GeluApprox;
        if (seed == 5) cfg.heads = HeadMode::Linear;
        RandomStream rng(seed, "grad-check");
        FieldParams p = dense_random_params(cfg, rng);

        std::vector<BackwardItem> batch(3);
        for (BackwardItem& item : batch) {
            item.x = random_state(cfg, rng);
            item.t = rng.uniform(0.05, 0.95);
            item.cond = random_cond(cfg, rng);
            item.lambda = 3.0;
            item.residual_a.resize(cfg.d_a);
            item.residual_v.resize(cfg.d_v_total);
            for (double& v : item.residual_a) v = rng.normal();  // targets
            for (double& v : item.residual_v) v = rng.normal();
        }
        // convert targets into residuals for backward()
        std::vector<BackwardItem> grad_batch = batch;
        for (BackwardItem& item : grad_batch) {
            const Velocity pred = forward(p, item.x, item.t, item.cond);
            for (std::size_t i = 0; i < pred.audio.size(); ++i)
                item.residual_a[i] = pred.audio[i] - item.residual_a[i];
            for (std::size_t i = 0; i < pred.video.size(); ++i)
                item.residual_v[i] = pred.video[i] - item.residual_v[i];
        }
        const std::vector<double> grad = backward(p, grad_batch);

        double worst = 0.0;
        for (std::size_t i = 0; i < p.values().size(); ++i) {
            const double orig = p.values()[i];
            p.values()[i] = orig + fd_step;
            const double up = weighted_loss_value(p, batch);
            p.values()[i] = orig - fd_step;
            const double down = weighted_loss_value(p, batch);
            p.values()[i] = orig;
            const double fd = (up - down) / (2.0 * fd_step);
            const double rel =
                std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-6});
            worst = std::max(worst, rel);
        }
        INFO("seed " << seed << " worst rel err " << worst);
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("zero residuals give a zero gradient; lambda scales the video path") {
    const FieldConfig cfg = small_config();
    RandomStream rng(31, "lambda-scale");
    const FieldParams p = dense_random_params(cfg, rng);

    BackwardItem item;
    item.x = random_state(cfg, rng);
    item.t = 0.5;
    item.cond = random_cond(cfg, rng);
    item.lambda = 3.0;
    item.residual_a.assign(cfg.d_a, 0.0);
    item.residual_v.assign(cfg.d_v_total, 0.0);
    const std::vector<BackwardItem> zero_batch{item};
    const std::vector<double> zero_grad = backward(p, zero_batch);
    for (double g : zero_grad) CHECK(g == 0.0);

    // zero audio residuals: doubling lambda doubles the gradient exactly
    for (double& v : item.residual_v) v = rng.normal();
    std::vector<BackwardItem> batch{item};
    const std::vector<double> g1 = backward(p, batch);
    batch[0].lambda = 6.0;
    const std::vector<double> g2 = backward(p, batch);
    for (std::size_t i = 0; i < g1.size(); ++i)
        CHECK(g2[i] == Catch::Approx(2.0 * g1[i]).margin(0));
}

TEST_CASE("head separation: zeroing one head silences only its block") {
    const FieldConfig cfg = small_config();
    RandomStream rng(37, "heads");
    FieldParams p = dense_random_params(cfg, rng);
    const LatentState x = random_state(cfg, rng);
    const ConditionEmbedding cond = random_cond(cfg, rng);
    const Velocity before = forward(p, x, 0.7, cond);

    FieldParams video_off = p;
    for (std::size_t l = 0; l < cfg.head_depth; ++l) {
        const std::string prefix = "head_v." + std::to_string(l);
        for (double& v : video_off.tensor(prefix + ".w")) v = 0.0;
        for (double& v : video_off.tensor(prefix + ".b")) v = 0.0;
    }
    const Velocity va = forward(video_off, x, 0.7, cond);
    CHECK(va.audio == before.audio);
    for (double v : va.video) CHECK(v == 0.0);

    FieldParams audio_off = p;
    for (std::size_t l = 0; l < cfg.head_depth; ++l) {
        const std::string prefix = "head_a." + std::to_string(l);
        for (double& v : audio_off.tensor(prefix + ".w")) v = 0.0;
        for (double& v : audio_off.tensor(prefix + ".b")) v = 0.0;
    }
    const Velocity vv = forward(audio_off, x, 0.7, cond);
    CHECK(vv.video == before.video);
    for (double v : vv.audio) CHECK(v == 0.0);
}

TEST_CASE("with zeroed inputs the output depends only on time and biases") {
    const FieldConfig cfg = small_config();
    RandomStream rng(41, "scale-sanity");
    const FieldParams p = dense_random_params(cfg, rng);
    const LatentState zero_x(cfg.d_a, cfg.d_v_total);
    ConditionEmbedding zero_cond;
    zero_cond.phi_a.assign(cfg.cond_a_dim, 0.0);
    zero_cond.phi_v.assign(cfg.cond_v_dim, 0.0);

    const Velocity a = forward(p, zero_x, 0.25, zero_cond);
    const Velocity b = forward(p, zero_x, 0.25, zero_cond);
    CHECK(a.audio == b.audio);
    CHECK(a.video == b.video);
    const Velocity c = forward(p, zero_x, 0.75, zero_cond);
    CHECK(a.audio != c.audio);
}

TEST_CASE("checkpoint round-trip reproduces forward outputs bitwise") {
    const FieldConfig cfg = small_config();
    RandomStream rng(43, "ckpt");
    const FieldParams p = dense_random_params(cfg, rng);
    const LatentState x = random_state(cfg, rng);
    const ConditionEmbedding cond = random_cond(cfg, rng);

    const auto dir = std::filesystem::temp_directory_path() / "sbfm_test_ckpt";
    std::filesystem::create_directories(dir);
    const auto path = dir / "params.sbfm";
    save_checkpoint(path, p);
    const FieldParams loaded = load_checkpoint(path);

    CHECK(loaded.values() == p.values());
    const Velocity a = forward(p, x, 0.33, cond);
    const Velocity b = forward(loaded, x, 0.33, cond);
    CHECK(a.audio == b.audio);
    CHECK(a.video == b.video);

    // corrupting the magic must be rejected
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(0);
        f.write("XXXX", 4);
    }
    CHECK_THROWS(load_checkpoint(path));
    std::filesystem::remove_all(dir);
}

TEST_CASE("a non-finite activation names the offending layer") {
    const FieldConfig cfg = small_config();
    RandomStream rng(47, "nonfinite");
    const FieldParams p = dense_random_params(cfg, rng);
    LatentState x = random_state(cfg, rng);
    x[0] = std::numeric_limits<double>::infinity();
    const ConditionEmbedding cond = random_cond(cfg, rng);
    try {
        forward(p, x, 0.5, cond);
        FAIL("expected numeric_error");
    } catch (const numeric_error& e) {
        CHECK(std::string(e.what()).find("trunk.0") != std::string::npos);
    }
}

TEST_CASE("config validation rejects odd time embeddings and oversized phi_a") {
    FieldConfig cfg = small_config();
    cfg.time_embed_dim = 5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = small_config();
    cfg.cond_a_dim = cfg.time_embed_dim + 1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
