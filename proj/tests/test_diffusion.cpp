#include <cmath>
#include <stdexcept>

#include <doctest.h>

#include "test_support.hpp"
#include "tlora/diffusion.hpp"
#include "tlora/errors.hpp"

using namespace tlora;
using testing::max_abs_diff;
using testing::random_matrix;

TEST_CASE("noise schedule invariants") {
    const NoiseSchedule s = NoiseSchedule::linear();
    CHECK(s.T == 1000);
    CHECK(s.alpha_bar.size() == 1001);
    CHECK(s.alpha_bar[0] == 1.0);
    for (int t = 1; t <= s.T; ++t) {
        CHECK(s.alpha_bar[t] < s.alpha_bar[t - 1]);
        CHECK(s.alpha_bar[t] > 0.0);
        CHECK(s.beta[t - 1] > 0.0);
        CHECK(s.beta[t - 1] < 1.0);
    }
    CHECK(s.alpha_bar[1000] < 0.01);  // t = T is near pure noise

    CHECK_THROWS_AS(NoiseSchedule::linear(0), ConfigError);
    CHECK_THROWS_AS(NoiseSchedule::linear(10, 0.5, 0.1), ConfigError);
}

TEST_CASE("forward_diffuse closed form") {
    NoiseSchedule s = NoiseSchedule::linear(4, 1e-4, 0.02);
    Matrix z0(2, 1), eps(2, 1);
    z0(0, 0) = 1.0;
    eps(1, 0) = 1.0;

    // hand evaluation at alpha_bar = 0.25
    s.alpha_bar[2] = 0.25;
    const Matrix zt = forward_diffuse(z0, 2, eps, s);
    CHECK(zt(0, 0) == doctest::Approx(0.5));
    CHECK(zt(1, 0) == doctest::Approx(std::sqrt(0.75)));

    // limits
    s.alpha_bar[2] = 1.0 - 1e-12;
    CHECK(max_abs_diff(forward_diffuse(z0, 2, eps, s), z0) < 2e-6);
    s.alpha_bar[2] = 1e-12;
    CHECK(max_abs_diff(forward_diffuse(z0, 2, eps, s), eps) < 2e-6);

    CHECK_THROWS_AS(forward_diffuse(z0, 0, eps, s), std::invalid_argument);
    CHECK_THROWS_AS(forward_diffuse(z0, 5, eps, s), std::invalid_argument);
}

TEST_CASE("timestep samplers stay inside their ranges") {
    const int T = 1000;
    Rng rng(4);
    const TimestepSampler uniform = TimestepSampler::uniform();
    for (int i = 0; i < 500; ++i) {
        const int t = uniform.draw(rng, T);
        CHECK(t >= 1);
        CHECK(t <= T);
    }
    const TimestepSampler high = TimestepSampler::interval(800, 1000, T);
    const TimestepSampler low = TimestepSampler::interval(0, 500, T);
    bool low_hit_one = false;
    for (int i = 0; i < 500; ++i) {
        const int th = high.draw(rng, T);
        CHECK(th >= 800);
        CHECK(th <= 1000);
        const int tl = low.draw(rng, T);
        CHECK(tl >= 1);  // 0 is not a training timestep
        CHECK(tl <= 500);
        low_hit_one = low_hit_one || tl < 10;
    }
    CHECK(low_hit_one);

    CHECK_THROWS_AS(TimestepSampler::interval(500, 500, T), ConfigError);
    CHECK_THROWS_AS(TimestepSampler::interval(-1, 500, T), ConfigError);
    CHECK_THROWS_AS(TimestepSampler::interval(0, 1001, T), ConfigError);
}

TEST_CASE("toy dataset geometry") {
    const ToyDataset data;
    const auto m0 = data.mode_mean(0);
    CHECK(m0[0] == doctest::Approx(1.0));
    CHECK(m0[1] == doctest::Approx(0.0));
    const auto m2 = data.mode_mean(2);
    CHECK(m2[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(m2[1] == doctest::Approx(1.0));

    const Matrix pts = data.concept_points(5);
    CHECK(pts.cols() == 4);
    CHECK(pts == data.concept_points(5));
    // concept cloud hugs mode 0
    for (std::size_t j = 0; j < pts.cols(); ++j) {
        CHECK(std::abs(pts(0, j) - 1.0) < 0.5);
        CHECK(std::abs(pts(1, j)) < 0.2);
    }
}

TEST_CASE("denoiser wiring: shapes, tokens, determinism") {
    DenoiserShape shape;
    Denoiser d = Denoiser::init(shape, 8, 9);
    CHECK(d.in_proj.weight.value.rows() == 64);
    CHECK(d.in_proj.weight.value.cols() == 26);
    CHECK(d.hidden.size() == 3);
    CHECK(d.head.weight.value.rows() == 2);
    CHECK(d.cond_table.rows() == 9);

    CHECK(d.token_index("c0") == 0);
    CHECK(d.token_index("c7") == 7);
    CHECK(d.token_index("V*") == 8);
    CHECK_THROWS_AS(d.token_index("c8"), ConfigError);
    CHECK_THROWS_AS(d.token_index("x"), ConfigError);

    // embedding sum
    const Matrix both = d.embed_tokens({"V*", "c3"});
    for (int i = 0; i < 8; ++i) {
        CHECK(both(i, 0) == doctest::Approx(d.cond_table(8, i) + d.cond_table(3, i)));
    }

    const Matrix z = random_matrix(2, 5, 10);
    const Matrix cond = random_matrix(8, 5, 11);
    const int ts[1] = {100};
    Denoiser d2 = Denoiser::init(shape, 8, 9);
    CHECK(max_abs_diff(d.forward(z, ts, cond), d2.forward(z, ts, cond)) == 0.0);
}

TEST_CASE("time embedding stays bounded and distinguishes timesteps") {
    const Denoiser d = Denoiser::init(DenoiserShape{}, 8, 1);
    const int ts[3] = {1, 500, 1000};
    const Matrix emb = d.time_embedding(ts);
    CHECK(emb.rows() == 16);
    for (std::size_t i = 0; i < emb.size(); ++i) CHECK(std::abs(emb.data()[i]) <= 1.0);
    double diff = 0.0;
    for (std::size_t i = 0; i < 16; ++i) diff += std::abs(emb(i, 0) - emb(i, 2));
    CHECK(diff > 0.5);
}

TEST_CASE("pretrain: zero steps is a no-op, loss decreases over a short run") {
    const ToyDataset data;
    const NoiseSchedule sched = NoiseSchedule::linear();
    DenoiserShape shape;
    shape.hidden_width = 32;
    Denoiser d = Denoiser::init(shape, 8, 21);

    const Matrix before = d.in_proj.weight.value;
    PretrainConfig none;
    none.steps = 0;
    CHECK(pretrain(d, data, sched, none).loss.empty());
    CHECK(d.in_proj.weight.value == before);

    PretrainConfig cfg;
    cfg.steps = 600;
    cfg.batch_size = 16;
    cfg.adam.lr = 1e-3;  // fast smoke run
    cfg.seed = 22;
    const LossTrace trace = pretrain(d, data, sched, cfg);
    REQUIRE(trace.loss.size() == 600);
    double head = 0.0, tail = 0.0;
    for (int i = 0; i < 100; ++i) head += trace.loss[i];
    for (int i = 500; i < 600; ++i) tail += trace.loss[i];
    CHECK(tail < head);
}

TEST_CASE("finetune freezes the base and honors the interval sampler") {
    const ToyDataset data;
    const NoiseSchedule sched = NoiseSchedule::linear(200, 1e-4, 0.02);
    DenoiserShape shape;
    shape.hidden_width = 16;
    shape.time_dim = 8;
    shape.cond_dim = 4;
    shape.hidden_layers = 2;
    Denoiser d = Denoiser::init(shape, 8, 31);

    const Matrix in_w = d.in_proj.weight.value;
    const Matrix head_w = d.head.weight.value;
    const Matrix table = d.cond_table;

    FinetuneConfig cfg;
    cfg.adapter.kind = AdapterKind::TLoRA;
    cfg.adapter.r = 8;
    cfg.adapter.r_min = 4;
    cfg.sampler = TimestepSampler::interval(150, 200, sched.T);
    cfg.steps = 60;
    cfg.seed = 32;
    cfg.record_trace = true;
    const FinetuneRecord rec = finetune(d, data, sched, cfg);

    CHECK(d.in_proj.weight.value == in_w);
    CHECK(d.head.weight.value == head_w);
    CHECK(d.cond_table == table);

    REQUIRE(rec.steps.size() == 60);
    const MaskSchedule ms(8, 4, sched.T);
    for (const auto& row : rec.steps) {
        CHECK(row.t >= 150);
        CHECK(row.t <= 200);
        CHECK(row.rank_t == ms.rank_at(row.t));
        CHECK(row.rank_t >= ms.rank_at(200));
        CHECK(row.rank_t <= ms.rank_at(150));
    }
    // step-0 trace rows exist and show orthonormal init
    int zero_rows = 0;
    for (const auto& tr : rec.trace) {
        if (tr.step == 0) {
            ++zero_rows;
            CHECK(tr.err_a <= 1e-12);
            CHECK(tr.err_b <= 1e-12);
        }
    }
    CHECK(zero_rows == 2);
}

TEST_CASE("finetune requires a schedule for masked kinds") {
    const ToyDataset data;
    const NoiseSchedule sched = NoiseSchedule::linear(50, 1e-4, 0.02);
    DenoiserShape shape;
    shape.hidden_width = 16;
    shape.time_dim = 8;
    shape.cond_dim = 4;
    shape.hidden_layers = 2;
    Denoiser d = Denoiser::init(shape, 8, 41);

    FinetuneConfig cfg;
    cfg.adapter.kind = AdapterKind::VanillaTLoRA;
    cfg.adapter.r = 4;
    cfg.adapter.r_min = std::nullopt;
    cfg.steps = 1;
    CHECK_THROWS_AS(finetune(d, data, sched, cfg), ConfigError);
}

TEST_CASE("sampling is reproducible and batch-size independent") {
    DenoiserShape shape;
    shape.hidden_width = 16;
    shape.time_dim = 8;
    shape.cond_dim = 4;
    shape.hidden_layers = 2;
    Denoiser d = Denoiser::init(shape, 8, 51);
    const NoiseSchedule sched = NoiseSchedule::linear(40, 1e-4, 0.02);

    const Matrix s1 = sample(d, sched, {"c2"}, 6, 99);
    const Matrix s2 = sample(d, sched, {"c2"}, 6, 99);
    CHECK(s1 == s2);

    // chain j of a larger run equals chain j of a smaller run
    const Matrix s3 = sample(d, sched, {"c2"}, 3, 99);
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(s1(0, j) == s3(0, j));
        CHECK(s1(1, j) == s3(1, j));
    }

    const Matrix other_seed = sample(d, sched, {"c2"}, 6, 100);
    CHECK(s1 != other_seed);
}

TEST_CASE("mask override changes sampling for a masked adapter") {
    DenoiserShape shape;
    shape.hidden_width = 16;
    shape.time_dim = 8;
    shape.cond_dim = 4;
    shape.hidden_layers = 2;
    Denoiser d = Denoiser::init(shape, 8, 61);
    const NoiseSchedule sched = NoiseSchedule::linear(40, 1e-4, 0.02);

    const ToyDataset data;
    FinetuneConfig cfg;
    cfg.adapter.kind = AdapterKind::TLoRA;
    cfg.adapter.r = 8;
    cfg.adapter.r_min = 2;
    cfg.steps = 120;
    cfg.seed = 62;
    finetune(d, data, sched, cfg);

    const Matrix masked = sample(d, sched, {"V*", "c0"}, 8, 5);
    const Matrix full_rank = sample(d, sched, {"V*", "c0"}, 8, 5, 0);  // rank_at(0) = r
    CHECK(masked != full_rank);  // inference-time masking is active
}
