#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hyperl1/constructors.hpp"
#include "hyperl1/mlp.hpp"
#include "test_util.hpp"

using namespace hyperl1;

TEST_CASE("forward on zero weights is zero") {
    MlpWeights w = MlpWeights::zeros(MlpSpec(5, 7));
    RngStream rng(1, "fwd");
    TaskBatch b = sample_batch(5, 8, rng);
    Tensor out = mlp_forward(w, b.inputs);
    for (double v : out.values()) CHECK(v == 0.0);
}

TEST_CASE("forward 1-1-1 closed form") {
    MlpWeights w = MlpWeights::zeros(MlpSpec(1, 1));
    (*w.weights[0].data)[0] = 1.0;
    (*w.weights[1].data)[0] = 1.0;
    Tensor out = mlp_forward(w, Tensor({1, 1}, {1.0}));
    CHECK_THAT(out.item(), Catch::Matchers::WithinAbs(0.7310585786300049, 1e-14));
}

TEST_CASE("forward of double-sided constructor on a unit vector") {
    ConstructorConfig cfg;
    cfg.n0 = 16;
    cfg.n1 = 48;
    cfg.act_scale = 50.0;
    MlpWeights w = build_double_sided(cfg);
    std::vector<double> e1(16, 0.0);
    e1[0] = 1.0;
    Tensor out = mlp_forward(w, Tensor({1, 16}, e1));
    CHECK_THAT(out.item(), Catch::Matchers::WithinAbs((1.0 - 12.7662) / 2.4112, 1e-3));
}

TEST_CASE("forward rejects width mismatch") {
    MlpWeights w = MlpWeights::zeros(MlpSpec(4, 6));
    CHECK_THROWS_AS(mlp_forward(w, Tensor({2, 3}, {1, 2, 3, 4, 5, 6})), ShapeError);
}

TEST_CASE("hidden permutation invariance", "[property]") {
    RngStream rng(7, "perm");
    ConstructorConfig cfg;
    cfg.n0 = 4;
    cfg.n1 = 9;
    MlpWeights w = build_convexity(cfg, rng);
    TaskBatch batch = sample_batch(4, 32, rng);
    Tensor base = mlp_forward(w, batch.inputs);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<std::size_t> perm(9);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        for (std::size_t i = 8; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
        MlpWeights pw = w;
        pw.weights[0] = gather_rows(w.weights[0], perm);
        std::vector<double> b0(9), w1(9);
        for (std::size_t j = 0; j < 9; ++j) {
            b0[j] = w.biases[0][perm[j]];
            w1[j] = w.weights[1](0, perm[j]);
        }
        pw.biases[0] = Tensor({9}, b0);
        pw.weights[1] = Tensor({1, 9}, w1);
        Tensor out = mlp_forward(pw, batch.inputs);
        for (std::size_t k = 0; k < out.size(); ++k)
            CHECK_THAT(out[k], Catch::Matchers::WithinAbs(base[k], 1e-12));
    }
}

TEST_CASE("standardization constants vs Monte Carlo") {
    // 1e6-sample check that targets have mean 0, variance 1, and that the
    // analytic raw moments match the half-normal formulas within 0.5%.
    const std::size_t n0 = 16;
    RngStream rng(99, "std-mc");
    const std::size_t n = 1000000;
    double sum_t = 0, sum_t2 = 0, sum_raw = 0, sum_raw2 = 0;
    const double mu = l1_target_mean(n0), sd = l1_target_std(n0);
    for (std::size_t b = 0; b < n; ++b) {
        double l1 = 0;
        for (std::size_t i = 0; i < n0; ++i) l1 += std::abs(rng.normal());
        const double t = (l1 - mu) / sd;
        sum_t += t;
        sum_t2 += t * t;
        sum_raw += l1;
        sum_raw2 += l1 * l1;
    }
    const double mean_t = sum_t / n;
    const double var_t = sum_t2 / n - mean_t * mean_t;
    CHECK_THAT(mean_t, Catch::Matchers::WithinAbs(0.0, 0.01));
    CHECK_THAT(var_t, Catch::Matchers::WithinAbs(1.0, 0.02));
    const double mean_raw = sum_raw / n;
    const double var_raw = sum_raw2 / n - mean_raw * mean_raw;
    CHECK(std::abs(mean_raw - mu) / mu < 0.005);
    CHECK(std::abs(var_raw - sd * sd) / (sd * sd) < 0.005);
    CHECK_THAT(mu, Catch::Matchers::WithinAbs(12.7662, 1e-4));
    CHECK_THAT(sd * sd, Catch::Matchers::WithinAbs(5.8141, 1e-3));
}

TEST_CASE("sample_batch determinism") {
    RngStream a(5, "task", 17);
    RngStream b(5, "task", 17);
    TaskBatch ba = sample_batch(6, 32, a);
    TaskBatch bb = sample_batch(6, 32, b);
    CHECK(ba.inputs.values() == bb.inputs.values());
    CHECK(ba.targets.values() == bb.targets.values());
    RngStream c(5, "task", 18);
    TaskBatch bc = sample_batch(6, 32, c);
    CHECK(ba.inputs.values() != bc.inputs.values());
}

TEST_CASE("mse_loss") {
    Tensor p({3, 1}, {1, 2, 3});
    CHECK(mse_loss(p, p).item() == 0.0);
    Tensor q({3, 1}, {3, 4, 5});
    CHECK(mse_loss(q, p).item() == 4.0);
    CHECK_THROWS_AS(mse_loss(Tensor({0}, {}), Tensor({0}, {})), DomainError);
    CHECK_THROWS_AS(mse_loss(p, Tensor({2, 1}, {1, 2})), ShapeError);
}

TEST_CASE("constant zero predictor has unit loss on standardized targets") {
    RngStream rng(11, "zero-pred");
    TaskBatch b = sample_batch(16, 1000000, rng);
    Tensor zero = Tensor::zeros({b.targets.size(), 1});
    CHECK_THAT(mse_loss(zero, b.targets).item(), Catch::Matchers::WithinAbs(1.0, 0.02));
}
