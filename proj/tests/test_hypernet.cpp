#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "hyperl1/hypernet.hpp"
#include "hyperl1/mlp.hpp"
#include "test_util.hpp"

using namespace hyperl1;

namespace {

HyperWeights random_hw(const HyperNetLayout& layout, std::uint64_t seed, double scale = 0.2) {
    HyperWeights hw = HyperWeights::zeros(layout);
    RngStream rng(seed, "hw-init");
    for (auto& v : hw.flat) v = rng.normal() * scale;
    return hw;
}

void zero_learned_vars(HyperWeights& hw) {
    for (std::size_t k = hw.layout.learned_offset(); k < hw.flat.size(); ++k) hw.flat[k] = 0.0;
}

}  // namespace

TEST_CASE("positional encoding of index zero alternates") {
    auto pe = positional_encoding(0.0);
    for (std::size_t k = 0; k < pe.size(); k += 2) {
        CHECK(pe[k] == 0.0);
        CHECK(pe[k + 1] == 1.0);
    }
}

TEST_CASE("zero hyperweights generate layerwise-constant weights with zero KL") {
    HyperNetLayout layout(MlpSpec(3, 5));
    HyperWeights hw = HyperWeights::zeros(layout);
    RngStream rng(4, "gen");
    Generated g = generate_weights(hw, MlpSpec(3, 5), rng, GenMode::WithEncoder);
    CHECK(g.kl_total.item() == 0.0);
    for (const auto& w : g.weights.weights) {
        const double first = w[0];
        for (double v : w.values()) CHECK(v == first);
    }
}

TEST_CASE("generation is deterministic given the seed") {
    HyperNetLayout layout(MlpSpec(3, 5));
    HyperWeights hw = random_hw(layout, 7);
    RngStream r1(12, "gen");
    RngStream r2(12, "gen");
    Generated a = generate_weights(hw, MlpSpec(3, 5), r1, GenMode::WithEncoder);
    Generated b = generate_weights(hw, MlpSpec(3, 5), r2, GenMode::WithEncoder);
    for (std::size_t l = 0; l < a.weights.num_layers(); ++l) {
        CHECK(a.weights.weights[l].values() == b.weights.weights[l].values());
        CHECK(a.weights.biases[l].values() == b.weights.biases[l].values());
    }
    CHECK(a.kl_total.item() == b.kl_total.item());

    RngStream r3(13, "gen");
    Generated c = generate_weights(hw, MlpSpec(3, 5), r3, GenMode::WithEncoder);
    CHECK(a.weights.weights[0].values() != c.weights.weights[0].values());
}

TEST_CASE("symmetric sides give exactly zero KL") {
    // With the learned variables zeroed, encoder and decoder rows see
    // identical inputs, so q == p bitwise at every channel.
    HyperNetLayout layout(MlpSpec(3, 5));
    HyperWeights hw = random_hw(layout, 21);
    zero_learned_vars(hw);
    RngStream rng(5, "gen");
    Generated g = generate_weights(hw, MlpSpec(3, 5), rng, GenMode::WithEncoder);
    CHECK(g.kl_total.item() == 0.0);

    // And both modes then produce identical weights under the same seed.
    RngStream r1(6, "gen"), r2(6, "gen");
    Generated enc = generate_weights(hw, MlpSpec(3, 5), r1, GenMode::WithEncoder);
    Generated dec = generate_weights(hw, MlpSpec(3, 5), r2, GenMode::DecoderOnly);
    for (std::size_t l = 0; l < enc.weights.num_layers(); ++l)
        CHECK(enc.weights.weights[l].values() == dec.weights.weights[l].values());
}

TEST_CASE("decoder-only output is bit-invariant to encoder learned variables") {
    HyperNetLayout layout(MlpSpec(3, 5));
    HyperWeights hw = random_hw(layout, 8);
    HyperWeights perturbed = hw;
    RngStream noise(9, "perturb");
    for (std::size_t k = perturbed.layout.learned_offset(); k < perturbed.flat.size(); ++k)
        perturbed.flat[k] += noise.normal();

    RngStream r1(3, "gen"), r2(3, "gen");
    Generated a = generate_weights(hw, MlpSpec(3, 5), r1, GenMode::DecoderOnly);
    Generated b = generate_weights(perturbed, MlpSpec(3, 5), r2, GenMode::DecoderOnly);
    for (std::size_t l = 0; l < a.weights.num_layers(); ++l) {
        CHECK(a.weights.weights[l].values() == b.weights.weights[l].values());
        CHECK(a.weights.biases[l].values() == b.weights.biases[l].values());
    }

    // The encoder path does depend on them.
    RngStream r3(3, "gen"), r4(3, "gen");
    Generated ae = generate_weights(hw, MlpSpec(3, 5), r3, GenMode::WithEncoder);
    Generated be = generate_weights(perturbed, MlpSpec(3, 5), r4, GenMode::WithEncoder);
    CHECK(ae.weights.weights[0].values() != be.weights.weights[0].values());
}

TEST_CASE("kl_total is non-negative", "[property]") {
    HyperNetLayout layout(MlpSpec(2, 3));
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        HyperWeights hw = random_hw(layout, seed, 0.5);
        RngStream rng(seed, "gen");
        Generated g = generate_weights(hw, MlpSpec(2, 3), rng, GenMode::WithEncoder);
        CHECK(g.kl_total.item() >= 0.0);
    }
}

TEST_CASE("generated shapes follow the requested spec, including unseen sizes") {
    HyperNetLayout layout(MlpSpec(3, 5));
    HyperWeights hw = random_hw(layout, 30);
    for (auto [n0, n1] : {std::pair<std::size_t, std::size_t>{3, 5},
                          {2, 3},
                          {7, 11},
                          {12, 4}}) {
        MlpSpec spec(n0, n1);
        RngStream rng(n0 * 100 + n1, "gen");
        Generated g = generate_weights(hw, spec, rng, GenMode::DecoderOnly);
        CHECK_NOTHROW(g.weights.check_shapes(spec));
        CHECK(g.weights.finite());
        // forward must run at the new width
        RngStream data(1, "gen-task");
        TaskBatch batch = sample_batch(n0, 4, data);
        CHECK(mlp_forward(g.weights, batch.inputs).size() == 4);
    }
}

TEST_CASE("hyperweight length mismatch is rejected") {
    HyperNetLayout layout(MlpSpec(3, 5));
    Tensor short_hw = Tensor::zeros({layout.param_count() - 1});
    RngStream rng(1, "gen");
    CHECK_THROWS_AS(generate_weights(short_hw, layout, MlpSpec(3, 5), rng, GenMode::WithEncoder),
                    ConfigError);
    CHECK_THROWS_AS(generate_weights(Tensor::zeros({layout.param_count()}), layout,
                                     MlpSpec(std::vector<std::size_t>{3, 1}), rng,
                                     GenMode::WithEncoder),
                    ConfigError);
}

TEST_CASE("attention pool degenerate and symmetric cases") {
    // single edge: softmax over one row is 1, output equals its value
    Tensor q({1, 5}, {1, 2, 3, 4, 5});
    Tensor k({1, 5}, {0.5, -1, 2, 0, 1});
    Tensor v({1, 5}, {9, 8, 7, 6, 5});
    CHECK(attention_pool(q, k, v).values() == v.values());

    // equal keys: uniform attention, output is the mean of values
    Tensor q3({3, 5}, std::vector<double>(15, 0.3));
    Tensor k3({3, 5}, std::vector<double>(15, 1.0));
    std::vector<double> vals(15);
    for (std::size_t i = 0; i < 15; ++i) vals[i] = static_cast<double>(i);
    Tensor v3({3, 5}, vals);
    Tensor out = attention_pool(q3, k3, v3);
    for (std::size_t j = 0; j < 5; ++j) {
        const double m = (v3(0, j) + v3(1, j) + v3(2, j)) / 3.0;
        for (std::size_t i = 0; i < 3; ++i)
            CHECK_THAT(out(i, j), Catch::Matchers::WithinAbs(m, 1e-12));
    }

    // linearity in values
    Tensor v3x2({3, 5}, vals);
    for (auto& x : *v3x2.data) x *= 2.0;
    Tensor out2 = attention_pool(q3, k3, v3x2);
    for (std::size_t i = 0; i < 15; ++i)
        CHECK_THAT(out2[i], Catch::Matchers::WithinAbs(2.0 * out[i], 1e-12));
}

TEST_CASE("gaussian KL closed form") {
    CHECK(gaussian_kl_1d(0, 1, 0, 1) == 0.0);
    CHECK_THAT(gaussian_kl_1d(1, 1, 0, 1), Catch::Matchers::WithinAbs(0.5, 1e-14));
    CHECK_THAT(gaussian_kl_1d(0, 1, 0, 2),
               Catch::Matchers::WithinAbs(std::log(2.0) + 0.125 - 0.5, 1e-14));
}

TEST_CASE("channel: sampling side follows the mode and KL adds up") {
    Tensor mu_q({1, 4}, {1, 1, 1, 1});
    Tensor sq({1, 4}, {0, 0, 0, 0});
    Tensor mu_p({1, 4}, {0, 0, 0, 0});
    Tensor sp({1, 4}, {0, 0, 0, 0});
    Tensor eps({1, 4}, {0, 0, 0, 0});
    ChannelOut enc = gaussian_channel(mu_q, sq, mu_p, sp, eps, GenMode::WithEncoder);
    CHECK(enc.sample.values() == mu_q.values());  // eps = 0 -> sample = mean of q
    ChannelOut dec = gaussian_channel(mu_q, sq, mu_p, sp, eps, GenMode::DecoderOnly);
    CHECK(dec.sample.values() == mu_p.values());
    const double sigma = softplus_val(0.0) + 1e-6;
    const double expected = 4.0 * gaussian_kl_1d(1.0, sigma, 0.0, sigma);
    CHECK_THAT(enc.kl.item(), Catch::Matchers::WithinAbs(expected, 1e-12));
    CHECK(dec.kl.item() == enc.kl.item());  // KL reported in both modes
}

TEST_CASE("channel KL matches Monte Carlo", "[property]") {
    RngStream rng(55, "kl-mc");
    for (int trial = 0; trial < 10; ++trial) {
        const double mu_q = rng.uniform(1.5, 2.5) * (rng.next_u64() & 1 ? 1 : -1);
        const double mu_p = 0.0;
        const double s_q = rng.uniform(0.9, 1.1);
        const double s_p = rng.uniform(0.9, 1.1);
        const double closed = gaussian_kl_1d(mu_q, s_q, mu_p, s_p);
        double acc = 0;
        const std::size_t pairs = 20000;
        auto logpdf = [](double x, double mu, double s) {
            const double z = (x - mu) / s;
            return -0.5 * z * z - std::log(s);
        };
        for (std::size_t i = 0; i < pairs; ++i) {
            const double z = rng.normal();
            for (double zz : {z, -z}) {  // antithetic pair
                const double x = mu_q + s_q * zz;
                acc += logpdf(x, mu_q, s_q) - logpdf(x, mu_p, s_p);
            }
        }
        const double mc = acc / static_cast<double>(2 * pairs);
        CHECK(testutil::rel_err(mc, closed) < 0.01);
    }
}

TEST_CASE("gradient through generation matches finite differences") {
    MlpSpec spec(2, 3);
    HyperNetLayout layout(spec);
    HyperWeights hw = random_hw(layout, 40);
    RngStream data(41, "task");
    TaskBatch batch = sample_batch(2, 8, data);

    auto objective = [&](const std::vector<double>& flat, Tape* tape,
                         std::vector<double>* grad) {
        Tensor t = tape ? tape->leaf({flat.size()}, flat) : Tensor({flat.size()}, flat);
        RngStream rng(42, "gen");
        Generated g = generate_weights(t, layout, spec, rng, GenMode::WithEncoder);
        Tensor loss = mse_loss(mlp_forward(g.weights, batch.inputs), batch.targets);
        Tensor obj = loss + 0.05 * g.kl_total;
        if (tape) {
            tape->backward(obj);
            *grad = tape->grad(t);
        }
        return obj.item();
    };

    Tape tape;
    std::vector<double> grad;
    objective(hw.flat, &tape, &grad);
    RngStream pick(43, "pick");
    double worst = 0;
    for (int t = 0; t < 25; ++t) {
        const std::size_t k = pick.below(hw.flat.size());
        const double h = 1e-6;
        auto plus = hw.flat, minus = hw.flat;
        plus[k] += h;
        minus[k] -= h;
        const double fd = (objective(plus, nullptr, nullptr) - objective(minus, nullptr, nullptr)) /
                          (2 * h);
        worst = std::max(worst, testutil::rel_err(fd, grad[k]));
    }
    CHECK(worst < 1e-4);
}
