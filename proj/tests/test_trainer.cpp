#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "hyperl1/io.hpp"
#include "hyperl1/trainer.hpp"
#include "test_util.hpp"

using namespace hyperl1;

TEST_CASE("log-beta rescaling endpoints") {
    CHECK(beta_to_input(1.0) == 1.0);
    CHECK(beta_to_input(1e-12) == -1.0);
    CHECK_THAT(beta_to_input(1e-6), Catch::Matchers::WithinAbs(0.0, 1e-12));
    CHECK_THROWS_AS(beta_to_input(0.0), DomainError);
    CHECK_THROWS_AS(beta_to_input(-1.0), DomainError);
}

TEST_CASE("hyperhypernetwork output combines as a*sigmoid(b)") {
    HyperHyperSpec hspec;
    hspec.hyperweight_count = 17;
    RngStream init(3, "hhw-init");
    ParamSet hhw = init_hyperhyper(hspec, init);
    Tensor hw = generate_hyperweights(hhw, 0.5, nullptr);
    CHECK(hw.size() == 17);
    // recompute by hand from the forward pass halves
    MlpWeights net;
    for (std::size_t k = 0; k + 1 < hhw.size(); k += 2) {
        net.weights.push_back(Tensor(hhw[k].shape, hhw[k].value));
        net.biases.push_back(Tensor(hhw[k + 1].shape, hhw[k + 1].value));
    }
    Tensor out = mlp_forward(net, Tensor({1, 1}, {beta_to_input(0.5)}));
    for (std::size_t i = 0; i < 17; ++i)
        CHECK_THAT(hw[i], Catch::Matchers::WithinAbs(out[i] * sigmoid_val(out[i + 17]), 1e-15));
}

TEST_CASE("train_step metrics satisfy the objective identity") {
    TrainConfig cfg;
    cfg.steps = 3;
    cfg.batch_size = 8;
    ParetoTrainer trainer(MlpSpec(2, 3), cfg);
    for (int i = 0; i < 3; ++i) {
        StepMetrics m = trainer.train_step();
        CHECK_THAT(m.objective,
                   Catch::Matchers::WithinAbs(std::log(m.loss + m.beta * m.kl), 1e-12));
        CHECK(m.beta >= 1e-12);
        CHECK(m.beta <= 1.0);
        CHECK(m.kl >= 0.0);
    }
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
    TrainConfig cfg;
    cfg.lr = 0.0;
    cfg.batch_size = 8;
    ParetoTrainer trainer(MlpSpec(2, 3), cfg);
    const ParamSet before = trainer.hhw();
    trainer.train_step();
    trainer.train_step();
    for (std::size_t k = 0; k < before.size(); ++k)
        CHECK(before[k].value == trainer.hhw()[k].value);
}

TEST_CASE("training is deterministic under a fixed seed") {
    TrainConfig cfg;
    cfg.batch_size = 8;
    cfg.seed = 5;
    ParetoTrainer a(MlpSpec(2, 3), cfg);
    ParetoTrainer b(MlpSpec(2, 3), cfg);
    for (int i = 0; i < 5; ++i) {
        StepMetrics ma = a.train_step();
        StepMetrics mb = b.train_step();
        CHECK(ma.objective == mb.objective);
    }
    for (std::size_t k = 0; k < a.hhw().size(); ++k)
        CHECK(a.hhw()[k].value == b.hhw()[k].value);
}

TEST_CASE("short training run improves the objective") {
    TrainConfig cfg;
    cfg.steps = 200;
    cfg.batch_size = 32;
    cfg.seed = 1;
    ParetoTrainer trainer(MlpSpec(4, 12), cfg);
    std::vector<double> objectives;
    for (int i = 0; i < 200; ++i) objectives.push_back(trainer.train_step().objective);
    auto median_of = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
    };
    const double first = median_of({objectives.begin(), objectives.begin() + 20});
    const double last = median_of({objectives.end() - 20, objectives.end()});
    CHECK(last < first);
}

TEST_CASE("objective gradient matches finite differences on a miniature instance") {
    TrainConfig cfg;
    cfg.batch_size = 6;
    cfg.seed = 2;
    MlpSpec spec(2, 3);
    HyperNetLayout layout(spec);
    HyperHyperSpec hspec;
    hspec.hyperweight_count = layout.param_count();
    RngStream init(2, "hhw-init");
    ParamSet hhw = init_hyperhyper(hspec, init);
    RngStream data(3, "task");
    TaskBatch batch = sample_batch(2, 6, data);
    const double beta = 1e-3;

    auto objective = [&](const ParamSet& ps, Tape* tape, std::vector<Tensor>* leaves) {
        Tensor hw = generate_hyperweights(ps, beta, tape, leaves);
        RngStream gen(7, "gen");
        Generated g = generate_weights(hw, layout, spec, gen, GenMode::WithEncoder);
        Tensor loss = mse_loss(mlp_forward(g.weights, batch.inputs), batch.targets);
        return log(loss + beta * g.kl_total);
    };

    Tape tape;
    std::vector<Tensor> leaves;
    Tensor obj = objective(hhw, &tape, &leaves);
    tape.backward(obj);
    std::vector<std::vector<double>> grads;
    for (const auto& leaf : leaves) grads.push_back(tape.grad(leaf));

    RngStream pick(11, "pick");
    double worst = 0;
    for (int t = 0; t < 20; ++t) {
        // parameters of the first two layers move every hyperweight; also
        // probe the wide final layer
        const std::size_t k = pick.below(hhw.size());
        const std::size_t i = pick.below(hhw[k].value.size());
        const double h = 1e-6;
        ParamSet plus = hhw, minus = hhw;
        plus[k].value[i] += h;
        minus[k].value[i] -= h;
        const double fp = objective(plus, nullptr, nullptr).item();
        const double fm = objective(minus, nullptr, nullptr).item();
        worst = std::max(worst, testutil::rel_err((fp - fm) / (2 * h), grads[k][i]));
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("baseline: zero lr no-op and determinism") {
    BaselineConfig cfg;
    cfg.steps = 3;
    cfg.batch_size = 8;
    cfg.lr = 0.0;
    MlpWeights w = train_baseline_adam(MlpSpec(3, 6), cfg);
    BaselineConfig cfg2 = cfg;
    cfg2.steps = 0;
    MlpWeights w0 = train_baseline_adam(MlpSpec(3, 6), cfg2);
    for (std::size_t l = 0; l < w.num_layers(); ++l)
        CHECK(w.weights[l].values() == w0.weights[l].values());

    BaselineConfig c3;
    c3.steps = 20;
    c3.batch_size = 16;
    MlpWeights a = train_baseline_adam(MlpSpec(3, 6), c3);
    MlpWeights b = train_baseline_adam(MlpSpec(3, 6), c3);
    for (std::size_t l = 0; l < a.num_layers(); ++l)
        CHECK(a.weights[l].values() == b.weights[l].values());
}

TEST_CASE("baseline training reduces the loss") {
    BaselineConfig cfg;
    cfg.steps = 800;
    cfg.batch_size = 64;
    std::vector<StepMetrics> history;
    MlpWeights w = train_baseline_adam(MlpSpec(4, 12), cfg, &history);
    RngStream data(123, "bl-eval");
    TaskBatch eval = sample_batch(4, 20000, data);
    CHECK(evaluate_mse(w, eval) < 0.5);
    CHECK(history.front().loss > evaluate_mse(w, eval));
}

TEST_CASE("checkpoint round trip is bit-identical") {
    namespace fs = std::filesystem;
    TrainConfig cfg;
    cfg.steps = 4;
    cfg.batch_size = 8;
    ParetoTrainer trainer(MlpSpec(2, 3), cfg);
    for (int i = 0; i < 4; ++i) trainer.train_step();

    Checkpoint ck;
    ck.version = version_string();
    ck.cfg_hash = "deadbeefdeadbeef";
    ck.config = {{"note", "unit"}};
    ck.step = trainer.step_count();
    ck.target_spec = trainer.target_spec();
    ck.seed = cfg.seed;
    ck.hhw = trainer.hhw();
    ck.adam = trainer.optimizer();

    const fs::path path = fs::temp_directory_path() / "hyperl1_ckpt_test.bin";
    save_checkpoint(path, ck);
    Checkpoint loaded = load_checkpoint(path);
    CHECK(loaded.step == ck.step);
    CHECK(loaded.cfg_hash == ck.cfg_hash);
    CHECK(loaded.target_spec.layer_sizes == ck.target_spec.layer_sizes);
    REQUIRE(loaded.hhw.size() == ck.hhw.size());
    for (std::size_t k = 0; k < ck.hhw.size(); ++k) {
        CHECK(loaded.hhw[k].name == ck.hhw[k].name);
        CHECK(loaded.hhw[k].value == ck.hhw[k].value);
    }
    REQUIRE(loaded.adam.m.size() == ck.adam.m.size());
    for (std::size_t k = 0; k < ck.adam.m.size(); ++k) {
        CHECK(loaded.adam.m[k] == ck.adam.m[k]);
        CHECK(loaded.adam.v[k] == ck.adam.v[k]);
    }

    // regeneration from the loaded parameters is bit-identical
    HyperNetLayout layout(ck.target_spec);
    HyperWeights hw1 = hyperweights_value(ck.hhw, layout, 1e-4);
    HyperWeights hw2 = hyperweights_value(loaded.hhw, layout, 1e-4);
    CHECK(hw1.flat == hw2.flat);
    RngStream g1(9, "gen"), g2(9, "gen");
    Generated a = generate_weights(hw1, ck.target_spec, g1, GenMode::WithEncoder);
    Generated b = generate_weights(hw2, ck.target_spec, g2, GenMode::WithEncoder);
    for (std::size_t l = 0; l < a.weights.num_layers(); ++l)
        CHECK(a.weights.weights[l].values() == b.weights.weights[l].values());
    fs::remove(path);
}

TEST_CASE("frontier evaluation: row counts, pairing, alpha3 bounds") {
    TrainConfig cfg;
    cfg.batch_size = 8;
    ParetoTrainer trainer(MlpSpec(2, 3), cfg);
    for (int i = 0; i < 5; ++i) trainer.train_step();

    auto betas = log_beta_grid(1e-12, 1.0, 6);
    RngStream data(77, "frontier-eval");
    TaskBatch eval = sample_batch(2, 2000, data);
    auto rows = evaluate_frontier(trainer.hhw(), trainer.layout(), trainer.target_spec(), betas,
                                  {0, 1, 2, 3, 4}, GenMode::WithEncoder, eval);
    CHECK(rows.size() == 6 * 5);
    for (const auto& r : rows) {
        CHECK(r.params.alpha3 >= 0.0);
        CHECK(r.params.alpha3 <= 2.0);
        CHECK(std::isfinite(r.loss));
    }
    // pairing: rows 0 and 1 of each beta share alpha3
    for (std::size_t b = 0; b < 6; ++b)
        CHECK(rows[b * 5 + 0].params.alpha3 == rows[b * 5 + 1].params.alpha3);
}
