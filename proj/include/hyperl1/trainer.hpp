#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "analysis.hpp"
#include "hypernet.hpp"
#include "mlp.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace hyperl1 {

// ---------------------------------------------------------------------------
// Flat parameter bundles + Adam
// ---------------------------------------------------------------------------

struct ParamTensor {
    std::string name;
    Shape shape;
    std::vector<double> value;
};

struct ParamSet {
    std::vector<ParamTensor> params;

    std::size_t total_size() const {
        std::size_t n = 0;
        for (const auto& p : params) n += p.value.size();
        return n;
    }
    ParamTensor& operator[](std::size_t i) { return params[i]; }
    const ParamTensor& operator[](std::size_t i) const { return params[i]; }
    std::size_t size() const { return params.size(); }
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    AdamConfig cfg;
    std::size_t t = 0;
    std::vector<std::vector<double>> m, v;

    void init_like(const ParamSet& ps) {
        m.clear();
        v.clear();
        for (const auto& p : ps.params) {
            m.emplace_back(p.value.size(), 0.0);
            v.emplace_back(p.value.size(), 0.0);
        }
        t = 0;
    }

    void step(ParamSet& ps, const std::vector<const std::vector<double>*>& grads) {
        if (m.empty()) init_like(ps);
        ++t;
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
        for (std::size_t k = 0; k < ps.params.size(); ++k) {
            auto& val = ps.params[k].value;
            const auto& g = *grads[k];
            auto& mk = m[k];
            auto& vk = v[k];
            for (std::size_t i = 0; i < val.size(); ++i) {
                mk[i] = cfg.beta1 * mk[i] + (1.0 - cfg.beta1) * g[i];
                vk[i] = cfg.beta2 * vk[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                const double mhat = mk[i] / bc1;
                const double vhat = vk[i] / bc2;
                val[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
            }
        }
    }
};

// ---------------------------------------------------------------------------
// Hyperhypernetwork: beta -> hyperweights
// ---------------------------------------------------------------------------

// MLP 1 -> 100 -> 10 -> 2P with swish hidden activations; the output halves
// a and b combine as a*sigmoid(b) into the flattened hyperweight vector.
struct HyperHyperSpec {
    std::size_t hidden1 = 100;
    std::size_t hidden2 = 10;
    std::size_t hyperweight_count = 0;  // P

    std::vector<std::size_t> layer_sizes() const {
        return {1, hidden1, hidden2, 2 * hyperweight_count};
    }
};

inline ParamSet init_hyperhyper(const HyperHyperSpec& spec, RngStream& rng) {
    ParamSet ps;
    const auto sizes = spec.layer_sizes();
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const std::size_t n_in = sizes[l], n_out = sizes[l + 1];
        const double scale = 1.0 / std::sqrt(static_cast<double>(n_in));
        ParamTensor w{"hhw.w" + std::to_string(l), {n_out, n_in},
                      std::vector<double>(n_out * n_in)};
        for (auto& v : w.value) v = rng.normal(0.0, scale);
        ps.params.push_back(std::move(w));
        ps.params.push_back(ParamTensor{"hhw.b" + std::to_string(l), {n_out},
                                        std::vector<double>(n_out, 0.0)});
    }
    return ps;
}

// Rescaled log-beta input: [1e-12, 1] maps affinely onto [-1, 1].
inline double beta_to_input(double beta) {
    if (!(beta > 0.0)) throw DomainError("beta must be positive, got " + std::to_string(beta));
    return (std::log10(beta) + 6.0) / 6.0;
}

namespace detail {

inline MlpWeights params_as_mlp(const ParamSet& ps, Tape* tape) {
    MlpWeights w;
    for (std::size_t k = 0; k + 1 < ps.size(); k += 2) {
        Tensor wt(ps[k].shape, ps[k].value);
        Tensor bt(ps[k + 1].shape, ps[k + 1].value);
        w.weights.push_back(tape ? tape->leaf(wt) : wt);
        w.biases.push_back(tape ? tape->leaf(bt) : bt);
    }
    return w;
}

}  // namespace detail

// Forward pass of the hyperhypernetwork; differentiable when `tape` is given.
// Returns the flat hyperweight tensor of length P plus (optionally) the leaf
// handles needed to read parameter gradients after backward.
inline Tensor generate_hyperweights(const ParamSet& hhw, double beta, Tape* tape,
                                    std::vector<Tensor>* leaves = nullptr) {
    const double t = beta_to_input(beta);
    MlpWeights net = detail::params_as_mlp(hhw, tape);
    if (leaves) {
        leaves->clear();
        for (std::size_t l = 0; l < net.num_layers(); ++l) {
            leaves->push_back(net.weights[l]);
            leaves->push_back(net.biases[l]);
        }
    }
    Tensor out = mlp_forward(net, Tensor({1, 1}, {t}));
    const std::size_t p = out.size() / 2;
    Tensor a = slice(out, 1, 0, p);
    Tensor b = slice(out, 1, p, 2 * p);
    return reshape(mul(a, sigmoid(b)), {p});
}

inline HyperWeights hyperweights_value(const ParamSet& hhw, const HyperNetLayout& layout,
                                       double beta) {
    Tensor flat = generate_hyperweights(hhw, beta, nullptr);
    if (flat.size() != layout.param_count())
        throw ConfigError("hyperhypernetwork output width does not match hypernet layout");
    return HyperWeights{layout, flat.values()};
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainConfig {
    std::size_t steps = 2000;
    std::size_t batch_size = 64;
    double lr = 1e-3;
    double beta_min = 1e-12;
    double beta_max = 1.0;
    std::size_t checkpoint_every = 400;
    std::uint64_t seed = 0;
};

struct StepMetrics {
    std::size_t step = 0;
    double beta = 0;
    double loss = 0;
    double kl = 0;
    double objective = 0;
};

class ParetoTrainer {
public:
    ParetoTrainer(MlpSpec target, TrainConfig cfg)
        : target_(std::move(target)), layout_(target_), cfg_(cfg) {
        if (!(cfg.beta_min > 0) || !(cfg.beta_min < cfg.beta_max) || cfg.beta_max > 1.0 + 1e-12)
            throw ConfigError("beta range must satisfy 0 < min < max <= 1");
        HyperHyperSpec hspec;
        hspec.hyperweight_count = layout_.param_count();
        RngStream init(cfg.seed, "hhw-init");
        hhw_ = init_hyperhyper(hspec, init);
        opt_.cfg.lr = cfg.lr;
    }

    const MlpSpec& target_spec() const { return target_; }
    const HyperNetLayout& layout() const { return layout_; }
    const ParamSet& hhw() const { return hhw_; }
    ParamSet& hhw() { return hhw_; }
    AdamState& optimizer() { return opt_; }
    std::size_t step_count() const { return step_; }
    void set_step_count(std::size_t s) { step_ = s; }
    const TrainConfig& config() const { return cfg_; }

    // One optimization step: sample beta log-uniformly, generate hyperweights
    // and weights (encoder active), evaluate the task loss on a fresh batch,
    // and descend on log(L + beta * D_KL).
    StepMetrics train_step() {
        RngStream beta_rng(cfg_.seed, "beta", step_);
        const double lmin = std::log10(cfg_.beta_min), lmax = std::log10(cfg_.beta_max);
        const double beta = std::pow(10.0, beta_rng.uniform(lmin, lmax));

        Tape tape;
        std::vector<Tensor> leaves;
        Tensor hw = generate_hyperweights(hhw_, beta, &tape, &leaves);
        RngStream gen_rng(cfg_.seed, "gen", step_);
        Generated gen = generate_weights(hw, layout_, target_, gen_rng, GenMode::WithEncoder);
        RngStream task_rng(cfg_.seed, "task", step_);
        TaskBatch batch = sample_batch(target_.inputs(), cfg_.batch_size, task_rng);
        Tensor loss = mse_loss(mlp_forward(gen.weights, batch.inputs), batch.targets);
        Tensor objective = log(loss + beta * gen.kl_total);

        StepMetrics m;
        m.step = step_;
        m.beta = beta;
        m.loss = loss.item();
        m.kl = gen.kl_total.item();
        m.objective = objective.item();
        if (!std::isfinite(m.objective))
            throw NumericError("non-finite objective at step " + std::to_string(step_) +
                               " (loss=" + std::to_string(m.loss) +
                               ", kl=" + std::to_string(m.kl) +
                               ", beta=" + std::to_string(beta) + ")");

        tape.backward(objective);
        std::vector<const std::vector<double>*> grads;
        grads.reserve(leaves.size());
        for (const auto& leaf : leaves) grads.push_back(&tape.grad(leaf));
        opt_.step(hhw_, grads);
        ++step_;
        return m;
    }

private:
    MlpSpec target_;
    HyperNetLayout layout_;
    TrainConfig cfg_;
    ParamSet hhw_;
    AdamState opt_;
    std::size_t step_ = 0;
};

// ---------------------------------------------------------------------------
// Direct Adam baseline on the target network
// ---------------------------------------------------------------------------

struct BaselineConfig {
    std::size_t steps = 20000;
    std::size_t batch_size = 256;
    double lr = 1e-3;
    std::uint64_t seed = 0;
};

inline MlpWeights train_baseline_adam(const MlpSpec& spec, const BaselineConfig& cfg,
                                      std::vector<StepMetrics>* history = nullptr) {
    RngStream init(cfg.seed, "baseline-init");
    ParamSet ps;
    for (std::size_t l = 0; l < spec.num_weight_layers(); ++l) {
        const std::size_t n_in = spec.in_width(l), n_out = spec.out_width(l);
        const double scale = 1.0 / std::sqrt(static_cast<double>(n_in));
        ParamTensor w{"w" + std::to_string(l), {n_out, n_in}, std::vector<double>(n_out * n_in)};
        for (auto& v : w.value) v = init.normal(0.0, scale);
        ps.params.push_back(std::move(w));
        ps.params.push_back(
            ParamTensor{"b" + std::to_string(l), {n_out}, std::vector<double>(n_out, 0.0)});
    }
    AdamState opt;
    opt.cfg.lr = cfg.lr;

    double initial_loss = -1.0;
    std::size_t bad_streak = 0;
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        Tape tape;
        MlpWeights w = detail::params_as_mlp(ps, &tape);
        RngStream task_rng(cfg.seed, "baseline-task", step);
        TaskBatch batch = sample_batch(spec.inputs(), cfg.batch_size, task_rng);
        Tensor loss = mse_loss(mlp_forward(w, batch.inputs), batch.targets);
        const double lv = loss.item();
        if (initial_loss < 0) initial_loss = lv;
        bad_streak = lv > 10.0 * initial_loss ? bad_streak + 1 : 0;
        if (bad_streak >= 100 || !std::isfinite(lv))
            throw NumericError("baseline training diverged at step " + std::to_string(step) +
                               " (loss=" + std::to_string(lv) + ")");
        if (history) history->push_back(StepMetrics{step, 0.0, lv, 0.0, std::log(lv)});
        tape.backward(loss);
        std::vector<const std::vector<double>*> grads;
        std::vector<Tensor> leaves;
        for (std::size_t l = 0; l < w.num_layers(); ++l) {
            leaves.push_back(w.weights[l]);
            leaves.push_back(w.biases[l]);
        }
        for (const auto& leaf : leaves) grads.push_back(&tape.grad(leaf));
        opt.step(ps, grads);
    }
    return detail::params_as_mlp(ps, nullptr);
}

// ---------------------------------------------------------------------------
// Frontier evaluation over a beta grid
// ---------------------------------------------------------------------------

struct FrontierRow {
    double beta = 0;
    std::uint64_t seed = 0;
    GenMode mode = GenMode::WithEncoder;
    double loss = 0;
    double kl = 0;
    OrderParams params;
};

// Evaluates generated networks over (beta, seed) on a fixed batch. Seeds are
// paired (2k, 2k+1) for the seed-dependence order parameter; both rows of a
// pair carry the pair's alpha3.
inline std::vector<FrontierRow> evaluate_frontier(const ParamSet& hhw,
                                                  const HyperNetLayout& layout,
                                                  const MlpSpec& spec,
                                                  const std::vector<double>& betas,
                                                  const std::vector<std::uint64_t>& seeds,
                                                  GenMode mode, const TaskBatch& eval_batch) {
    std::vector<FrontierRow> rows;
    rows.reserve(betas.size() * seeds.size());
    for (double beta : betas) {
        HyperWeights hw = hyperweights_value(hhw, layout, beta);
        std::vector<MlpWeights> nets(seeds.size());
        std::vector<double> kls(seeds.size());
        for (std::size_t s = 0; s < seeds.size(); ++s) {
            RngStream gen(seeds[s], "frontier-gen");
            Generated g = generate_weights(hw, spec, gen, mode);
            nets[s] = g.weights;
            kls[s] = g.kl_total.item();
        }
        for (std::size_t s = 0; s < seeds.size(); ++s) {
            FrontierRow row;
            row.beta = beta;
            row.seed = seeds[s];
            row.mode = mode;
            row.loss = evaluate_mse(nets[s], eval_batch);
            row.kl = kls[s];
            std::size_t partner = s % 2 == 0 ? s + 1 : s - 1;
            if (partner >= nets.size()) partner = 0;  // odd seed count: wrap the tail
            row.params = order_params(nets[s], nets[partner]);
            rows.push_back(row);
        }
    }
    return rows;
}

}  // namespace hyperl1
