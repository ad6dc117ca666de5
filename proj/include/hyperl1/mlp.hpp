#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

namespace hyperl1 {

// Target-network architecture: sizes (n0, n1, ..., nN) with silu on hidden
// layers and an affine output layer.
struct MlpSpec {
    std::vector<std::size_t> layer_sizes;

    MlpSpec() = default;
    MlpSpec(std::size_t n0, std::size_t n1, std::size_t n_out = 1)
        : layer_sizes{n0, n1, n_out} {}
    explicit MlpSpec(std::vector<std::size_t> sizes) : layer_sizes(std::move(sizes)) {}

    std::size_t num_weight_layers() const { return layer_sizes.size() - 1; }
    std::size_t inputs() const { return layer_sizes.front(); }
    std::size_t outputs() const { return layer_sizes.back(); }
    std::size_t in_width(std::size_t layer) const { return layer_sizes[layer]; }
    std::size_t out_width(std::size_t layer) const { return layer_sizes[layer + 1]; }

    std::size_t weight_positions() const {
        std::size_t n = 0;
        for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l)
            n += layer_sizes[l] * layer_sizes[l + 1];
        return n;
    }

    bool operator==(const MlpSpec& o) const { return layer_sizes == o.layer_sizes; }
};

// Per-layer weight matrices (out x in) and bias vectors. The tensors may or
// may not live on a tape; forward() is differentiable through them either way.
struct MlpWeights {
    std::vector<Tensor> weights;
    std::vector<Tensor> biases;

    std::size_t num_layers() const { return weights.size(); }

    static MlpWeights zeros(const MlpSpec& spec) {
        MlpWeights w;
        for (std::size_t l = 0; l < spec.num_weight_layers(); ++l) {
            w.weights.push_back(Tensor::zeros({spec.out_width(l), spec.in_width(l)}));
            w.biases.push_back(Tensor::zeros({spec.out_width(l)}));
        }
        return w;
    }

    void check_shapes(const MlpSpec& spec) const {
        if (weights.size() != spec.num_weight_layers() || biases.size() != weights.size())
            throw ShapeError("weight layer count does not match spec");
        for (std::size_t l = 0; l < weights.size(); ++l) {
            if (weights[l].shape != Shape{spec.out_width(l), spec.in_width(l)})
                throw ShapeError("layer " + std::to_string(l) + " weight shape " +
                                 shape_str(weights[l].shape) + " does not match spec");
            if (biases[l].shape != Shape{spec.out_width(l)})
                throw ShapeError("layer " + std::to_string(l) + " bias shape mismatch");
        }
    }

    MlpSpec spec() const {
        std::vector<std::size_t> sizes;
        sizes.push_back(weights.front().cols());
        for (const auto& w : weights) sizes.push_back(w.rows());
        return MlpSpec(sizes);
    }

    bool finite() const {
        for (const auto& w : weights)
            if (!all_finite(w)) return false;
        for (const auto& b : biases)
            if (!all_finite(b)) return false;
        return true;
    }
};

// Analytic standardization constants for the L1-of-standard-normal task:
// E||x||_1 = n*sqrt(2/pi) and Var||x||_1 = n*(1 - 2/pi).
inline double l1_target_mean(std::size_t n0) {
    return static_cast<double>(n0) * std::sqrt(2.0 / std::numbers::pi);
}
inline double l1_target_var(std::size_t n0) {
    return static_cast<double>(n0) * (1.0 - 2.0 / std::numbers::pi);
}
inline double l1_target_std(std::size_t n0) { return std::sqrt(l1_target_var(n0)); }

struct TaskBatch {
    Tensor inputs;   // batch x n0
    Tensor targets;  // batch x 1, standardized L1 values
};

// Inputs iid N(0,1); targets (||x||_1 - mu_n) / sigma_n.
inline TaskBatch sample_batch(std::size_t n0, std::size_t batch_size, RngStream& rng) {
    const double mu = l1_target_mean(n0);
    const double sd = l1_target_std(n0);
    std::vector<double> xs(batch_size * n0);
    std::vector<double> ys(batch_size);
    for (std::size_t b = 0; b < batch_size; ++b) {
        double l1 = 0.0;
        for (std::size_t i = 0; i < n0; ++i) {
            const double v = rng.normal();
            xs[b * n0 + i] = v;
            l1 += std::abs(v);
        }
        ys[b] = (l1 - mu) / sd;
    }
    return TaskBatch{Tensor({batch_size, n0}, std::move(xs)),
                     Tensor({batch_size, 1}, std::move(ys))};
}

// Forward pass: silu on hidden layers, affine final layer.
inline Tensor mlp_forward(const MlpWeights& w, const Tensor& inputs) {
    if (inputs.rank() != 2) throw ShapeError("mlp_forward expects batch x n0 inputs");
    if (inputs.cols() != w.weights.front().cols())
        throw ShapeError("input width " + std::to_string(inputs.cols()) +
                         " does not match first layer in-width " +
                         std::to_string(w.weights.front().cols()));
    Tensor a = inputs;
    for (std::size_t l = 0; l < w.num_layers(); ++l) {
        Tensor z = add(matmul(a, transpose(w.weights[l])), w.biases[l]);
        a = (l + 1 < w.num_layers()) ? silu(z) : z;
    }
    return a;
}

inline Tensor mse_loss(const Tensor& pred, const Tensor& targets) {
    if (pred.size() != targets.size())
        throw ShapeError("mse_loss length mismatch: " + shape_str(pred.shape) + " vs " +
                         shape_str(targets.shape));
    if (pred.size() == 0) throw DomainError("mse_loss on empty batch");
    Tensor diff = sub(reshape(pred, {pred.size()}), reshape(targets, {targets.size()}));
    return mean(square(diff));
}

// MSE of a weight set on a fixed batch, without tape bookkeeping.
inline double evaluate_mse(const MlpWeights& w, const TaskBatch& batch) {
    Tensor pred = mlp_forward(w, batch.inputs);
    const auto& p = pred.values();
    const auto& t = batch.targets.values();
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double d = p[i] - t[i];
        acc += d * d;
    }
    return acc / static_cast<double>(p.size());
}

}  // namespace hyperl1
