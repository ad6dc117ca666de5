#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "hyperl1/rng.hpp"
#include "hyperl1/tensor.hpp"

namespace testutil {

// Scalar loss as a function of flat inputs, evaluated off-tape.
using FlatFn = std::function<double(const std::vector<std::vector<double>>&)>;

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

// Central finite differences against tape gradients for a scalar-valued
// function of several tensors. `build` assembles the loss from leaf tensors.
struct GradCheck {
    std::vector<hyperl1::Shape> shapes;
    std::function<hyperl1::Tensor(const std::vector<hyperl1::Tensor>&)> build;
    double step = 1e-6;

    double max_rel_err(const std::vector<std::vector<double>>& inputs) const {
        hyperl1::Tape tape;
        std::vector<hyperl1::Tensor> leaves;
        for (std::size_t k = 0; k < shapes.size(); ++k)
            leaves.push_back(tape.leaf(shapes[k], inputs[k]));
        hyperl1::Tensor loss = build(leaves);
        tape.backward(loss);
        std::vector<std::vector<double>> grads;
        for (const auto& leaf : leaves) grads.push_back(tape.grad(leaf));

        auto eval = [&](const std::vector<std::vector<double>>& vals) {
            std::vector<hyperl1::Tensor> consts;
            for (std::size_t k = 0; k < shapes.size(); ++k)
                consts.emplace_back(shapes[k], vals[k]);
            return build(consts).item();
        };

        double worst = 0;
        for (std::size_t k = 0; k < inputs.size(); ++k)
            for (std::size_t i = 0; i < inputs[k].size(); ++i) {
                auto plus = inputs, minus = inputs;
                plus[k][i] += step;
                minus[k][i] -= step;
                const double fd = (eval(plus) - eval(minus)) / (2 * step);
                worst = std::max(worst, rel_err(fd, grads[k][i]));
            }
        return worst;
    }
};

inline std::vector<double> random_vec(std::size_t n, hyperl1::RngStream& rng, double lo = -2,
                                      double hi = 2) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

}  // namespace testutil
