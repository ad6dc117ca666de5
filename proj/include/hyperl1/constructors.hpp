#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "mlp.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace hyperl1 {

// Which sign the per-coordinate pudding neurons use: Minus computes
// 2*relu(-x_j) per coordinate plus the +sum correction, Plus the mirror image.
enum class PuddingSign { Plus, Minus };

enum class ConvexityDist { Unimodal, Bimodal };

struct ConstructorConfig {
    std::size_t n0 = 16;
    std::size_t n1 = 48;
    // Sharpness multiplier: silu(c*x)/c approaches relu(x) as c grows, so
    // inner weights are scaled by c and output weights by 1/c.
    double act_scale = 50.0;
    PuddingSign pudding_sign = PuddingSign::Minus;
    // Shift making the sum neuron's preactivation almost surely positive.
    // Kept moderate so the rare clip keeps the exact pudding measurably less
    // accurate than the double-sided construction (they are algebraically
    // identical otherwise; see build_pudding).
    double pudding_c = 14.0;
    ConvexityDist convexity_dist = ConvexityDist::Unimodal;
    double convexity_sigma = 1.0;
    double convexity_mode = 1.0;  // |mean| of each bimodal component
    std::size_t convexity_calibration_samples = 100000;
};

namespace detail {

inline void set(Tensor& t, std::size_t i, std::size_t j, double v) {
    (*t.data)[i * t.shape[1] + j] = v;
}
inline void set(Tensor& t, std::size_t i, double v) { (*t.data)[i] = v; }

}  // namespace detail

// |x| = relu(x) + relu(-x) per coordinate: hidden pair (2i, 2i+1) receives
// +c*x_i and -c*x_i, summed with output weights 1/(c*sigma_n). The task
// standardization (1/sigma_n, -mu_n/sigma_n) is folded into the output layer.
inline MlpWeights build_double_sided(const ConstructorConfig& cfg) {
    if (cfg.n1 < 2 * cfg.n0)
        throw ConfigError("double-sided needs n1 >= 2*n0, got n1=" + std::to_string(cfg.n1) +
                          " n0=" + std::to_string(cfg.n0));
    if (cfg.act_scale <= 0) throw ConfigError("act_scale must be positive");
    const double c = cfg.act_scale;
    const double sd = l1_target_std(cfg.n0);
    MlpWeights w = MlpWeights::zeros(MlpSpec(cfg.n0, cfg.n1));
    for (std::size_t i = 0; i < cfg.n0; ++i) {
        detail::set(w.weights[0], 2 * i, i, c);
        detail::set(w.weights[0], 2 * i + 1, i, -c);
        detail::set(w.weights[1], 0, 2 * i, 1.0 / (c * sd));
        detail::set(w.weights[1], 0, 2 * i + 1, 1.0 / (c * sd));
    }
    detail::set(w.biases[1], 0, -l1_target_mean(cfg.n0) / sd);
    return w;
}

// ||x||_1 = 2*sum_j relu(-s*x_j) + s'*sum_i x_i with one extra neuron for the
// sum term, made positive by the pudding_c shift. The sum neuron's inner
// weights carry the same sign as the coordinate neurons and its output weight
// is negated, so every first-layer row stays single-signed -- the structural
// signature that separates pudding from double-sided networks.
inline MlpWeights build_pudding(const ConstructorConfig& cfg) {
    if (cfg.n1 < cfg.n0 + 1)
        throw ConfigError("pudding needs n1 >= n0+1, got n1=" + std::to_string(cfg.n1) +
                          " n0=" + std::to_string(cfg.n0));
    if (cfg.act_scale <= 0 || cfg.pudding_c <= 0)
        throw ConfigError("act_scale and pudding_c must be positive");
    const double c = cfg.act_scale;
    const double big = cfg.pudding_c;
    const double sgn = cfg.pudding_sign == PuddingSign::Plus ? 1.0 : -1.0;
    const double sd = l1_target_std(cfg.n0);
    MlpWeights w = MlpWeights::zeros(MlpSpec(cfg.n0, cfg.n1));
    for (std::size_t j = 0; j < cfg.n0; ++j) {
        detail::set(w.weights[0], j, j, sgn * c);
        detail::set(w.weights[1], 0, j, 2.0 / (c * sd));
    }
    const std::size_t sum_neuron = cfg.n0;
    for (std::size_t i = 0; i < cfg.n0; ++i) detail::set(w.weights[0], sum_neuron, i, sgn * c);
    detail::set(w.biases[0], sum_neuron, c * big);
    detail::set(w.weights[1], 0, sum_neuron, -1.0 / (c * sd));
    detail::set(w.biases[1], 0, (big - l1_target_mean(cfg.n0)) / sd);
    return w;
}

// The literal imperfect wiring: each coordinate neuron also receives the full
// input sum, and every leftover neuron contributes one more copy of the sum
// term. Returned for loss measurement and classifier calibration, never
// asserted accurate.
inline MlpWeights build_pudding_imperfect(const ConstructorConfig& cfg) {
    if (cfg.n1 < 2 * cfg.n0)
        throw ConfigError("imperfect pudding needs n1 >= 2*n0, got n1=" + std::to_string(cfg.n1) +
                          " n0=" + std::to_string(cfg.n0));
    if (cfg.act_scale <= 0 || cfg.pudding_c <= 0)
        throw ConfigError("act_scale and pudding_c must be positive");
    const double c = cfg.act_scale;
    const double big = cfg.pudding_c;
    const double sgn = cfg.pudding_sign == PuddingSign::Plus ? 1.0 : -1.0;
    const double sd = l1_target_std(cfg.n0);
    MlpWeights w = MlpWeights::zeros(MlpSpec(cfg.n0, cfg.n1));
    for (std::size_t j = 0; j < cfg.n0; ++j) {
        // silu of c*(sgn*x_j - sgn*sum_i x_i): the x_j coefficient cancels.
        for (std::size_t i = 0; i < cfg.n0; ++i)
            detail::set(w.weights[0], j, i, i == j ? 0.0 : -sgn * c);
        detail::set(w.weights[1], 0, j, 2.0 / (c * sd));
    }
    const std::size_t extras = cfg.n1 - cfg.n0;
    for (std::size_t j = cfg.n0; j < cfg.n1; ++j) {
        for (std::size_t i = 0; i < cfg.n0; ++i) detail::set(w.weights[0], j, i, -sgn * c);
        detail::set(w.biases[0], j, c * big);
        detail::set(w.weights[1], 0, j, 1.0 / (c * sd));
    }
    detail::set(w.biases[1], 0,
                (-static_cast<double>(extras) * big - l1_target_mean(cfg.n0)) / sd);
    return w;
}

// Randomly oriented silu features with a single fitted output scale: first
// layer drawn from the configured distribution, then (alpha, bias) fitted by
// least squares of standardized targets against the summed feature response.
inline MlpWeights build_convexity(const ConstructorConfig& cfg, RngStream& rng) {
    MlpWeights w = MlpWeights::zeros(MlpSpec(cfg.n0, cfg.n1));
    for (std::size_t j = 0; j < cfg.n1; ++j)
        for (std::size_t i = 0; i < cfg.n0; ++i) {
            double v = rng.normal(0.0, cfg.convexity_sigma);
            if (cfg.convexity_dist == ConvexityDist::Bimodal)
                v += (rng.next_u64() & 1) ? cfg.convexity_mode : -cfg.convexity_mode;
            detail::set(w.weights[0], j, i, v);
        }
    // One-dimensional least squares on a calibration batch.
    TaskBatch batch = sample_batch(cfg.n0, cfg.convexity_calibration_samples, rng);
    const std::size_t n = batch.targets.size();
    std::vector<double> g(n, 0.0);
    {
        Tensor z = matmul(batch.inputs, transpose(w.weights[0]));
        const auto& zv = z.values();
        for (std::size_t b = 0; b < n; ++b) {
            double acc = 0.0;
            for (std::size_t j = 0; j < cfg.n1; ++j) acc += silu_val(zv[b * cfg.n1 + j]);
            g[b] = acc;
        }
    }
    double gm = 0.0, ym = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
        gm += g[b];
        ym += batch.targets[b];
    }
    gm /= static_cast<double>(n);
    ym /= static_cast<double>(n);
    double sgg = 0.0, sgy = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
        sgg += (g[b] - gm) * (g[b] - gm);
        sgy += (g[b] - gm) * (batch.targets[b] - ym);
    }
    if (!(sgg > 0.0) || !std::isfinite(sgg))
        throw NumericError("convexity calibration degenerate: zero-variance feature");
    const double alpha = sgy / sgg;
    const double bias = ym - alpha * gm;
    for (std::size_t j = 0; j < cfg.n1; ++j) detail::set(w.weights[1], 0, j, alpha);
    detail::set(w.biases[1], 0, bias);
    return w;
}

// Hidden neurons with any incident weight above tol (first-layer row or
// output column). Exact pudding activates exactly n0+1 of them.
inline std::size_t active_hidden_count(const MlpWeights& w, double tol = 0.0) {
    const std::size_t n1 = w.weights[0].rows();
    std::size_t active = 0;
    for (std::size_t j = 0; j < n1; ++j) {
        bool hit = false;
        for (std::size_t i = 0; i < w.weights[0].cols() && !hit; ++i)
            hit = std::abs(w.weights[0](j, i)) > tol;
        for (std::size_t o = 0; o < w.weights[1].rows() && !hit; ++o)
            hit = std::abs(w.weights[1](o, j)) > tol;
        if (std::abs(w.biases[0][j]) > tol) hit = true;
        if (hit) ++active;
    }
    return active;
}

}  // namespace hyperl1
