#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "constructors.hpp"
#include "mlp.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace hyperl1 {

enum class AlgorithmLabel { Convexity, Pudding, DoubleSided };

inline const char* to_string(AlgorithmLabel label) {
    switch (label) {
        case AlgorithmLabel::Convexity: return "convexity";
        case AlgorithmLabel::Pudding: return "pudding";
        case AlgorithmLabel::DoubleSided: return "double_sided";
    }
    return "?";
}

struct OrderParams {
    double alpha1 = std::numeric_limits<double>::quiet_NaN();  // double-sidedness
    double alpha2 = std::numeric_limits<double>::quiet_NaN();  // strongest connection
    double alpha3 = std::numeric_limits<double>::quiet_NaN();  // seed dependence
    bool degenerate = false;  // alpha1 denominator (median |W|) was zero
};

// First-layer weights in input-major orientation (rows = input neurons,
// columns = hidden neurons); order parameters are defined on this view.
inline Tensor first_layer_input_major(const MlpWeights& w) {
    return transpose(Tensor(w.weights[0].shape, w.weights[0].values()));
}

// alpha1 = min_i min(-min_j W_ij, max_j W_ij) / median_ij |W_ij|.
// A zero median yields a signed infinite sentinel with the degenerate flag.
inline double double_sidedness(const Tensor& w_in_major, bool* degenerate = nullptr) {
    if (w_in_major.rank() != 2 || w_in_major.size() == 0)
        throw ShapeError("double_sidedness expects a non-empty matrix");
    const std::size_t n0 = w_in_major.rows(), n1 = w_in_major.cols();
    double numer = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n0; ++i) {
        double row_min = w_in_major(i, 0), row_max = w_in_major(i, 0);
        for (std::size_t j = 1; j < n1; ++j) {
            row_min = std::min(row_min, w_in_major(i, j));
            row_max = std::max(row_max, w_in_major(i, j));
        }
        numer = std::min(numer, std::min(-row_min, row_max));
    }
    std::vector<double> mags(w_in_major.values());
    for (double& v : mags) v = std::abs(v);
    std::sort(mags.begin(), mags.end());
    const std::size_t n = mags.size();
    const double med = n % 2 == 1 ? mags[n / 2] : 0.5 * (mags[n / 2 - 1] + mags[n / 2]);
    if (degenerate) *degenerate = (med == 0.0);
    if (med == 0.0) {
        if (numer > 0) return std::numeric_limits<double>::infinity();
        if (numer < 0) return -std::numeric_limits<double>::infinity();
        return 0.0;
    }
    return numer / med;
}

// alpha2 = max_ij |W_ij|.
inline double strongest_connection(const Tensor& w_in_major) {
    if (w_in_major.size() == 0) throw ShapeError("strongest_connection on empty matrix");
    double m = 0.0;
    for (double v : w_in_major.values()) m = std::max(m, std::abs(v));
    return m;
}

// alpha3 = ||W - V||_F^2 / (||W||_F^2 + ||V||_F^2), in [0, 2].
inline double seed_dependence(const Tensor& w, const Tensor& v) {
    if (w.shape != v.shape)
        throw ShapeError("seed_dependence shape mismatch: " + shape_str(w.shape) + " vs " +
                         shape_str(v.shape));
    double num = 0.0, den = 0.0;
    const auto& a = w.values();
    const auto& b = v.values();
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += a[i] * a[i] + b[i] * b[i];
    }
    if (den == 0.0) throw DomainError("seed_dependence: both matrices are zero");
    return num / den;
}

inline OrderParams order_params(const MlpWeights& w) {
    OrderParams p;
    Tensor wm = first_layer_input_major(w);
    p.alpha1 = double_sidedness(wm, &p.degenerate);
    p.alpha2 = strongest_connection(wm);
    return p;
}

inline OrderParams order_params(const MlpWeights& w, const MlpWeights& partner) {
    OrderParams p = order_params(w);
    p.alpha3 = seed_dependence(first_layer_input_major(w), first_layer_input_major(partner));
    return p;
}

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

struct Thresholds {
    double theta1 = std::numeric_limits<double>::quiet_NaN();  // pudding vs double-sided on alpha1
    double theta2 = std::numeric_limits<double>::quiet_NaN();  // convexity vs rest on alpha2

    bool calibrated() const { return std::isfinite(theta1) && std::isfinite(theta2); }
};

// Weak strongest connection identifies convexity regardless of alpha1; among
// strong networks, a high alpha1 marks the double-sided algorithm. Seed
// dependence does not separate the algorithms and is deliberately unused.
inline AlgorithmLabel classify(const OrderParams& p, const Thresholds& th) {
    if (!th.calibrated()) throw ConfigError("classify called with uncalibrated thresholds");
    if (p.alpha2 < th.theta2) return AlgorithmLabel::Convexity;
    if (p.alpha1 > th.theta1) return AlgorithmLabel::DoubleSided;
    return AlgorithmLabel::Pudding;
}

// Geometric midpoint between the facing endpoints of two disjoint ranges.
inline double geometric_midpoint(double lo_max, double hi_min) {
    if (!(lo_max > 0.0) || !(hi_min > 0.0))
        throw NumericError("geometric midpoint requires positive range endpoints");
    return std::sqrt(lo_max * hi_min);
}

struct CalibrationRanges {
    double convexity_a2_max = 0, strong_a2_min = 0;
    double pudding_a1_max = 0, double_sided_a1_min = 0;
};

// Thresholds calibrated from per-class order-parameter samples. Fails loudly
// when the class ranges overlap -- a silently wrong classifier would poison
// every phase diagram downstream.
inline Thresholds calibrate_thresholds(const std::vector<OrderParams>& convexity,
                                       const std::vector<OrderParams>& pudding,
                                       const std::vector<OrderParams>& double_sided,
                                       CalibrationRanges* ranges = nullptr) {
    if (convexity.size() < 10 || pudding.size() < 10 || double_sided.size() < 10)
        throw ConfigError("calibration needs at least 10 samples per class");
    auto max_a2 = [](const std::vector<OrderParams>& v) {
        double m = -std::numeric_limits<double>::infinity();
        for (const auto& p : v) m = std::max(m, p.alpha2);
        return m;
    };
    auto min_a2 = [](const std::vector<OrderParams>& v) {
        double m = std::numeric_limits<double>::infinity();
        for (const auto& p : v) m = std::min(m, p.alpha2);
        return m;
    };
    auto max_a1 = [](const std::vector<OrderParams>& v) {
        double m = -std::numeric_limits<double>::infinity();
        for (const auto& p : v) m = std::max(m, p.alpha1);
        return m;
    };
    auto min_a1 = [](const std::vector<OrderParams>& v) {
        double m = std::numeric_limits<double>::infinity();
        for (const auto& p : v) m = std::min(m, p.alpha1);
        return m;
    };

    const double conv_hi = max_a2(convexity);
    const double strong_lo = std::min(min_a2(pudding), min_a2(double_sided));
    if (conv_hi >= strong_lo)
        throw NumericError("calibration failure: alpha2 ranges overlap (convexity max " +
                           std::to_string(conv_hi) + " >= strong min " +
                           std::to_string(strong_lo) + ")");
    const double pud_hi = max_a1(pudding);
    const double ds_lo = min_a1(double_sided);
    if (pud_hi >= ds_lo)
        throw NumericError("calibration failure: alpha1 ranges overlap (pudding max " +
                           std::to_string(pud_hi) + " >= double-sided min " +
                           std::to_string(ds_lo) + ")");
    if (ranges) *ranges = CalibrationRanges{conv_hi, strong_lo, pud_hi, ds_lo};
    Thresholds th;
    th.theta2 = geometric_midpoint(conv_hi, strong_lo);
    th.theta1 = geometric_midpoint(pud_hi, ds_lo);
    return th;
}

// ---------------------------------------------------------------------------
// Constructor-backed calibration samples
// ---------------------------------------------------------------------------

// Gaussian jitter applied to the first layer before measuring order
// parameters; exact constructors have many all-zero entries whose zero median
// would otherwise trip the degenerate sentinel. Trained networks carry
// comparable background noise. Sigma is sqrt(1e-4).
inline constexpr double kCalibrationJitterSigma = 1e-2;

inline MlpWeights jitter_first_layer(MlpWeights w, RngStream& rng,
                                     double sigma = kCalibrationJitterSigma) {
    std::vector<double> vals = w.weights[0].values();
    for (double& v : vals) v += rng.normal(0.0, sigma);
    w.weights[0] = Tensor(w.weights[0].shape, std::move(vals));
    return w;
}

// One jittered constructor sample of the given class. Pudding cycles through
// both signs and the imperfect wiring; convexity alternates unimodal and
// bimodal draws.
inline MlpWeights calibration_sample(AlgorithmLabel label, const ConstructorConfig& base,
                                     std::size_t index, RngStream& rng) {
    ConstructorConfig cfg = base;
    switch (label) {
        case AlgorithmLabel::Convexity: {
            cfg.convexity_dist = index % 2 == 0 ? ConvexityDist::Unimodal : ConvexityDist::Bimodal;
            cfg.convexity_calibration_samples = std::min<std::size_t>(
                base.convexity_calibration_samples, 20000);
            return jitter_first_layer(build_convexity(cfg, rng), rng);
        }
        case AlgorithmLabel::Pudding: {
            cfg.pudding_sign = index % 2 == 0 ? PuddingSign::Minus : PuddingSign::Plus;
            MlpWeights w = index % 3 == 2 ? build_pudding_imperfect(cfg) : build_pudding(cfg);
            return jitter_first_layer(std::move(w), rng);
        }
        case AlgorithmLabel::DoubleSided:
            return jitter_first_layer(build_double_sided(cfg), rng);
    }
    throw ConfigError("unknown label");
}

inline Thresholds calibrate_from_constructors(const ConstructorConfig& cfg,
                                              std::size_t per_class, RngStream& rng,
                                              CalibrationRanges* ranges = nullptr) {
    std::vector<OrderParams> conv, pud, ds;
    for (std::size_t k = 0; k < per_class; ++k) {
        conv.push_back(order_params(calibration_sample(AlgorithmLabel::Convexity, cfg, k, rng)));
        pud.push_back(order_params(calibration_sample(AlgorithmLabel::Pudding, cfg, k, rng)));
        ds.push_back(order_params(calibration_sample(AlgorithmLabel::DoubleSided, cfg, k, rng)));
    }
    return calibrate_thresholds(conv, pud, ds, ranges);
}

// ---------------------------------------------------------------------------
// Phase grids over (checkpoint step, beta)
// ---------------------------------------------------------------------------

inline std::vector<double> log_beta_grid(double beta_min, double beta_max, std::size_t steps) {
    if (!(beta_min > 0) || !(beta_max > beta_min)) throw ConfigError("bad beta range");
    if (steps < 2) throw ConfigError("beta grid needs at least 2 steps");
    std::vector<double> g(steps);
    const double lo = std::log10(beta_min), hi = std::log10(beta_max);
    for (std::size_t i = 0; i < steps; ++i)
        g[i] = std::pow(10.0, lo + (hi - lo) * static_cast<double>(i) /
                                  static_cast<double>(steps - 1));
    return g;
}

struct PhaseCell {
    std::size_t step = 0;
    double beta = 0;
    AlgorithmLabel label = AlgorithmLabel::Convexity;
    OrderParams params;
    double loss = 0;
    double kl = 0;
};

struct PhaseGrid {
    std::vector<std::size_t> steps;
    std::vector<double> betas;
    std::vector<PhaseCell> cells;  // steps-major, betas-minor

    const PhaseCell& cell(std::size_t si, std::size_t bi) const {
        return cells[si * betas.size() + bi];
    }
};

struct GeneratedPair {
    MlpWeights first;
    MlpWeights second;
    double kl = 0;
    double loss = 0;
};

// Fills a complete grid; the generator supplies, per (step index, beta), a
// pair of networks generated with two seeds plus their loss/KL diagnostics.
inline PhaseGrid phase_grid(
    const std::vector<std::size_t>& steps, const std::vector<double>& betas,
    const Thresholds& thresholds,
    const std::function<GeneratedPair(std::size_t, double)>& generator) {
    if (!thresholds.calibrated()) throw ConfigError("phase_grid needs calibrated thresholds");
    PhaseGrid grid;
    grid.steps = steps;
    grid.betas = betas;
    grid.cells.reserve(steps.size() * betas.size());
    for (std::size_t si = 0; si < steps.size(); ++si)
        for (std::size_t bi = 0; bi < betas.size(); ++bi) {
            GeneratedPair gp = generator(si, betas[bi]);
            PhaseCell cell;
            cell.step = steps[si];
            cell.beta = betas[bi];
            cell.params = order_params(gp.first, gp.second);
            cell.label = classify(cell.params, thresholds);
            cell.loss = gp.loss;
            cell.kl = gp.kl;
            grid.cells.push_back(cell);
        }
    return grid;
}

}  // namespace hyperl1
