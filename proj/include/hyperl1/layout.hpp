#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "errors.hpp"
#include "mlp.hpp"
#include "rng.hpp"

namespace hyperl1 {

inline constexpr std::size_t kLayoutDims = 4;

struct GraphNode {
    std::size_t level = 0;  // 0 = input layer, last = output layer
    std::size_t index = 0;
};

struct GraphEdge {
    std::size_t a = 0;  // node array indices
    std::size_t b = 0;
    double weight = 0;  // signed
};

struct NeuronGraph {
    std::vector<GraphNode> nodes;
    std::vector<GraphEdge> edges;
    std::size_t levels = 0;

    bool is_input(std::size_t n) const { return nodes[n].level == 0; }
    bool is_output(std::size_t n) const { return nodes[n].level + 1 == levels; }

    double max_abs_weight() const {
        double m = 0;
        for (const auto& e : edges) m = std::max(m, std::abs(e.weight));
        return m;
    }

    // Computation graph of an MLP: one node per neuron, one edge per weight.
    // normalize scales edge weights so max |w| = 1, which keeps the descent
    // step stable independent of the network's weight magnitudes.
    static NeuronGraph from_weights(const MlpWeights& w, bool normalize = true) {
        NeuronGraph g;
        const MlpSpec spec = w.spec();
        g.levels = spec.layer_sizes.size();
        std::vector<std::size_t> level_base(g.levels, 0);
        for (std::size_t v = 0; v < g.levels; ++v) {
            level_base[v] = g.nodes.size();
            for (std::size_t u = 0; u < spec.layer_sizes[v]; ++u)
                g.nodes.push_back(GraphNode{v, u});
        }
        for (std::size_t l = 0; l < spec.num_weight_layers(); ++l)
            for (std::size_t j = 0; j < spec.out_width(l); ++j)
                for (std::size_t i = 0; i < spec.in_width(l); ++i) {
                    const double wv = w.weights[l](j, i);
                    if (wv == 0.0) continue;
                    g.edges.push_back(GraphEdge{level_base[l] + i, level_base[l + 1] + j, wv});
                }
        if (normalize) {
            const double m = g.max_abs_weight();
            if (m > 0)
                for (auto& e : g.edges) e.weight /= m;
        }
        return g;
    }
};

struct LayoutConfig {
    std::size_t iterations = 2000;
    double step = 1e-2;
    double decay_strength = 5.0;  // excess dims shrink by exp(-strength*t/T) per step
    double epsilon = 1e-9;        // repulsion distance regularizer
    std::size_t max_restarts = 5;
    double repulsion = 1.0;  // relative term coefficients; all unit by default
    double attraction = 1.0;
    double central = 1.0;
    double view_size = 800.0;
    double view_margin = 60.0;
};

// E = sum_pairs cR/sqrt(r^2+eps^2) + sum_edges cA*|w|*r^2 + sum_nodes cC*|p|^2
inline double layout_energy(const std::vector<double>& pos, const NeuronGraph& g,
                            const LayoutConfig& cfg = LayoutConfig{}) {
    const std::size_t n = g.nodes.size();
    const double eps2 = cfg.epsilon * cfg.epsilon;
    double e = 0;
    for (std::size_t p = 0; p < n; ++p)
        for (std::size_t q = p + 1; q < n; ++q) {
            double r2 = 0;
            for (std::size_t d = 0; d < kLayoutDims; ++d) {
                const double dd = pos[p * kLayoutDims + d] - pos[q * kLayoutDims + d];
                r2 += dd * dd;
            }
            e += cfg.repulsion / std::sqrt(r2 + eps2);
        }
    for (const auto& edge : g.edges) {
        double r2 = 0;
        for (std::size_t d = 0; d < kLayoutDims; ++d) {
            const double dd = pos[edge.a * kLayoutDims + d] - pos[edge.b * kLayoutDims + d];
            r2 += dd * dd;
        }
        e += cfg.attraction * std::abs(edge.weight) * r2;
    }
    for (std::size_t p = 0; p < n; ++p) {
        double r2 = 0;
        for (std::size_t d = 0; d < kLayoutDims; ++d) {
            const double v = pos[p * kLayoutDims + d];
            r2 += v * v;
        }
        e += cfg.central * r2;
    }
    return e;
}

inline void layout_energy_grad(const std::vector<double>& pos, const NeuronGraph& g,
                               const LayoutConfig& cfg, std::vector<double>& grad) {
    const std::size_t n = g.nodes.size();
    const double eps2 = cfg.epsilon * cfg.epsilon;
    grad.assign(pos.size(), 0.0);
    for (std::size_t p = 0; p < n; ++p)
        for (std::size_t q = p + 1; q < n; ++q) {
            double r2 = 0;
            std::array<double, kLayoutDims> diff{};
            for (std::size_t d = 0; d < kLayoutDims; ++d) {
                diff[d] = pos[p * kLayoutDims + d] - pos[q * kLayoutDims + d];
                r2 += diff[d] * diff[d];
            }
            const double c = -cfg.repulsion * std::pow(r2 + eps2, -1.5);
            for (std::size_t d = 0; d < kLayoutDims; ++d) {
                grad[p * kLayoutDims + d] += c * diff[d];
                grad[q * kLayoutDims + d] -= c * diff[d];
            }
        }
    for (const auto& edge : g.edges) {
        const double k = 2.0 * cfg.attraction * std::abs(edge.weight);
        for (std::size_t d = 0; d < kLayoutDims; ++d) {
            const double dd = pos[edge.a * kLayoutDims + d] - pos[edge.b * kLayoutDims + d];
            grad[edge.a * kLayoutDims + d] += k * dd;
            grad[edge.b * kLayoutDims + d] -= k * dd;
        }
    }
    for (std::size_t i = 0; i < pos.size(); ++i) grad[i] += 2.0 * cfg.central * pos[i];
}

struct LayoutResult {
    std::vector<double> positions2d;      // n x 2, rescaled to the viewport
    std::vector<double> raw_positions4d;  // n x 4 at termination
    std::vector<double> energy_trace;
    std::size_t restarts = 0;
};

namespace detail {

// Jitter keyed by node identity (level, index), not array order, so
// permuting the node array permutes positions identically.
inline std::vector<double> layout_init(const NeuronGraph& g, std::uint64_t seed,
                                       std::size_t restart) {
    std::vector<double> pos(g.nodes.size() * kLayoutDims);
    for (std::size_t p = 0; p < g.nodes.size(); ++p) {
        const std::uint64_t key =
            g.nodes[p].level * 1000003ULL + g.nodes[p].index + restart * 0x9e3779b9ULL;
        RngStream rs(seed, "layout-init", key);
        for (std::size_t d = 0; d < kLayoutDims; ++d) pos[p * kLayoutDims + d] = rs.normal();
    }
    return pos;
}

}  // namespace detail

// Plain gradient descent in four dimensions with a multiplicative decay on
// the two excess dimensions that tightens over the schedule until they
// vanish, leaving a two-dimensional arrangement.
inline LayoutResult run_layout(const NeuronGraph& g, const LayoutConfig& cfg,
                               std::uint64_t seed) {
    LayoutResult result;
    const std::size_t n = g.nodes.size();
    if (n == 0) {
        result.positions2d = {};
        return result;
    }
    for (std::size_t restart = 0; restart <= cfg.max_restarts; ++restart) {
        std::vector<double> pos = detail::layout_init(g, seed, restart);
        std::vector<double> grad;
        std::vector<double> trace;
        trace.reserve(cfg.iterations + 1);
        bool ok = true;
        trace.push_back(layout_energy(pos, g, cfg));
        for (std::size_t t = 1; t <= cfg.iterations; ++t) {
            layout_energy_grad(pos, g, cfg, grad);
            for (std::size_t i = 0; i < pos.size(); ++i) pos[i] -= cfg.step * grad[i];
            const double decay = std::exp(-cfg.decay_strength * static_cast<double>(t) /
                                          static_cast<double>(cfg.iterations));
            for (std::size_t p = 0; p < n; ++p)
                for (std::size_t d = 2; d < kLayoutDims; ++d) pos[p * kLayoutDims + d] *= decay;
            const double e = layout_energy(pos, g, cfg);
            trace.push_back(e);
            if (!std::isfinite(e)) {
                ok = false;
                break;
            }
        }
        if (!ok) continue;
        result.restarts = restart;
        result.energy_trace = std::move(trace);
        result.raw_positions4d = pos;
        // Rescale the leading two coordinates into the viewport, preserving
        // aspect ratio and centering.
        double xmin = pos[0], xmax = pos[0], ymin = pos[1], ymax = pos[1];
        for (std::size_t p = 0; p < n; ++p) {
            xmin = std::min(xmin, pos[p * kLayoutDims]);
            xmax = std::max(xmax, pos[p * kLayoutDims]);
            ymin = std::min(ymin, pos[p * kLayoutDims + 1]);
            ymax = std::max(ymax, pos[p * kLayoutDims + 1]);
        }
        const double span = std::max({xmax - xmin, ymax - ymin, 1e-12});
        const double scale = (cfg.view_size - 2 * cfg.view_margin) / span;
        const double cx = 0.5 * (xmin + xmax), cy = 0.5 * (ymin + ymax);
        result.positions2d.resize(n * 2);
        for (std::size_t p = 0; p < n; ++p) {
            result.positions2d[p * 2] =
                cfg.view_size / 2 + (pos[p * kLayoutDims] - cx) * scale;
            result.positions2d[p * 2 + 1] =
                cfg.view_size / 2 + (pos[p * kLayoutDims + 1] - cy) * scale;
        }
        return result;
    }
    throw NumericError("layout failed to produce finite energy after " +
                       std::to_string(cfg.max_restarts + 1) + " attempts");
}

}  // namespace hyperl1
