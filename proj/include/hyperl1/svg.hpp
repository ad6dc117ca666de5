#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "analysis.hpp"
#include "errors.hpp"
#include "layout.hpp"

namespace hyperl1 {

namespace detail {

inline std::string fmt(double v, int decimals = 3) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

}  // namespace detail

struct RenderConfig {
    double size = 800.0;
    double node_radius = 7.0;
    double max_stroke = 4.0;
    double min_stroke = 0.4;
    double edge_floor_frac = 0.02;  // edges below this fraction of max |w| are omitted
    std::string comment;            // embedded as metadata
};

// Input neurons green, output neurons magenta, hidden gray; positive weights
// red, negative blue, stroke width proportional to |w|. Output is
// byte-deterministic for identical inputs.
inline std::string render_svg(const std::vector<double>& positions2d, const NeuronGraph& g,
                              const RenderConfig& cfg = RenderConfig{}) {
    if (positions2d.size() != g.nodes.size() * 2)
        throw ShapeError("render_svg: positions/node count mismatch");
    std::string svg;
    svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::fmt(cfg.size, 0) +
           "\" height=\"" + detail::fmt(cfg.size, 0) + "\" viewBox=\"0 0 " +
           detail::fmt(cfg.size, 0) + " " + detail::fmt(cfg.size, 0) + "\">\n";
    if (!cfg.comment.empty()) svg += "<!-- " + cfg.comment + " -->\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

    const double wmax = g.max_abs_weight();
    const double floor = wmax * cfg.edge_floor_frac;
    for (const auto& e : g.edges) {
        const double mag = std::abs(e.weight);
        if (wmax > 0 && mag < floor) continue;
        const double frac = wmax > 0 ? mag / wmax : 0.0;
        const double stroke = std::max(cfg.min_stroke, cfg.max_stroke * frac);
        svg += "<line x1=\"" + detail::fmt(positions2d[e.a * 2]) + "\" y1=\"" +
               detail::fmt(positions2d[e.a * 2 + 1]) + "\" x2=\"" +
               detail::fmt(positions2d[e.b * 2]) + "\" y2=\"" +
               detail::fmt(positions2d[e.b * 2 + 1]) + "\" stroke=\"" +
               (e.weight >= 0 ? "red" : "blue") + "\" stroke-width=\"" + detail::fmt(stroke, 2) +
               "\" stroke-opacity=\"0.75\"/>\n";
    }
    for (std::size_t p = 0; p < g.nodes.size(); ++p) {
        const char* fill = g.is_input(p) ? "green" : (g.is_output(p) ? "magenta" : "gray");
        svg += "<circle cx=\"" + detail::fmt(positions2d[p * 2]) + "\" cy=\"" +
               detail::fmt(positions2d[p * 2 + 1]) + "\" r=\"" + detail::fmt(cfg.node_radius, 1) +
               "\" fill=\"" + fill + "\" stroke=\"black\" stroke-width=\"0.5\"/>\n";
    }
    svg += "</svg>\n";
    return svg;
}

inline void write_svg(const std::filesystem::path& path, const std::string& svg) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << svg;
    if (!out) throw IoError("failed while writing " + path.string());
}

// Phase-diagram raster: one rect per (step, beta) cell, convexity in red,
// pudding in green, double-sided in blue.
inline const char* label_color(AlgorithmLabel label) {
    switch (label) {
        case AlgorithmLabel::Convexity: return "red";
        case AlgorithmLabel::Pudding: return "green";
        case AlgorithmLabel::DoubleSided: return "blue";
    }
    return "black";
}

inline std::string render_phase_grid_svg(const PhaseGrid& grid, const std::string& comment = "") {
    const std::size_t nx = grid.steps.size(), ny = grid.betas.size();
    const double cell = 24.0, margin = 60.0;
    const double width = margin * 2 + cell * static_cast<double>(nx);
    const double height = margin * 2 + cell * static_cast<double>(ny);
    std::string svg;
    svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::fmt(width, 0) +
           "\" height=\"" + detail::fmt(height, 0) + "\">\n";
    if (!comment.empty()) svg += "<!-- " + comment + " -->\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (std::size_t si = 0; si < nx; ++si)
        for (std::size_t bi = 0; bi < ny; ++bi) {
            const auto& c = grid.cell(si, bi);
            // beta increases upward
            const double x = margin + cell * static_cast<double>(si);
            const double y = margin + cell * static_cast<double>(ny - 1 - bi);
            svg += "<rect x=\"" + detail::fmt(x, 1) + "\" y=\"" + detail::fmt(y, 1) +
                   "\" width=\"" + detail::fmt(cell, 1) + "\" height=\"" + detail::fmt(cell, 1) +
                   "\" fill=\"" + label_color(c.label) + "\"><title>step " +
                   std::to_string(c.step) + ", beta " + detail::fmt(c.beta, 14) + ", " +
                   to_string(c.label) + "</title></rect>\n";
        }
    svg += "<text x=\"" + detail::fmt(margin, 1) + "\" y=\"" + detail::fmt(height - 20, 1) +
           "\" font-size=\"14\">training step &#8594;</text>\n";
    svg += "<text x=\"12\" y=\"" + detail::fmt(margin - 10, 1) +
           "\" font-size=\"14\">&#946; &#8593;</text>\n";
    svg += "</svg>\n";
    return svg;
}

}  // namespace hyperl1
