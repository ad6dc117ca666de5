#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "errors.hpp"

namespace hyperl1 {

using ContourSegment = std::array<std::array<double, 2>, 2>;

// Marching squares with linear edge interpolation over a rectangular grid.
// values are y-major: values[iy * xs.size() + ix] is the field at
// (xs[ix], ys[iy]). Crossing points are exact for fields linear in x and y.
inline std::vector<ContourSegment> extract_contour_segments(const std::vector<double>& xs,
                                                            const std::vector<double>& ys,
                                                            const std::vector<double>& values,
                                                            double level) {
    if (xs.size() < 2 || ys.size() < 2) return {};
    if (values.size() != xs.size() * ys.size())
        throw ShapeError("contour grid size mismatch");
    std::vector<ContourSegment> segments;
    auto val = [&](std::size_t ix, std::size_t iy) { return values[iy * xs.size() + ix]; };
    auto lerp = [&](double a, double b, double va, double vb) {
        return a + (level - va) / (vb - va) * (b - a);
    };
    for (std::size_t iy = 0; iy + 1 < ys.size(); ++iy)
        for (std::size_t ix = 0; ix + 1 < xs.size(); ++ix) {
            // Corners: 0=(ix,iy) 1=(ix+1,iy) 2=(ix+1,iy+1) 3=(ix,iy+1)
            const double v0 = val(ix, iy), v1 = val(ix + 1, iy);
            const double v2 = val(ix + 1, iy + 1), v3 = val(ix, iy + 1);
            int mask = 0;
            if (v0 >= level) mask |= 1;
            if (v1 >= level) mask |= 2;
            if (v2 >= level) mask |= 4;
            if (v3 >= level) mask |= 8;
            if (mask == 0 || mask == 15) continue;
            const double x0 = xs[ix], x1 = xs[ix + 1], y0 = ys[iy], y1 = ys[iy + 1];
            // Edge crossing points (bottom, right, top, left).
            std::array<std::array<double, 2>, 4> pt{};
            std::array<bool, 4> has{};
            if ((v0 >= level) != (v1 >= level)) {
                pt[0] = {lerp(x0, x1, v0, v1), y0};
                has[0] = true;
            }
            if ((v1 >= level) != (v2 >= level)) {
                pt[1] = {x1, lerp(y0, y1, v1, v2)};
                has[1] = true;
            }
            if ((v3 >= level) != (v2 >= level)) {
                pt[2] = {lerp(x0, x1, v3, v2), y1};
                has[2] = true;
            }
            if ((v0 >= level) != (v3 >= level)) {
                pt[3] = {x0, lerp(y0, y1, v0, v3)};
                has[3] = true;
            }
            std::vector<int> crossed;
            for (int e = 0; e < 4; ++e)
                if (has[static_cast<std::size_t>(e)]) crossed.push_back(e);
            if (crossed.size() == 2) {
                segments.push_back({pt[static_cast<std::size_t>(crossed[0])],
                                    pt[static_cast<std::size_t>(crossed[1])]});
            } else if (crossed.size() == 4) {
                // Saddle: resolve by the cell-center average.
                const double center = 0.25 * (v0 + v1 + v2 + v3);
                if ((center >= level) == (v0 >= level)) {
                    segments.push_back({pt[0], pt[1]});
                    segments.push_back({pt[2], pt[3]});
                } else {
                    segments.push_back({pt[0], pt[3]});
                    segments.push_back({pt[1], pt[2]});
                }
            }
        }
    return segments;
}

}  // namespace hyperl1
