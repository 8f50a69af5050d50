#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <thread>
#include <vector>

#include "reshape/body/model.hpp"
#include "reshape/render/camera.hpp"

namespace reshape::render {

using body::Mesh;

/// Per-pixel view depth in meters; background pixels hold +∞ and face −1.
struct DepthMap {
    static constexpr double kBackground = std::numeric_limits<double>::infinity();

    int width = 0;
    int height = 0;
    std::vector<double> depth;
    std::vector<std::int32_t> face;  // winning triangle index

    DepthMap() = default;
    DepthMap(int w, int h)
        : width(w), height(h),
          depth(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), kBackground),
          face(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), -1) {}

    std::size_t index(int x, int y) const {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x);
    }
    double at(int x, int y) const { return depth[index(x, y)]; }
    bool foreground(int x, int y) const { return std::isfinite(at(x, y)); }

    std::size_t foreground_count() const {
        return static_cast<std::size_t>(std::count_if(depth.begin(), depth.end(), [](double d) { return std::isfinite(d); }));
    }
};

namespace detail {

// Coverage is decided on vertices snapped to 1/256 pixel with exact integer edge
// functions, so shared edges are covered exactly once.
inline constexpr int kSubpixelBits = 8;
inline constexpr std::int64_t kSubpixel = std::int64_t{1} << kSubpixelBits;
inline constexpr double kSnapLimit = 1099511627776.0;  // 2^40 subpixels
inline constexpr double kNearPlane = 1e-4;             // meters, pinhole only

using Wide = __int128;

struct ScreenTriangle {
    std::array<double, 3> x, y, z;
    std::int32_t face;
};

inline std::int64_t snap(double v) {
    return static_cast<std::int64_t>(std::llround(std::clamp(v * static_cast<double>(kSubpixel), -kSnapLimit, kSnapLimit)));
}

inline Wide edge(std::int64_t ax, std::int64_t ay, std::int64_t bx, std::int64_t by, std::int64_t px,
                 std::int64_t py) {
    return static_cast<Wide>(bx - ax) * static_cast<Wide>(py - ay) -
           static_cast<Wide>(by - ay) * static_cast<Wide>(px - ax);
}

// For positive-area (clockwise on a y-down screen) triangles: top edges run
// rightward horizontally, left edges run upward.
inline bool top_left(std::int64_t ax, std::int64_t ay, std::int64_t bx, std::int64_t by) {
    const std::int64_t dx = bx - ax, dy = by - ay;
    return dy < 0 || (dy == 0 && dx > 0);
}

/// Clips a camera-space triangle to z ≥ near (Sutherland–Hodgman, one plane).
inline std::vector<Eigen::Vector3d> clip_near(const std::array<Eigen::Vector3d, 3>& tri, double near) {
    std::vector<Eigen::Vector3d> out;
    for (int i = 0; i < 3; ++i) {
        const Eigen::Vector3d& a = tri[static_cast<std::size_t>(i)];
        const Eigen::Vector3d& b = tri[static_cast<std::size_t>((i + 1) % 3)];
        const bool a_in = a.z() >= near, b_in = b.z() >= near;
        if (a_in) out.push_back(a);
        if (a_in != b_in) {
            const double t = (near - a.z()) / (b.z() - a.z());
            out.push_back(a + t * (b - a));
        }
    }
    return out;
}

inline std::vector<ScreenTriangle> setup(const Mesh& mesh, const Camera& cam) {
    const Points pts = cam.to_camera_frame(mesh.vertices);
    std::vector<ScreenTriangle> out;
    out.reserve(static_cast<std::size_t>(mesh.faces.rows()));
    for (Eigen::Index f = 0; f < mesh.faces.rows(); ++f) {
        std::array<Eigen::Vector3d, 3> tri;
        for (int c = 0; c < 3; ++c) tri[static_cast<std::size_t>(c)] = pts.row(mesh.faces(f, c)).transpose();
        std::vector<Eigen::Vector3d> poly;
        if (cam.mode == Projection::pinhole) {
            poly = clip_near(tri, kNearPlane);
        } else {
            poly.assign(tri.begin(), tri.end());
        }
        for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
            ScreenTriangle s{};
            s.face = static_cast<std::int32_t>(f);
            const std::array<const Eigen::Vector3d*, 3> corners{&poly[0], &poly[k], &poly[k + 1]};
            bool usable = true;
            for (std::size_t c = 0; c < 3; ++c) {
                const auto pv = project_point(cam, *corners[c]);
                s.x[c] = pv.x;
                s.y[c] = pv.y;
                s.z[c] = pv.depth;
                usable = usable && std::isfinite(pv.x) && std::isfinite(pv.y) && pv.depth > 0.0;
            }
            if (usable) out.push_back(s);
        }
    }
    return out;
}

inline void raster(const ScreenTriangle& t, bool perspective, int row_begin, int row_end, DepthMap& out) {
    std::array<std::int64_t, 3> sx{}, sy{};
    for (std::size_t i = 0; i < 3; ++i) {
        sx[i] = snap(t.x[i]);
        sy[i] = snap(t.y[i]);
    }
    std::array<std::size_t, 3> v{0, 1, 2};
    const Wide area = edge(sx[0], sy[0], sx[1], sy[1], sx[2], sy[2]);
    if (area == 0) return;
    if (area < 0) std::swap(v[1], v[2]);

    const auto [min_x, max_x] = std::minmax({sx[0], sx[1], sx[2]});
    const auto [min_y, max_y] = std::minmax({sy[0], sy[1], sy[2]});
    const std::int64_t half = kSubpixel / 2;
    auto first_pixel = [&](std::int64_t lo) {  // smallest p with p·S + S/2 ≥ lo
        const std::int64_t n = lo - half;
        return n >= 0 ? (n + kSubpixel - 1) / kSubpixel : -((-n) / kSubpixel);
    };
    auto last_pixel = [&](std::int64_t hi) {  // largest p with p·S + S/2 ≤ hi
        const std::int64_t n = hi - half;
        return n >= 0 ? n / kSubpixel : -((-n + kSubpixel - 1) / kSubpixel);
    };
    const std::int64_t x0 = std::max<std::int64_t>(first_pixel(min_x), 0);
    const std::int64_t x1 = std::min<std::int64_t>(last_pixel(max_x), out.width - 1);
    const std::int64_t y0 = std::max<std::int64_t>(first_pixel(min_y), row_begin);
    const std::int64_t y1 = std::min<std::int64_t>(last_pixel(max_y), row_end - 1);
    if (x0 > x1 || y0 > y1) return;

    // Edge k is opposite vertex v[k].
    const std::array<std::size_t, 3> ea{v[1], v[2], v[0]};
    const std::array<std::size_t, 3> eb{v[2], v[0], v[1]};
    std::array<bool, 3> bias{};
    for (std::size_t k = 0; k < 3; ++k) bias[k] = top_left(sx[ea[k]], sy[ea[k]], sx[eb[k]], sy[eb[k]]);

    for (std::int64_t py = y0; py <= y1; ++py) {
        const std::int64_t cy = py * kSubpixel + half;
        const double fy = static_cast<double>(py) + 0.5;
        for (std::int64_t px = x0; px <= x1; ++px) {
            const std::int64_t cx = px * kSubpixel + half;
            bool inside = true;
            for (std::size_t k = 0; k < 3 && inside; ++k) {
                const Wide w = edge(sx[ea[k]], sy[ea[k]], sx[eb[k]], sy[eb[k]], cx, cy);
                inside = w > 0 || (w == 0 && bias[k]);
            }
            if (!inside) continue;

            // Depth from barycentrics of the unsnapped projection.
            const double fx = static_cast<double>(px) + 0.5;
            std::array<double, 3> b{};
            double sum = 0.0;
            for (std::size_t k = 0; k < 3; ++k) {
                const std::size_t a = ea[k], c = eb[k];
                b[k] = (t.x[c] - t.x[a]) * (fy - t.y[a]) - (t.y[c] - t.y[a]) * (fx - t.x[a]);
                sum += b[k];
            }
            if (sum == 0.0) continue;
            double depth = 0.0;
            if (perspective) {
                double inv = 0.0;
                for (std::size_t k = 0; k < 3; ++k) inv += (b[k] / sum) / t.z[v[k]];
                depth = 1.0 / inv;
            } else {
                for (std::size_t k = 0; k < 3; ++k) depth += (b[k] / sum) * t.z[v[k]];
            }
            if (!(depth > 0.0) || !std::isfinite(depth)) continue;

            const std::size_t idx = out.index(static_cast<int>(px), static_cast<int>(py));
            if (depth < out.depth[idx] || (depth == out.depth[idx] && t.face < out.face[idx])) {
                out.depth[idx] = depth;
                out.face[idx] = t.face;
            }
        }
    }
}

}  // namespace detail

/// Z-buffered depth rasterization of a mesh, no anti-aliasing.
///
/// Pixel centers are sampled with a top-left fill rule; depth is interpolated
/// perspective-correctly (pinhole) or linearly (weak perspective). Equal depths
/// resolve to the lower triangle index, so the result does not depend on
/// submission order or on `threads`, which splits the image into row bands.
inline DepthMap rasterize_depth(const Mesh& mesh, const Camera& cam, unsigned threads = 1) {
    cam.validate();
    DepthMap out(cam.width, cam.height);
    if (mesh.faces.rows() == 0) return out;
    const auto tris = detail::setup(mesh, cam);
    const bool perspective = cam.mode == Projection::pinhole;

    auto band = [&](int row_begin, int row_end) {
        for (const auto& t : tris) detail::raster(t, perspective, row_begin, row_end, out);
    };
    threads = std::clamp(threads, 1u, static_cast<unsigned>(cam.height));
    if (threads == 1) {
        band(0, cam.height);
        return out;
    }
    std::vector<std::jthread> workers;
    for (unsigned i = 0; i < threads; ++i) {
        const int begin = static_cast<int>(static_cast<long>(cam.height) * i / threads);
        const int end = static_cast<int>(static_cast<long>(cam.height) * (i + 1) / threads);
        workers.emplace_back(band, begin, end);
    }
    workers.clear();
    return out;
}

}  // namespace reshape::render
