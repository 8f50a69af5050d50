#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include "reshape/body/model.hpp"
#include "reshape/image/image.hpp"
#include "reshape/render/raster.hpp"

namespace reshape::render {

/// Near-is-bright 8-bit rendition of a depth map: the nearest foreground depth
/// maps to 255, the farthest to 1, background to 0. A depth range of zero maps
/// every foreground pixel to 255.
inline image::Image8 normalize_for_conditioning(const DepthMap& depth) {
    image::Image8 out(depth.width, depth.height, 1, 0);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (double d : depth.depth) {
        if (!std::isfinite(d)) continue;
        lo = std::min(lo, d);
        hi = std::max(hi, d);
    }
    if (!std::isfinite(lo)) return out;
    const double range = hi - lo;
    for (std::size_t i = 0; i < depth.depth.size(); ++i) {
        const double d = depth.depth[i];
        if (!std::isfinite(d)) continue;
        out.data[i] = range > 0.0 ? static_cast<std::uint8_t>(1 + std::lround(254.0 * (hi - d) / range)) : 255;
    }
    return out;
}

/// Depth in millimeters for 16-bit export; background 0, foreground clamped
/// to [1, 65535].
inline image::Image16 depth_to_millimeters(const DepthMap& depth) {
    image::Image16 out(depth.width, depth.height, 1, 0);
    for (std::size_t i = 0; i < depth.depth.size(); ++i) {
        const double d = depth.depth[i];
        if (!std::isfinite(d)) continue;
        out.data[i] = static_cast<std::uint16_t>(std::clamp<long>(std::lround(d * 1000.0), 1, 65535));
    }
    return out;
}

inline DepthMap render_depth(const body::BodyModel& model, const body::ShapeParams& shape,
                             const body::PoseParams& pose, const Camera& cam, unsigned threads = 1) {
    return rasterize_depth(body::skin(model, shape, pose), cam, threads);
}

inline image::Image8 render_conditioning(const body::BodyModel& model, const body::ShapeParams& shape,
                                         const body::PoseParams& pose, const Camera& cam, unsigned threads = 1) {
    return normalize_for_conditioning(render_depth(model, shape, pose, cam, threads));
}

}  // namespace reshape::render
