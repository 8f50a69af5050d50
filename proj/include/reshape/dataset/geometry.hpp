#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include "reshape/error.hpp"
#include "reshape/image/image.hpp"

namespace reshape::dataset {

using image::Image8;
using image::Mask;

/// Vertical extent of a mask and its ground anchor: the midpoint of the
/// occupied columns in the bottom-most occupied row.
struct MaskExtent {
    int height_px = 0;
    int top_row = 0;
    int bottom_row = 0;
    int bottom_center_col = 0;
    int left_col = 0;
    int right_col = 0;

    int width_px() const { return right_col - left_col + 1; }
    bool operator==(const MaskExtent&) const = default;
};

inline MaskExtent mask_extent(const Mask& mask) {
    int top = std::numeric_limits<int>::max(), bottom = -1;
    int left = std::numeric_limits<int>::max(), right = -1;
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            if (mask.at(x, y) == 0) continue;
            top = std::min(top, y);
            bottom = std::max(bottom, y);
            left = std::min(left, x);
            right = std::max(right, x);
        }
    }
    if (bottom < 0) throw ValueError("mask is empty");
    int lo = mask.width, hi = -1;
    for (int x = 0; x < mask.width; ++x) {
        if (mask.at(x, bottom) == 0) continue;
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    return {bottom - top + 1, top, bottom, (lo + hi) / 2, left, right};
}

/// A subject cut out of its frame: image and mask share the cutout's size.
struct Cutout {
    Image8 image;
    Mask mask;
};

namespace detail {

inline void require_pair(const Image8& img, const Mask& mask) {
    if (!img.same_size(mask) || mask.channels != 1) {
        throw DimensionError("image " + image::describe(img.width, img.height, img.channels) + " and mask " +
                             image::describe(mask.width, mask.height, mask.channels) + " disagree");
    }
}

// Output index → source span [begin, end) along one axis for scale s; the last
// output cell absorbs any source remainder so the far edge is never lost.
inline std::pair<int, int> footprint(int out, int out_size, int src_size, double s) {
    const int begin = std::clamp(static_cast<int>(std::floor(out / s)), 0, src_size - 1);
    int end = out + 1 == out_size ? src_size : static_cast<int>(std::ceil((out + 1) / s));
    end = std::clamp(end, begin + 1, src_size);
    return {begin, end};
}

inline int nearest(int out, int src_size, double s) {
    return std::clamp(static_cast<int>(std::floor((out + 0.5) / s)), 0, src_size - 1);
}

}  // namespace detail

/// Crops the subject's bounding box and resizes it by the single factor
/// s = ref_height / mask height. Masks stay binary: nearest sampling when
/// enlarging, any-occupied pooling when shrinking, so the top and bottom rows
/// survive and the new mask height equals round(s · height). Images are
/// resampled bilinearly at pixel centers.
inline Cutout scale_to_reference(const Image8& img, const Mask& mask, int ref_height) {
    detail::require_pair(img, mask);
    if (ref_height < 1) throw ValueError("reference height must be ≥ 1");
    const MaskExtent e = mask_extent(mask);
    const int w0 = e.width_px(), h0 = e.height_px;
    const double s = static_cast<double>(ref_height) / h0;
    const int w1 = std::max(1, static_cast<int>(std::lround(w0 * s)));
    const int h1 = std::max(1, static_cast<int>(std::lround(h0 * s)));

    Cutout out{Image8(w1, h1, img.channels), Mask(w1, h1, 1)};
    auto src_mask = [&](int x, int y) { return mask.at(e.left_col + x, e.top_row + y) != 0; };
    for (int y = 0; y < h1; ++y) {
        for (int x = 0; x < w1; ++x) {
            bool occupied = false;
            if (s >= 1.0) {
                occupied = src_mask(detail::nearest(x, w0, s), detail::nearest(y, h0, s));
            } else {
                const auto [ya, yb] = detail::footprint(y, h1, h0, s);
                const auto [xa, xb] = detail::footprint(x, w1, w0, s);
                for (int sy = ya; sy < yb && !occupied; ++sy) {
                    for (int sx = xa; sx < xb && !occupied; ++sx) occupied = src_mask(sx, sy);
                }
            }
            out.mask.at(x, y) = occupied ? 255 : 0;
        }
    }

    for (int y = 0; y < h1; ++y) {
        const double fy = std::clamp((y + 0.5) / s - 0.5, 0.0, static_cast<double>(h0 - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, h0 - 1);
        const double ty = fy - y0;
        for (int x = 0; x < w1; ++x) {
            const double fx = std::clamp((x + 0.5) / s - 0.5, 0.0, static_cast<double>(w0 - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, w0 - 1);
            const double tx = fx - x0;
            for (int c = 0; c < img.channels; ++c) {
                auto px = [&](int sx, int sy) {
                    return static_cast<double>(img.at(e.left_col + sx, e.top_row + sy, c));
                };
                const double v = (1 - ty) * ((1 - tx) * px(x0, y0) + tx * px(x1, y0)) +
                                 ty * ((1 - tx) * px(x0, y1) + tx * px(x1, y1));
                out.image.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
            }
        }
    }
    return out;
}

struct CompositeResult {
    Image8 image;
    Mask mask;             // the pasted subject on the canvas
    bool clipped = false;  // some subject pixels fell outside the canvas
};

/// Hard-pastes the masked cutout so that its own anchor lands on `anchor`.
inline CompositeResult composite(const Image8& background, const Cutout& cut, const MaskExtent& anchor) {
    detail::require_pair(cut.image, cut.mask);
    if (cut.image.channels != background.channels) throw DimensionError("cutout and background channel counts differ");
    CompositeResult out{background, Mask(background.width, background.height, 1), false};
    bool any = false;
    for (const auto v : cut.mask.data) any = any || v != 0;
    if (!any) return out;
    const MaskExtent own = mask_extent(cut.mask);
    const int dx = anchor.bottom_center_col - own.bottom_center_col;
    const int dy = anchor.bottom_row - own.bottom_row;
    for (int y = 0; y < cut.mask.height; ++y) {
        for (int x = 0; x < cut.mask.width; ++x) {
            if (cut.mask.at(x, y) == 0) continue;
            const int cx = x + dx, cy = y + dy;
            if (!background.contains(cx, cy)) {
                out.clipped = true;
                continue;
            }
            for (int c = 0; c < background.channels; ++c) out.image.at(cx, cy, c) = cut.image.at(x, y, c);
            out.mask.at(cx, cy) = 255;
        }
    }
    return out;
}

}  // namespace reshape::dataset
