#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "reshape/body/model.hpp"
#include "reshape/error.hpp"
#include "reshape/image/image.hpp"

namespace reshape::eval {

using image::Image8;

/// Grayscale plane in double precision.
struct Plane {
    int width = 0;
    int height = 0;
    std::vector<double> v;

    double at(int x, int y) const { return v[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)]; }
};

/// BT.601 luma (0.299 R + 0.587 G + 0.114 B); gray and gray+alpha use the gray
/// channel, alpha is ignored.
inline Plane luma(const Image8& img) {
    Plane p{img.width, img.height, std::vector<double>(img.pixel_count())};
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * static_cast<std::size_t>(img.width) + static_cast<std::size_t>(x);
            p.v[i] = img.channels >= 3
                         ? 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2)
                         : static_cast<double>(img.at(x, y, 0));
        }
    }
    return p;
}

namespace detail {

inline void require_same(const Image8& a, const Image8& b) {
    if (a.width != b.width || a.height != b.height || a.channels != b.channels) {
        throw DimensionError("image sizes differ: " + image::describe(a.width, a.height, a.channels) + " vs " +
                             image::describe(b.width, b.height, b.channels));
    }
}

}  // namespace detail

/// 10·log10(255² / MSE) on luma; +∞ for identical inputs.
inline double psnr(const Image8& a, const Image8& b) {
    detail::require_same(a, b);
    const Plane pa = luma(a), pb = luma(b);
    double sum = 0.0;
    for (std::size_t i = 0; i < pa.v.size(); ++i) {
        const double d = pa.v[i] - pb.v[i];
        sum += d * d;
    }
    if (sum == 0.0) return std::numeric_limits<double>::infinity();
    const double mse = sum / static_cast<double>(pa.v.size());
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

struct SsimOptions {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 255.0;
};

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
inline std::vector<double> gaussian_taps(int size, double sigma) {
    std::vector<double> w(static_cast<std::size_t>(size));
    const double c = (size - 1) / 2.0;
    double total = 0.0;
    for (int i = 0; i < size; ++i) total += w[static_cast<std::size_t>(i)] = std::exp(-(i - c) * (i - c) / (2 * sigma * sigma));
    for (auto& v : w) v /= total;
    return w;
}

/// Mean SSIM over all fully-contained windows (no padding), computed on luma.
inline double ssim(const Image8& a, const Image8& b, const SsimOptions& opt = {}) {
    detail::require_same(a, b);
    if (a.width < opt.window || a.height < opt.window) {
        throw ValueError("image " + image::describe(a.width, a.height, a.channels) + " is smaller than the " +
                         std::to_string(opt.window) + "-pixel SSIM window");
    }
    const Plane x = luma(a), y = luma(b);
    const auto taps = gaussian_taps(opt.window, opt.sigma);
    const int ow = a.width - opt.window + 1, oh = a.height - opt.window + 1;

    // Separable filtering of x, y, x², y², xy: horizontal pass then vertical.
    enum { X, Y, XX, YY, XY, kTerms };
    std::vector<std::vector<double>> rows(kTerms, std::vector<double>(static_cast<std::size_t>(ow) * a.height));
    for (int r = 0; r < a.height; ++r) {
        for (int c = 0; c < ow; ++c) {
            double s[kTerms] = {};
            for (int k = 0; k < opt.window; ++k) {
                const double w = taps[static_cast<std::size_t>(k)];
                const double xv = x.at(c + k, r), yv = y.at(c + k, r);
                s[X] += w * xv;
                s[Y] += w * yv;
                s[XX] += w * xv * xv;
                s[YY] += w * yv * yv;
                s[XY] += w * xv * yv;
            }
            for (int t = 0; t < kTerms; ++t) rows[t][static_cast<std::size_t>(r) * ow + c] = s[t];
        }
    }
    const double c1 = std::pow(opt.k1 * opt.dynamic_range, 2), c2 = std::pow(opt.k2 * opt.dynamic_range, 2);
    double total = 0.0;
    for (int r = 0; r < oh; ++r) {
        for (int c = 0; c < ow; ++c) {
            double s[kTerms] = {};
            for (int k = 0; k < opt.window; ++k) {
                const double w = taps[static_cast<std::size_t>(k)];
                for (int t = 0; t < kTerms; ++t) s[t] += w * rows[t][static_cast<std::size_t>(r + k) * ow + c];
            }
            const double vx = s[XX] - s[X] * s[X], vy = s[YY] - s[Y] * s[Y], cov = s[XY] - s[X] * s[Y];
            total += ((2 * s[X] * s[Y] + c1) * (2 * cov + c2)) /
                     ((s[X] * s[X] + s[Y] * s[Y] + c1) * (vx + vy + c2));
        }
    }
    return total / (static_cast<double>(ow) * oh);
}

enum class ScaleCorrection {
    least_squares,  // s* = ⟨P, G⟩ / ⟨P, P⟩
    height,         // ratio of vertical (y) extents
};

/// Mean per-vertex distance in millimeters after centering both meshes and
/// applying a uniform scale to the prediction.
inline double pve_t_vertices(const body::Points& pred, const body::Points& gt,
                             ScaleCorrection mode = ScaleCorrection::least_squares) {
    if (pred.rows() != gt.rows() || pred.cols() != 3 || gt.cols() != 3) {
        throw DimensionError("vertex counts differ: " + std::to_string(pred.rows()) + " vs " + std::to_string(gt.rows()));
    }
    if (pred.rows() == 0) throw DimensionError("no vertices");
    const body::Points p = pred.rowwise() - pred.colwise().mean();
    const body::Points g = gt.rowwise() - gt.colwise().mean();
    double s = 1.0;
    if (mode == ScaleCorrection::least_squares) {
        const double pp = p.squaredNorm();
        if (!(pp > 1e-300)) throw NumericError("prediction collapses to a point; scale is undefined");
        s = (p.array() * g.array()).sum() / pp;
    } else {
        const double hp = p.col(1).maxCoeff() - p.col(1).minCoeff();
        if (!(hp > 1e-300)) throw NumericError("prediction has zero height; scale is undefined");
        s = (g.col(1).maxCoeff() - g.col(1).minCoeff()) / hp;
    }
    return 1000.0 * ((s * p - g).rowwise().norm()).mean();
}

/// PVE-T-SC between two shapes of one model in the rest (T) pose.
inline double pve_t_sc(const body::ShapeParams& pred, const body::ShapeParams& gt, const body::BodyModel& model,
                       ScaleCorrection mode = ScaleCorrection::least_squares) {
    return pve_t_vertices(body::shaped_template(model, pred), body::shaped_template(model, gt), mode);
}

}  // namespace reshape::eval
