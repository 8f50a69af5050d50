#pragma once

#include <Eigen/Core>

#include <cmath>
#include <string>
#include <vector>

#include "reshape/error.hpp"

namespace reshape::attention {

/// Token sequences are row-major in meaning: one token per row, width d.
using Matrix = Eigen::MatrixXd;

/// Query/key/value projections; a token x projects to W·x.
struct AttentionWeights {
    Matrix wq, wk, wv;

    static AttentionWeights identity(Eigen::Index d) {
        return {Matrix::Identity(d, d), Matrix::Identity(d, d), Matrix::Identity(d, d)};
    }
};

namespace detail {

inline void require_width(const Matrix& a, const Matrix& b, const char* what) {
    if (a.cols() != b.cols()) {
        throw DimensionError(std::string(what) + ": width " + std::to_string(a.cols()) + " vs " +
                             std::to_string(b.cols()));
    }
}

inline void require_square(const Matrix& w, Eigen::Index d, const char* what) {
    if (w.rows() != d || w.cols() != d) throw DimensionError(std::string(what) + " must be d×d");
}

inline Matrix concat_rows(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() + b.rows(), a.cols());
    out.topRows(a.rows()) = a;
    out.bottomRows(b.rows()) = b;
    return out;
}

}  // namespace detail

/// Row-wise softmax of the scaled logits Q·Kᵀ/√d, max-shifted for stability.
inline Matrix attention_probabilities(const Matrix& q, const Matrix& k) {
    detail::require_width(q, k, "attention Q/K");
    if (k.rows() == 0) throw DimensionError("attention needs at least one key");
    Matrix s = (q * k.transpose()) / std::sqrt(static_cast<double>(q.cols()));
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        s.row(i).array() = (s.row(i).array() - s.row(i).maxCoeff()).exp();
        s.row(i) /= s.row(i).sum();
    }
    return s;
}

/// Softmax(Q·Kᵀ/√d)·V.
inline Matrix attention(const Matrix& q, const Matrix& k, const Matrix& v) {
    if (k.rows() != v.rows()) throw DimensionError("attention K and V token counts differ");
    return attention_probabilities(q, k) * v;
}

/// Self-attention over the token concatenation [z; y] with shared projections,
/// keeping only the rows that belong to z.
inline Matrix reference_self_attention(const Matrix& z, const Matrix& y, const AttentionWeights& w) {
    if (y.rows() > 0) detail::require_width(z, y, "reference_self_attention z/y");
    const Eigen::Index d = z.cols();
    detail::require_square(w.wq, d, "W_q");
    detail::require_square(w.wk, d, "W_k");
    detail::require_square(w.wv, d, "W_v");
    const Matrix x = y.rows() > 0 ? detail::concat_rows(z, y) : z;
    const Matrix out = attention(x * w.wq.transpose(), x * w.wk.transpose(), x * w.wv.transpose());
    return out.topRows(z.rows());
}

/// Text and image cross-attention streams sharing one query projection.
struct DualCrossWeights {
    Matrix wq;
    Matrix wk_text, wv_text;
    Matrix wk_image, wv_image;
};

/// Attn(Q, K_t, V_t) + Attn(Q, K_i, V_i) with Q from z.
inline Matrix dual_cross_attention(const Matrix& z, const Matrix& text, const Matrix& image,
                                   const DualCrossWeights& w) {
    detail::require_width(z, text, "dual_cross_attention z/text");
    detail::require_width(z, image, "dual_cross_attention z/image");
    const Eigen::Index d = z.cols();
    for (const Matrix* m : {&w.wq, &w.wk_text, &w.wv_text, &w.wk_image, &w.wv_image}) {
        detail::require_square(*m, d, "cross-attention weight");
    }
    const Matrix q = z * w.wq.transpose();
    return attention(q, text * w.wk_text.transpose(), text * w.wv_text.transpose()) +
           attention(q, image * w.wk_image.transpose(), image * w.wv_image.transpose());
}

/// Cumulative signal fractions ᾱ_t, t = 0 … T, with ᾱ_0 = 1.
struct NoiseSchedule {
    std::vector<double> alpha_bar;

    /// ᾱ_t = ∏_{s ≤ t} (1 − β_s) with β linear from `beta_start` to `beta_end`.
    static NoiseSchedule linear(int steps = 1000, double beta_start = 1e-4, double beta_end = 0.02) {
        if (steps < 1) throw ValueError("noise schedule needs at least one step");
        NoiseSchedule s;
        s.alpha_bar.push_back(1.0);
        for (int t = 1; t <= steps; ++t) {
            const double beta =
                steps == 1 ? beta_end : beta_start + (beta_end - beta_start) * (t - 1) / (steps - 1);
            s.alpha_bar.push_back(s.alpha_bar.back() * (1.0 - beta));
        }
        s.validate();
        return s;
    }

    int steps() const { return static_cast<int>(alpha_bar.size()) - 1; }

    void validate() const {
        if (alpha_bar.empty()) throw InvariantError("empty noise schedule");
        for (std::size_t t = 0; t < alpha_bar.size(); ++t) {
            if (!(alpha_bar[t] > 0.0 && alpha_bar[t] <= 1.0)) {
                throw InvariantError("alpha_bar[" + std::to_string(t) + "] outside (0, 1]");
            }
            if (t > 0 && alpha_bar[t] > alpha_bar[t - 1]) {
                throw InvariantError("alpha_bar increases at t=" + std::to_string(t));
            }
        }
    }
};

/// z_t = √ᾱ_t · z0 + √(1 − ᾱ_t) · ε.
inline Matrix add_noise(const Matrix& z0, int t, const Matrix& eps, const NoiseSchedule& schedule) {
    if (t < 0 || t > schedule.steps()) {
        throw ValueError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(schedule.steps()) + "]");
    }
    if (z0.rows() != eps.rows() || z0.cols() != eps.cols()) throw DimensionError("z0 and noise shapes differ");
    const double a = schedule.alpha_bar[static_cast<std::size_t>(t)];
    return std::sqrt(a) * z0 + std::sqrt(1.0 - a) * eps;
}

}  // namespace reshape::attention
