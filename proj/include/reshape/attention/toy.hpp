#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "reshape/attention/attention.hpp"

namespace reshape::attention {

/// Conditioning inputs of the toy denoiser: prompt tokens, image-prompt tokens,
/// reference features, and a per-token depth residual.
struct ConditioningBundle {
    Matrix text;
    Matrix image;
    Matrix reference;
    Matrix depth;
};

/// ε-prediction network at desk scale:
///
///   h0  = z_t + depth + e(t)
///   h1  = h0 + RefAttn(h0, reference)          (shared W_q/W_k/W_v over [h0; reference])
///   h2  = h1 + Attn(h1, text) + Attn(h1, image) (shared query projection)
///   out = tanh(h2·W1ᵀ + b1)·W2ᵀ + b2
///
/// where e(t) is a fixed sinusoidal timestep embedding.
struct ToyDenoiser {
    Matrix ref_wq, ref_wk, ref_wv;
    Matrix cross_wq, cross_wk_text, cross_wv_text, cross_wk_image, cross_wv_image;
    Matrix w1, b1;  // hidden×d, hidden×1
    Matrix w2, b2;  // d×hidden, d×1

    Eigen::Index width() const { return ref_wq.rows(); }
    Eigen::Index hidden() const { return w1.rows(); }

    /// Named views of every trainable tensor, in a fixed order.
    std::vector<std::pair<std::string, Matrix*>> parameters() {
        return {{"ref_wq", &ref_wq},
                {"ref_wk", &ref_wk},
                {"ref_wv", &ref_wv},
                {"cross_wq", &cross_wq},
                {"cross_wk_text", &cross_wk_text},
                {"cross_wv_text", &cross_wv_text},
                {"cross_wk_image", &cross_wk_image},
                {"cross_wv_image", &cross_wv_image},
                {"w1", &w1},
                {"b1", &b1},
                {"w2", &w2},
                {"b2", &b2}};
    }
    std::vector<std::pair<std::string, const Matrix*>> parameters() const {
        auto* self = const_cast<ToyDenoiser*>(this);
        std::vector<std::pair<std::string, const Matrix*>> out;
        for (auto& [name, m] : self->parameters()) out.emplace_back(name, m);
        return out;
    }

    /// Same shapes, all zeros (used as a gradient accumulator).
    ToyDenoiser zeros_like() const {
        ToyDenoiser g = *this;
        for (auto& [name, m] : g.parameters()) m->setZero();
        return g;
    }

    /// Seeded initialization: entries are N(0, 1/fan_in) via Box–Muller on
    /// mt19937_64 output; biases start at zero.
    static ToyDenoiser init(Eigen::Index d, Eigen::Index hidden, std::uint64_t seed) {
        if (d <= 0 || hidden <= 0) throw ValueError("toy denoiser sizes must be positive");
        std::mt19937_64 rng(seed);
        auto uniform = [&] { return (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53; };  // (0, 1]
        auto gaussian = [&](Eigen::Index rows, Eigen::Index cols) {
            Matrix m(rows, cols);
            const double sd = 1.0 / std::sqrt(static_cast<double>(cols));
            for (Eigen::Index i = 0; i < rows; ++i) {
                for (Eigen::Index j = 0; j < cols; ++j) {
                    const double u1 = uniform(), u2 = uniform();
                    m(i, j) = sd * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
                }
            }
            return m;
        };
        ToyDenoiser n;
        n.ref_wq = gaussian(d, d);
        n.ref_wk = gaussian(d, d);
        n.ref_wv = gaussian(d, d);
        n.cross_wq = gaussian(d, d);
        n.cross_wk_text = gaussian(d, d);
        n.cross_wv_text = gaussian(d, d);
        n.cross_wk_image = gaussian(d, d);
        n.cross_wv_image = gaussian(d, d);
        n.w1 = gaussian(hidden, d);
        n.b1 = Matrix::Zero(hidden, 1);
        n.w2 = gaussian(d, hidden);
        n.b2 = Matrix::Zero(d, 1);
        return n;
    }
};

/// Sinusoidal embedding: e[2j] = sin(t·ω_j), e[2j+1] = cos(t·ω_j), ω_j = 10000^(−2j/d).
inline Eigen::RowVectorXd timestep_embedding(int t, Eigen::Index d) {
    Eigen::RowVectorXd e(d);
    for (Eigen::Index i = 0; i < d; ++i) {
        const double omega = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
        e(i) = i % 2 == 0 ? std::sin(t * omega) : std::cos(t * omega);
    }
    return e;
}

namespace detail {

struct AttnCache {
    Matrix q, k, v, p;
};

inline AttnCache attend(const Matrix& q, const Matrix& k, const Matrix& v) {
    return {q, k, v, attention_probabilities(q, k)};
}

/// Gradients of O = softmax(QKᵀ/√d)·V with respect to Q, K, V.
inline void attend_backward(const AttnCache& c, const Matrix& d_out, Matrix& dq, Matrix& dk, Matrix& dv) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(c.q.cols()));
    dv = c.p.transpose() * d_out;
    const Matrix dp = d_out * c.v.transpose();
    Matrix ds = c.p.cwiseProduct(dp);
    const Eigen::VectorXd row = ds.rowwise().sum();
    ds -= c.p.cwiseProduct(row.replicate(1, c.p.cols()));
    dq = scale * ds * c.k;
    dk = scale * ds.transpose() * c.q;
}

struct ForwardCache {
    Matrix h0, x_ref, h1, h2, a, u, out;
    AttnCache ref, text, image;
};

inline void check_inputs(const ToyDenoiser& net, const Matrix& z_t, const ConditioningBundle& b) {
    const Eigen::Index d = net.width();
    if (z_t.cols() != d) throw DimensionError("z_t width does not match the denoiser");
    if (b.depth.rows() != z_t.rows() || b.depth.cols() != d) throw DimensionError("depth tokens must match z_t");
    if (b.text.cols() != d || b.image.cols() != d) throw DimensionError("prompt token width mismatch");
    if (b.text.rows() == 0 || b.image.rows() == 0) throw DimensionError("prompt streams need at least one token");
    if (b.reference.rows() > 0 && b.reference.cols() != d) throw DimensionError("reference width mismatch");
}

inline ForwardCache forward(const ToyDenoiser& net, const Matrix& z_t, int t, const ConditioningBundle& b) {
    check_inputs(net, z_t, b);
    ForwardCache c;
    c.h0 = z_t + b.depth;
    c.h0.rowwise() += timestep_embedding(t, net.width());
    c.x_ref = b.reference.rows() > 0 ? concat_rows(c.h0, b.reference) : c.h0;
    c.ref = attend(c.h0 * net.ref_wq.transpose(), c.x_ref * net.ref_wk.transpose(),
                   c.x_ref * net.ref_wv.transpose());
    c.h1 = c.h0 + c.ref.p * c.ref.v;
    const Matrix q = c.h1 * net.cross_wq.transpose();
    c.text = attend(q, b.text * net.cross_wk_text.transpose(), b.text * net.cross_wv_text.transpose());
    c.image = attend(q, b.image * net.cross_wk_image.transpose(), b.image * net.cross_wv_image.transpose());
    c.h2 = c.h1 + c.text.p * c.text.v + c.image.p * c.image.v;
    c.a = c.h2 * net.w1.transpose();
    c.a.rowwise() += net.b1.col(0).transpose();
    c.u = c.a.array().tanh().matrix();
    c.out = c.u * net.w2.transpose();
    c.out.rowwise() += net.b2.col(0).transpose();
    return c;
}

}  // namespace detail

/// ε̂ = ε_θ(z_t, t, bundle).
inline Matrix predict_noise(const ToyDenoiser& net, const Matrix& z_t, int t, const ConditioningBundle& bundle) {
    return detail::forward(net, z_t, t, bundle).out;
}

/// Mean squared error between ε and the prediction from z_t = add_noise(z0, t, ε).
inline double denoising_loss(const ToyDenoiser& net, const Matrix& z0, int t, const ConditioningBundle& bundle,
                             const Matrix& eps, const NoiseSchedule& schedule) {
    const Matrix pred = predict_noise(net, add_noise(z0, t, eps, schedule), t, bundle);
    return (pred - eps).squaredNorm() / static_cast<double>(eps.size());
}

/// Loss and its gradient with respect to every parameter (manual backprop).
inline double denoising_loss_and_gradient(const ToyDenoiser& net, const Matrix& z0, int t,
                                          const ConditioningBundle& bundle, const Matrix& eps,
                                          const NoiseSchedule& schedule, ToyDenoiser& grad) {
    const Matrix z_t = add_noise(z0, t, eps, schedule);
    const auto c = detail::forward(net, z_t, t, bundle);
    const Matrix diff = c.out - eps;
    const double n = static_cast<double>(eps.size());

    const Matrix d_out = (2.0 / n) * diff;
    grad.w2 += d_out.transpose() * c.u;
    grad.b2 += d_out.colwise().sum().transpose();
    const Matrix d_a = (d_out * net.w2).cwiseProduct((1.0 - c.u.array().square()).matrix());
    grad.w1 += d_a.transpose() * c.h2;
    grad.b1 += d_a.colwise().sum().transpose();
    const Matrix d_h2 = d_a * net.w1;

    // Dual cross-attention block (residual).
    Matrix d_h1 = d_h2;
    Matrix dq_total = Matrix::Zero(c.h1.rows(), net.width());
    {
        Matrix dq, dk, dv;
        detail::attend_backward(c.text, d_h2, dq, dk, dv);
        dq_total += dq;
        grad.cross_wk_text += dk.transpose() * bundle.text;
        grad.cross_wv_text += dv.transpose() * bundle.text;
        detail::attend_backward(c.image, d_h2, dq, dk, dv);
        dq_total += dq;
        grad.cross_wk_image += dk.transpose() * bundle.image;
        grad.cross_wv_image += dv.transpose() * bundle.image;
    }
    grad.cross_wq += dq_total.transpose() * c.h1;
    d_h1 += dq_total * net.cross_wq;

    // Reference self-attention block (residual); keys/values see [h0; reference].
    Matrix d_h0 = d_h1;
    {
        Matrix dq, dk, dv;
        detail::attend_backward(c.ref, d_h1, dq, dk, dv);
        grad.ref_wq += dq.transpose() * c.h0;
        grad.ref_wk += dk.transpose() * c.x_ref;
        grad.ref_wv += dv.transpose() * c.x_ref;
        d_h0 += dq * net.ref_wq;
        const Matrix d_x = dk * net.ref_wk + dv * net.ref_wv;
        d_h0 += d_x.topRows(c.h0.rows());
    }
    return diff.squaredNorm() / n;
}

struct GradientCheck {
    std::string parameter;
    double relative_error = 0.0;
};

/// Central finite differences of the loss with respect to every parameter entry,
/// compared per tensor as ‖g − g_fd‖ / max(‖g‖, ‖g_fd‖, 1e-8).
inline std::vector<GradientCheck> check_gradients(const ToyDenoiser& net, const Matrix& z0, int t,
                                                  const ConditioningBundle& bundle, const Matrix& eps,
                                                  const NoiseSchedule& schedule, double h = 1e-5) {
    ToyDenoiser analytic = net.zeros_like();
    denoising_loss_and_gradient(net, z0, t, bundle, eps, schedule, analytic);
    ToyDenoiser probe = net;
    std::vector<GradientCheck> out;
    auto probe_params = probe.parameters();
    const auto grad_params = analytic.parameters();
    for (std::size_t p = 0; p < probe_params.size(); ++p) {
        Matrix& m = *probe_params[p].second;
        Matrix fd(m.rows(), m.cols());
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            const double saved = m.data()[i];
            m.data()[i] = saved + h;
            const double plus = denoising_loss(probe, z0, t, bundle, eps, schedule);
            m.data()[i] = saved - h;
            const double minus = denoising_loss(probe, z0, t, bundle, eps, schedule);
            m.data()[i] = saved;
            fd.data()[i] = (plus - minus) / (2.0 * h);
        }
        const Matrix& g = *grad_params[p].second;
        const double denom = std::max({g.norm(), fd.norm(), 1e-8});
        out.push_back({probe_params[p].first, (g - fd).norm() / denom});
    }
    return out;
}

struct ToySample {
    Matrix z0;
    ConditioningBundle bundle;
};

struct TrainResult {
    ToyDenoiser model;
    std::vector<double> loss_trace;  // dataset-mean loss before each update, then the final loss
};

/// Dataset-mean loss on one fixed (t, ε) draw per sample, seeded by `seed`,
/// so models can be compared on identical noise.
inline double evaluate_toy(const ToyDenoiser& net, const std::vector<ToySample>& data,
                           const NoiseSchedule& schedule, std::uint64_t seed) {
    if (data.empty()) throw ValueError("evaluation set is empty");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> timestep(1, schedule.steps());
    std::normal_distribution<double> normal(0.0, 1.0);
    double total = 0.0;
    for (const auto& s : data) {
        const int t = timestep(rng);
        Matrix eps(s.z0.rows(), s.z0.cols());
        for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = normal(rng);
        total += denoising_loss(net, s.z0, t, s.bundle, eps, schedule);
    }
    return total / static_cast<double>(data.size());
}

/// Synthetic conditioning set: Gaussian latents z0 (N×d), reference features
/// close to z0, small depth residuals, and Gaussian prompt tokens.
inline std::vector<ToySample> make_toy_dataset(std::size_t count, Eigen::Index tokens, Eigen::Index d,
                                               Eigen::Index prompt_tokens, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto draw = [&](Eigen::Index r, Eigen::Index c) {
        Matrix m(r, c);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
        return m;
    };
    std::vector<ToySample> out;
    for (std::size_t i = 0; i < count; ++i) {
        ToySample s;
        s.z0 = draw(tokens, d);
        s.bundle.text = draw(prompt_tokens, d);
        s.bundle.image = draw(prompt_tokens, d);
        s.bundle.reference = s.z0 + 0.1 * draw(tokens, d);
        s.bundle.depth = 0.1 * draw(tokens, d);
        out.push_back(std::move(s));
    }
    return out;
}

/// Full-batch gradient descent on the denoising objective. Every step draws a
/// fresh timestep and noise per sample from `seed`.
inline TrainResult train_toy(const std::vector<ToySample>& data, ToyDenoiser init, int steps, double learning_rate,
                             const NoiseSchedule& schedule, std::uint64_t seed) {
    if (data.empty()) throw ValueError("training set is empty");
    if (steps < 0) throw ValueError("step count must be non-negative");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> timestep(1, schedule.steps());
    std::normal_distribution<double> normal(0.0, 1.0);
    TrainResult r{std::move(init), {}};
    const double inv = 1.0 / static_cast<double>(data.size());

    auto draw = [&](const Matrix& like) {
        Matrix e(like.rows(), like.cols());
        for (Eigen::Index i = 0; i < e.size(); ++i) e.data()[i] = normal(rng);
        return e;
    };
    for (int step = 0; step <= steps; ++step) {
        ToyDenoiser grad = r.model.zeros_like();
        double loss = 0.0;
        for (const auto& s : data) {
            const int t = timestep(rng);
            const Matrix eps = draw(s.z0);
            loss += inv * denoising_loss_and_gradient(r.model, s.z0, t, s.bundle, eps, schedule, grad);
        }
        if (!std::isfinite(loss)) throw NumericError("training diverged at step " + std::to_string(step));
        r.loss_trace.push_back(loss);
        if (step == steps) break;
        auto params = r.model.parameters();
        const auto grads = grad.parameters();
        for (std::size_t p = 0; p < params.size(); ++p) *params[p].second -= (learning_rate * inv) * *grads[p].second;
    }
    return r;
}

}  // namespace reshape::attention
