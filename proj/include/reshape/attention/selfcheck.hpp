#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "reshape/attention/toy.hpp"

namespace reshape::attention {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

namespace detail {

inline Matrix gaussian(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
    return m;
}

inline std::string format(double v) {
    std::ostringstream s;
    s.precision(3);
    s << v;
    return s.str();
}

}  // namespace detail

/// Invariant suite for the attention reference: softmax normalization,
/// duplicate-reference identity, dual-stream additivity and symmetry,
/// forward-noising endpoints, gradient correctness, and toy training progress.
inline std::vector<CheckResult> run_selfcheck(std::uint64_t seed = 0) {
    std::mt19937_64 rng(seed);
    std::vector<CheckResult> out;
    constexpr Eigen::Index n = 8, d = 8;

    {
        double worst = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
            const Matrix p = attention_probabilities(detail::gaussian(rng, n, d), 3.0 * detail::gaussian(rng, 12, d));
            worst = std::max(worst, (p.rowwise().sum().array() - 1.0).abs().maxCoeff());
        }
        out.push_back({"softmax rows sum to 1", worst <= 1e-12, "max deviation " + detail::format(worst)});
    }
    {
        double worst = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
            const Matrix z = detail::gaussian(rng, n, d);
            const AttentionWeights w{detail::gaussian(rng, d, d), detail::gaussian(rng, d, d),
                                     detail::gaussian(rng, d, d)};
            const Matrix plain = attention(z * w.wq.transpose(), z * w.wk.transpose(), z * w.wv.transpose());
            worst = std::max(worst, (reference_self_attention(z, z, w) - plain).cwiseAbs().maxCoeff());
        }
        out.push_back({"duplicate reference equals plain self-attention", worst <= 1e-9,
                       "max deviation " + detail::format(worst)});
    }
    {
        bool exact = true;
        for (int trial = 0; trial < 20; ++trial) {
            const Matrix z = detail::gaussian(rng, n, d);
            const Matrix text = detail::gaussian(rng, 5, d);
            const Matrix image = detail::gaussian(rng, 3, d);
            DualCrossWeights w{detail::gaussian(rng, d, d), detail::gaussian(rng, d, d), detail::gaussian(rng, d, d),
                               detail::gaussian(rng, d, d), detail::gaussian(rng, d, d)};
            const Matrix q = z * w.wq.transpose();
            const Matrix separate =
                attention(q, text * w.wk_text.transpose(), text * w.wv_text.transpose()) +
                attention(q, image * w.wk_image.transpose(), image * w.wv_image.transpose());
            const DualCrossWeights swapped{w.wq, w.wk_image, w.wv_image, w.wk_text, w.wv_text};
            exact = exact && dual_cross_attention(z, text, image, w) == separate &&
                    dual_cross_attention(z, image, text, swapped) == separate;
        }
        out.push_back({"dual cross-attention additivity and stream swap", exact, exact ? "exact" : "mismatch"});
    }
    {
        const Matrix z0 = detail::gaussian(rng, n, d);
        const Matrix eps = detail::gaussian(rng, n, d);
        const NoiseSchedule schedule{{1.0, 0.5, 1e-300}};
        const bool clean = add_noise(z0, 0, eps, schedule) == z0;
        const double pure = (add_noise(z0, 2, eps, schedule) - eps).cwiseAbs().maxCoeff();
        out.push_back({"forward noising endpoints", clean && pure <= 1e-12,
                       std::string(clean ? "t=0 exact" : "t=0 differs") + ", ᾱ→0 deviation " + detail::format(pure)});
    }
    const auto schedule = NoiseSchedule::linear(1000);
    const auto data = make_toy_dataset(16, n, d, 4, seed + 1);
    const auto init = ToyDenoiser::init(d, 16, seed + 2);
    {
        double worst = 0.0;
        std::string where;
        for (int t : {1, 250, 900}) {
            const auto& s = data[static_cast<std::size_t>(t) % data.size()];
            for (const auto& c : check_gradients(init, s.z0, t, s.bundle, detail::gaussian(rng, n, d), schedule)) {
                if (c.relative_error >= worst) {
                    worst = c.relative_error;
                    where = c.parameter;
                }
            }
        }
        out.push_back({"analytic gradients match finite differences", worst <= 1e-4,
                       "worst relative error " + detail::format(worst) + " (" + where + ")"});
    }
    {
        const auto trained = train_toy(data, init, 200, 0.2, schedule, seed + 3);
        const double before = evaluate_toy(init, data, schedule, seed + 4);
        const double after = evaluate_toy(trained.model, data, schedule, seed + 4);
        out.push_back({"toy training halves the denoising loss", after < 0.5 * before,
                       detail::format(before) + " -> " + detail::format(after)});
    }
    return out;
}

}  // namespace reshape::attention
