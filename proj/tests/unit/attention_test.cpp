#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles/naive_attention.hpp"
#include "reshape/attention/selfcheck.hpp"

using reshape::DimensionError;
using reshape::InvariantError;
using reshape::NumericError;
using reshape::ValueError;
using namespace reshape::attention;

namespace {

Matrix gaussian(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) { return reshape::attention::detail::gaussian(rng, r, c); }

AttentionWeights random_weights(std::mt19937_64& rng, Eigen::Index d) {
    return {gaussian(rng, d, d), gaussian(rng, d, d), gaussian(rng, d, d)};
}

DualCrossWeights random_cross(std::mt19937_64& rng, Eigen::Index d) {
    return {gaussian(rng, d, d), gaussian(rng, d, d), gaussian(rng, d, d), gaussian(rng, d, d), gaussian(rng, d, d)};
}

}  // namespace

TEST(Attention, SingleKeyReturnsItsValue) {
    std::mt19937_64 rng(1);
    const Matrix q = gaussian(rng, 5, 4);
    const Matrix k = gaussian(rng, 1, 4);
    const Matrix v = gaussian(rng, 1, 4);
    const Matrix out = attention(q, k, v);
    for (Eigen::Index i = 0; i < out.rows(); ++i) EXPECT_EQ(out.row(i), v.row(0));
}

TEST(Attention, UniformLogitsAverageValues) {
    Matrix q = Matrix::Zero(2, 1), k = Matrix::Zero(2, 1), v(2, 1);
    v << 1.0, 3.0;
    const Matrix out = attention(q, k, v);
    EXPECT_DOUBLE_EQ(out(0, 0), 2.0);
    EXPECT_DOUBLE_EQ(out(1, 0), 2.0);
}

TEST(Attention, MatchesNaiveLoops) {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix q = gaussian(rng, 7, 6), k = 2.0 * gaussian(rng, 9, 6), v = gaussian(rng, 9, 6);
        const auto ref = oracle::attention(oracle::rows_of(q), oracle::rows_of(k), oracle::rows_of(v));
        EXPECT_LE(oracle::max_abs_diff(ref, attention(q, k, v)), 1e-9);
    }
}

TEST(Attention, SoftmaxRowsSumToOne) {
    std::mt19937_64 rng(3);
    const Matrix p = attention_probabilities(gaussian(rng, 16, 32), 10.0 * gaussian(rng, 16, 32));
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        EXPECT_NEAR(p.row(i).sum(), 1.0, 1e-12);
        EXPECT_GE(p.row(i).minCoeff(), 0.0);
    }
}

TEST(Attention, DimensionErrors) {
    EXPECT_THROW(attention(Matrix::Zero(2, 3), Matrix::Zero(2, 4), Matrix::Zero(2, 4)), DimensionError);
    EXPECT_THROW(attention(Matrix::Zero(2, 3), Matrix::Zero(2, 3), Matrix::Zero(3, 3)), DimensionError);
    EXPECT_THROW(attention(Matrix::Zero(2, 3), Matrix::Zero(0, 3), Matrix::Zero(0, 3)), DimensionError);
}

TEST(ReferenceSelfAttention, DuplicateReferenceIsPlainSelfAttention) {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        const Matrix z = gaussian(rng, 8, 8);
        const auto w = random_weights(rng, 8);
        const Matrix plain = attention(z * w.wq.transpose(), z * w.wk.transpose(), z * w.wv.transpose());
        EXPECT_LE((reference_self_attention(z, z, w) - plain).cwiseAbs().maxCoeff(), 1e-9);
    }
}

TEST(ReferenceSelfAttention, EmptyReferenceIsPlainSelfAttention) {
    std::mt19937_64 rng(5);
    const Matrix z = gaussian(rng, 6, 4);
    const auto w = random_weights(rng, 4);
    EXPECT_EQ(reference_self_attention(z, Matrix(0, 4), w),
              attention(z * w.wq.transpose(), z * w.wk.transpose(), z * w.wv.transpose()));
}

TEST(ReferenceSelfAttention, MatchesConcatenateThenSliceOracle) {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix z = gaussian(rng, 5, 6), y = gaussian(rng, 7, 6);
        const auto w = random_weights(rng, 6);
        auto x = oracle::rows_of(z);
        for (const auto& row : oracle::rows_of(y)) x.push_back(row);
        auto full = oracle::attention(oracle::project(x, w.wq), oracle::project(x, w.wk), oracle::project(x, w.wv));
        full.resize(static_cast<std::size_t>(z.rows()));
        const Matrix got = reference_self_attention(z, y, w);
        ASSERT_EQ(got.rows(), z.rows());
        EXPECT_LE(oracle::max_abs_diff(full, got), 1e-9);
    }
}

TEST(ReferenceSelfAttention, WidthMismatchThrows) {
    EXPECT_THROW(reference_self_attention(Matrix::Zero(2, 3), Matrix::Zero(2, 4), AttentionWeights::identity(3)),
                 DimensionError);
    EXPECT_THROW(reference_self_attention(Matrix::Zero(2, 3), Matrix::Zero(2, 3), AttentionWeights::identity(4)),
                 DimensionError);
}

TEST(DualCrossAttention, ZeroImageValuesGiveTextOnly) {
    std::mt19937_64 rng(7);
    const Matrix z = gaussian(rng, 6, 5), text = gaussian(rng, 4, 5), image = gaussian(rng, 3, 5);
    auto w = random_cross(rng, 5);
    w.wv_image.setZero();
    const Matrix q = z * w.wq.transpose();
    const Matrix text_only = attention(q, text * w.wk_text.transpose(), text * w.wv_text.transpose());
    EXPECT_EQ(dual_cross_attention(z, text, image, w), text_only);
}

TEST(DualCrossAttention, StreamSwapIsSymmetric) {
    std::mt19937_64 rng(8);
    const Matrix z = gaussian(rng, 6, 5), text = gaussian(rng, 4, 5), image = gaussian(rng, 3, 5);
    const auto w = random_cross(rng, 5);
    const DualCrossWeights swapped{w.wq, w.wk_image, w.wv_image, w.wk_text, w.wv_text};
    EXPECT_EQ(dual_cross_attention(z, text, image, w), dual_cross_attention(z, image, text, swapped));
}

TEST(DualCrossAttention, MatchesSeparateStreamsOracle) {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix z = gaussian(rng, 6, 5), text = gaussian(rng, 4, 5), image = gaussian(rng, 3, 5);
        const auto w = random_cross(rng, 5);
        const auto zr = oracle::rows_of(z), tr = oracle::rows_of(text), ir = oracle::rows_of(image);
        const auto q = oracle::project(zr, w.wq);
        auto a = oracle::attention(q, oracle::project(tr, w.wk_text), oracle::project(tr, w.wv_text));
        const auto b = oracle::attention(q, oracle::project(ir, w.wk_image), oracle::project(ir, w.wv_image));
        for (std::size_t i = 0; i < a.size(); ++i) {
            for (std::size_t c = 0; c < a[i].size(); ++c) a[i][c] += b[i][c];
        }
        EXPECT_LE(oracle::max_abs_diff(a, dual_cross_attention(z, text, image, w)), 1e-9);
    }
    EXPECT_THROW(dual_cross_attention(Matrix::Zero(2, 5), Matrix::Zero(2, 4), Matrix::Zero(2, 5), random_cross(rng, 5)),
                 DimensionError);
}

TEST(NoiseSchedule, LinearIsValidAndMonotone) {
    const auto s = NoiseSchedule::linear(1000);
    EXPECT_EQ(s.steps(), 1000);
    EXPECT_EQ(s.alpha_bar[0], 1.0);
    EXPECT_NO_THROW(s.validate());
    EXPECT_LT(s.alpha_bar.back(), 1e-3);
    EXPECT_THROW((NoiseSchedule{{1.0, 0.5, 0.7}}.validate()), InvariantError);
    EXPECT_THROW((NoiseSchedule{{1.0, 0.0}}.validate()), InvariantError);
}

TEST(AddNoise, EndpointsAndDirectFormula) {
    std::mt19937_64 rng(10);
    const Matrix z0 = gaussian(rng, 4, 4), eps = gaussian(rng, 4, 4);
    const NoiseSchedule s{{1.0, 0.25, 1e-300}};
    EXPECT_EQ(add_noise(z0, 0, eps, s), z0);
    EXPECT_LE((add_noise(z0, 1, eps, s) - (0.5 * z0 + std::sqrt(0.75) * eps)).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LE((add_noise(z0, 2, eps, s) - eps).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_THROW(add_noise(z0, 3, eps, s), ValueError);
    EXPECT_THROW(add_noise(z0, -1, eps, s), ValueError);
    EXPECT_THROW(add_noise(z0, 1, Matrix::Zero(3, 4), s), DimensionError);
}

TEST(AddNoise, SquaredNormExpectationMonteCarlo) {
    // E‖z_t‖² = ᾱ‖z0‖² + (1 − ᾱ)·dim; Var‖z_t‖² = 4ᾱ(1−ᾱ)‖z0‖² + 2(1−ᾱ)²·dim.
    std::mt19937_64 rng(11);
    const Matrix z0 = gaussian(rng, 4, 8);
    const NoiseSchedule s{{1.0, 0.3}};
    const double a = 0.3, dim = static_cast<double>(z0.size());
    constexpr int draws = 10000;
    double sum = 0.0;
    for (int i = 0; i < draws; ++i) sum += add_noise(z0, 1, gaussian(rng, 4, 8), s).squaredNorm();
    const double mean = sum / draws;
    const double expected = a * z0.squaredNorm() + (1 - a) * dim;
    const double sigma = std::sqrt((4 * a * (1 - a) * z0.squaredNorm() + 2 * (1 - a) * (1 - a) * dim) / draws);
    EXPECT_NEAR(mean, expected, 3 * sigma);
}

TEST(DenoisingLoss, RiggedOutputs) {
    // Zero output weights make the prediction the bias row for every token.
    const auto schedule = NoiseSchedule::linear(50);
    const auto data = make_toy_dataset(1, 4, 6, 3, 1);
    ToyDenoiser net = ToyDenoiser::init(6, 5, 1);
    net.w2.setZero();
    Matrix eps(4, 6);
    for (Eigen::Index i = 0; i < 4; ++i) eps.row(i) << 0.1, -0.2, 0.3, 0.4, -0.5, 0.6;
    net.b2 = eps.row(0).transpose();
    EXPECT_DOUBLE_EQ(denoising_loss(net, data[0].z0, 10, data[0].bundle, eps, schedule), 0.0);
    net.b2.array() += 1.0;
    EXPECT_DOUBLE_EQ(denoising_loss(net, data[0].z0, 10, data[0].bundle, eps, schedule), 1.0);
}

TEST(DenoisingLoss, NonNegativeAndDimensionChecked) {
    const auto schedule = NoiseSchedule::linear(50);
    const auto data = make_toy_dataset(2, 4, 6, 3, 2);
    const auto net = ToyDenoiser::init(6, 5, 2);
    std::mt19937_64 rng(12);
    EXPECT_GE(denoising_loss(net, data[0].z0, 25, data[0].bundle, gaussian(rng, 4, 6), schedule), 0.0);
    auto bad = data[0].bundle;
    bad.depth = Matrix::Zero(3, 6);
    EXPECT_THROW(denoising_loss(net, data[0].z0, 25, bad, gaussian(rng, 4, 6), schedule), DimensionError);
    bad = data[0].bundle;
    bad.text = Matrix::Zero(2, 5);
    EXPECT_THROW(denoising_loss(net, data[0].z0, 25, bad, gaussian(rng, 4, 6), schedule), DimensionError);
}

TEST(DenoisingLoss, GradientsMatchFiniteDifferences) {
    const auto schedule = NoiseSchedule::linear(1000);
    const auto data = make_toy_dataset(3, 8, 8, 4, 3);
    const auto net = ToyDenoiser::init(8, 16, 3);
    std::mt19937_64 rng(13);
    for (int t : {1, 400, 999}) {
        const auto& s = data[static_cast<std::size_t>(t) % 3];
        const auto checks = check_gradients(net, s.z0, t, s.bundle, gaussian(rng, 8, 8), schedule, 1e-5);
        ASSERT_EQ(checks.size(), 12u);
        for (const auto& c : checks) EXPECT_LE(c.relative_error, 1e-4) << c.parameter << " at t=" << t;
    }
}

TEST(DenoisingLoss, GradientsWithoutReferenceTokens) {
    const auto schedule = NoiseSchedule::linear(100);
    auto data = make_toy_dataset(1, 5, 4, 2, 4);
    data[0].bundle.reference = Matrix(0, 4);
    std::mt19937_64 rng(14);
    for (const auto& c : check_gradients(ToyDenoiser::init(4, 6, 4), data[0].z0, 30, data[0].bundle,
                                         gaussian(rng, 5, 4), schedule)) {
        EXPECT_LE(c.relative_error, 1e-4) << c.parameter;
    }
}

TEST(TrainToy, HalvesTheLossIn200Steps) {
    const auto schedule = NoiseSchedule::linear(1000);
    const auto data = make_toy_dataset(16, 8, 8, 4, 21);
    const auto init = ToyDenoiser::init(8, 16, 22);
    const auto r = train_toy(data, init, 200, 0.2, schedule, 23);
    ASSERT_EQ(r.loss_trace.size(), 201u);
    const double before = evaluate_toy(init, data, schedule, 24);
    const double after = evaluate_toy(r.model, data, schedule, 24);
    EXPECT_LT(after, 0.5 * before) << before << " -> " << after;
}

TEST(TrainToy, ZeroLearningRateLeavesParameters) {
    const auto schedule = NoiseSchedule::linear(100);
    const auto data = make_toy_dataset(4, 4, 4, 2, 5);
    const auto init = ToyDenoiser::init(4, 6, 5);
    const auto r = train_toy(data, init, 10, 0.0, schedule, 6);
    const auto a = init.parameters();
    const auto b = r.model.parameters();
    for (std::size_t p = 0; p < a.size(); ++p) EXPECT_EQ(*a[p].second, *b[p].second) << a[p].first;
}

TEST(TrainToy, FixedSeedIsBitReproducible) {
    const auto schedule = NoiseSchedule::linear(100);
    const auto data = make_toy_dataset(4, 4, 4, 2, 7);
    const auto a = train_toy(data, ToyDenoiser::init(4, 6, 8), 20, 0.1, schedule, 9);
    const auto b = train_toy(data, ToyDenoiser::init(4, 6, 8), 20, 0.1, schedule, 9);
    EXPECT_EQ(a.loss_trace, b.loss_trace);
}

TEST(TrainToy, DivergenceReportsStep) {
    const auto schedule = NoiseSchedule::linear(100);
    const auto data = make_toy_dataset(2, 4, 4, 2, 10);
    try {
        train_toy(data, ToyDenoiser::init(4, 6, 11), 50, 1e200, schedule, 12);
        FAIL() << "expected divergence";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("step"), std::string::npos);
    }
    EXPECT_THROW(train_toy({}, ToyDenoiser::init(4, 6, 11), 5, 0.1, schedule, 1), ValueError);
}

TEST(Selfcheck, AllChecksPass) {
    for (const auto& c : run_selfcheck()) EXPECT_TRUE(c.passed) << c.name << ": " << c.detail;
}
