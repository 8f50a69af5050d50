#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "oracles/block_body.hpp"
#include "oracles/voxel_volume.hpp"
#include "reshape/body/test_model.hpp"
#include "reshape/semantic/mapping.hpp"

using namespace reshape;
using namespace reshape::semantic;
using body::Mesh;
using body::Points;

namespace {

// Closed n-gon prism of the given circumradius, y ∈ [0, height], outward faces.
Mesh prism(int sides, double radius, double height, double rotation = 0.0) {
    Mesh m;
    m.vertices.resize(2 * sides, 3);
    for (int k = 0; k < sides; ++k) {
        const double phi = rotation + 2.0 * std::numbers::pi * k / sides;
        m.vertices.row(k) << radius * std::cos(phi), 0.0, radius * std::sin(phi);
        m.vertices.row(sides + k) << radius * std::cos(phi), height, radius * std::sin(phi);
    }
    std::vector<std::array<int, 3>> faces;
    for (int k = 0; k < sides; ++k) {
        const int a = k, b = (k + 1) % sides, c = sides + (k + 1) % sides, d = sides + k;
        faces.push_back({a, c, b});
        faces.push_back({a, d, c});
    }
    for (int k = 1; k + 1 < sides; ++k) {
        faces.push_back({0, k, k + 1});
        faces.push_back({sides, sides + k + 1, sides + k});
    }
    m.faces.resize(static_cast<Eigen::Index>(faces.size()), 3);
    for (std::size_t f = 0; f < faces.size(); ++f) {
        m.faces.row(static_cast<Eigen::Index>(f)) << faces[f][0], faces[f][1], faces[f][2];
    }
    return m;
}

Mesh unit_cube() {
    // Square prism with side 1: circumradius √½, rotated 45° so faces are axis aligned.
    Mesh m = prism(4, std::sqrt(0.5), 1.0, std::numbers::pi / 4);
    m.vertices.col(0).array() += 0.5;
    m.vertices.col(2).array() += 0.5;
    return m;
}

std::vector<Sample> planted_corpus(const Eigen::MatrixXd& a, const Eigen::VectorXd& b0, std::size_t n,
                                   std::uint64_t seed, double noise = 0.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<Sample> out;
    for (std::size_t i = 0; i < n; ++i) {
        AttributeVector attrs{1.5 + 0.3 * u(rng), 70 + 25 * u(rng), 0.95 + 0.1 * u(rng),
                              0.8 + 0.1 * u(rng), 1.0 + 0.1 * u(rng), u(rng)};
        Eigen::VectorXd x(6);
        x << attrs.height, attrs.weight, attrs.chest, attrs.waist, attrs.hips, attrs.muscularity;
        Eigen::VectorXd beta = b0 + a * x;
        for (Eigen::Index k = 0; k < beta.size(); ++k) beta(k) += noise * g(rng);
        out.push_back({beta, attrs});
    }
    return out;
}

}  // namespace

TEST(MeshVolume, UnitCubeAndScaling) {
    const Mesh cube = unit_cube();
    EXPECT_NEAR(mesh_volume(cube), 1.0, 1e-12);
    for (double s : {0.5, 2.0, 3.7}) {
        Mesh scaled = cube;
        scaled.vertices *= s;
        EXPECT_NEAR(mesh_volume(scaled), s * s * s, 1e-9);
    }
}

TEST(MeshVolume, InvertedMeshIsRejected) {
    Mesh cube = unit_cube();
    cube.faces.col(1).swap(cube.faces.col(2));
    EXPECT_THROW(mesh_volume(cube), NumericError);
}

TEST(MeshVolume, MiniModelMatchesVoxelCount) {
    const auto m = body::make_test_model(0);
    const Mesh mesh = m.mesh_with(m.template_vertices);
    const double vox = oracle::voxel_volume(mesh, 0.001);
    EXPECT_NEAR(mesh_volume(mesh), vox, 0.01 * vox);
}

TEST(Circumference, SquarePrism) {
    for (double side : {0.3, 1.0, 2.5}) {
        Mesh m = prism(4, side * std::sqrt(0.5), 2.0, std::numbers::pi / 4);
        for (double f : {0.1, 0.37, 0.5, 0.93}) EXPECT_NEAR(circumference(m, f), 4 * side, 1e-9);
    }
}

TEST(Circumference, ThirtyTwoGonCylinder) {
    const Mesh m = prism(32, 1.0, 1.0);
    EXPECT_NEAR(circumference(m, 0.5), 64 * std::sin(std::numbers::pi / 32), 1e-9);
    EXPECT_NEAR(circumference(m, 0.5), 6.27310, 1e-5);
}

TEST(Circumference, PlaneAboveTopThrows) {
    const Mesh m = prism(8, 1.0, 1.0);
    EXPECT_THROW(circumference(m, 1.2), NoIntersectionError);
    EXPECT_THROW(circumference(m, -0.1), NoIntersectionError);
    EXPECT_GT(circumference(m, 1.0), 0.0);
}

TEST(Measure, MiniModelFixture) {
    const auto m = body::make_test_model(0);
    const auto a = measure(m, body::ShapeParams::zero(4));
    // Frozen from this implementation; height and weight cross-checked above
    // against the vertex extent and the voxel volume oracle.
    EXPECT_NEAR(a.height, 1.7254003286361694, 1e-9);
    EXPECT_NEAR(a.weight, 65.274992082707442, 1e-9);
    EXPECT_NEAR(a.chest, 0.87189014423266953, 1e-9);
    EXPECT_NEAR(a.waist, 0.76462617124621646, 1e-9);
    EXPECT_NEAR(a.hips, 0.85421322546632794, 1e-9);
    EXPECT_EQ(a.muscularity, 0.0);
    EXPECT_EQ(a, measure(m, body::ShapeParams::zero(4)));
}

TEST(Measure, DoublingScale) {
    auto m = body::make_test_model(0);
    const auto a = measure(m, body::ShapeParams::zero(4));
    m.template_vertices *= 2.0;
    const auto b = measure(m, body::ShapeParams::zero(4));
    EXPECT_NEAR(b.height, 2 * a.height, 1e-12);
    EXPECT_NEAR(b.weight, 8 * a.weight, 1e-9);
    EXPECT_NEAR(b.chest, 2 * a.chest, 1e-12);
}

TEST(FitMap, RecoversPlantedAffineMap) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    Eigen::MatrixXd a(4, 6);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
    Eigen::VectorXd b0(4);
    b0 << 0.5, -1.0, 2.0, 0.0;
    const auto corpus = planted_corpus(a, b0, 40, 17);
    const auto map = fit_map(corpus, 0.0);
    EXPECT_LT(map.residual, 1e-9);
    // Recover the raw-attribute map: β = beta0 + A·diag(1/scale)·(x − mean).
    const Eigen::MatrixXd raw = map.A * map.attr_scale.cwiseInverse().asDiagonal();
    EXPECT_LT((raw - a).cwiseAbs().maxCoeff(), 1e-6);
    const Eigen::VectorXd intercept = map.beta0 - raw * map.attr_mean;
    EXPECT_LT((intercept - b0).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(FitMap, DuplicateSamplesAreSingular) {
    const Sample s{Eigen::VectorXd::Ones(4), AttributeVector{1.7, 70, 1, 0.8, 1, 0}};
    const std::vector<Sample> dupes(10, s);
    EXPECT_THROW(fit_map(dupes, 0.0), NumericError);
    EXPECT_NO_THROW(fit_map(dupes, 1e-4));
}

TEST(FitMap, TooFewSamples) {
    const std::vector<Sample> few(3, Sample{Eigen::VectorXd::Ones(4), AttributeVector{}});
    EXPECT_THROW(fit_map(few), ValueError);
}

TEST(FitMap, RidgeResidualOnNoisyCorpusStaysNearNoiseLevel) {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g;
    Eigen::MatrixXd a(4, 6);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
    const Eigen::VectorXd b0 = Eigen::VectorXd::Zero(4);
    const double noise = 0.05;
    const auto clean = fit_map(planted_corpus(a, b0, 200, 5), 1e-3);
    const auto noisy = fit_map(planted_corpus(a, b0, 200, 5, noise), 1e-3);
    // Least squares cannot do worse than the planted map, whose RMS residual is the noise.
    EXPECT_LE(noisy.residual, clean.residual + 1.1 * noise);
    EXPECT_LT(clean.residual, 1e-3);
}

TEST(AttributesToBeta, ExactCorpusRoundTrip) {
    const auto model = oracle::block_body();
    auto corpus = sample_corpus(model, 60, 1, 1.0);
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    // Muscularity labels carry no geometry; independent labels keep the design full rank.
    for (auto& s : corpus) s.attributes.muscularity = 2.0 * u(rng);
    const auto map = fit_map(corpus, 0.0);
    for (int trial = 0; trial < 10; ++trial) {
        Eigen::VectorXd beta(5);
        for (Eigen::Index k = 0; k < 5; ++k) beta(k) = u(rng);
        const auto projected = attributes_to_beta(map, model, {beta}, {});
        EXPECT_LT((projected.beta - beta).cwiseAbs().maxCoeff(), 1e-6);
        const auto again = attributes_to_beta(map, model, projected, {});
        EXPECT_LT((again.beta - projected.beta).cwiseAbs().maxCoeff(), 1e-6);
    }
}

TEST(AttributesToBeta, WeightEditOnExactCorpus) {
    const auto model = oracle::block_body();
    const auto map = fit_map(sample_corpus(model, 60, 1, 1.0), 1e-4);
    const body::ShapeParams start{Eigen::VectorXd::Zero(5)};
    const auto before = slider_state(map, model, start);
    const std::vector<AttributeEdit> edits{{"weight", 10.0, true}};
    const auto after = slider_state(map, model, attributes_to_beta(map, model, start, edits));
    EXPECT_NEAR(after.weight, before.weight + 10.0, 0.1);
    EXPECT_NEAR(after.height, before.height, 1e-3);
    EXPECT_NEAR(after.chest, before.chest, 1e-6);
}

TEST(AttributesToBeta, HeightEditReflectedInSliderState) {
    const auto model = oracle::block_body();
    const auto map = fit_map(sample_corpus(model, 60, 4, 1.0), 1e-4);
    const body::ShapeParams start{Eigen::VectorXd::Zero(5)};
    const std::vector<AttributeEdit> edits{{"height", 1.73, false}};
    const auto state = slider_state(map, model, attributes_to_beta(map, model, start, edits));
    EXPECT_NEAR(state.height, 1.73, 1e-6);
}

TEST(AttributesToBeta, UnknownAttribute) {
    const auto model = body::make_test_model(0);
    const auto map = fit_map(sample_corpus(model, 30, 1), 1e-4);
    const std::vector<AttributeEdit> edits{{"wingspan", 1.0, true}};
    EXPECT_THROW(attributes_to_beta(map, model, body::ShapeParams::zero(4), edits), ValueError);
}

TEST(SliderState, MiniModelWeightSliderIsMonotone) {
    const auto model = body::make_test_model(0);
    const auto map = fit_map(sample_corpus(model, 200, 7, 1.5), 1e-4);
    auto state = slider_state(map, model, body::ShapeParams::zero(4));
    EXPECT_EQ(state, slider_state(map, model, body::ShapeParams::zero(4)));
    double previous = 0.0;
    for (int step = 0; step <= 10; ++step) {
        AttributeVector target = state;
        target.weight += 2.0 * step;
        const std::vector<AttributeEdit> none;
        const auto beta = attributes_to_beta(map, target, none);
        const double volume = mesh_volume(model.mesh_with(body::shaped_template(model, beta)));
        if (step > 0) EXPECT_GT(volume, previous) << "step " << step;
        previous = volume;
    }
}

TEST(ParseEdit, Forms) {
    const auto rel = parse_edit("weight=+10");
    EXPECT_EQ(rel.name, "weight");
    EXPECT_TRUE(rel.relative);
    EXPECT_EQ(rel.value, 10.0);
    EXPECT_TRUE(parse_edit("hips=-0.02").relative);
    const auto abs = parse_edit("height=1.8");
    EXPECT_FALSE(abs.relative);
    EXPECT_EQ(abs.value, 1.8);
    EXPECT_THROW(parse_edit("weight"), ValueError);
    EXPECT_THROW(parse_edit("weight=heavy"), ValueError);
}

TEST(MapJson, RoundTrip) {
    const auto model = body::make_test_model(0);
    const auto map = fit_map(sample_corpus(model, 30, 1), 1e-4);
    const auto back = map_from_json(nlohmann::json::parse(to_json(map).dump()));
    EXPECT_EQ(back.attribute_names, map.attribute_names);
    EXPECT_EQ(back.A, map.A);
    EXPECT_EQ(back.beta0, map.beta0);
    EXPECT_EQ(back.attr_scale, map.attr_scale);
    EXPECT_EQ(back.measure.density, 985.0);
    auto broken = to_json(map);
    broken["attr_scale"][0] = 0.0;
    EXPECT_THROW(map_from_json(broken), InvariantError);
}

TEST(MapRanges, WidenCorpusSpan) {
    const auto model = body::make_test_model(0);
    const auto map = fit_map(sample_corpus(model, 30, 1), 1e-4);
    const auto [lo, hi] = map.range("weight");
    const double span = map.attr_max(1) - map.attr_min(1);
    EXPECT_NEAR(lo, map.attr_min(1) - 0.2 * span, 1e-12);
    EXPECT_NEAR(hi, map.attr_max(1) + 0.2 * span, 1e-12);
    const auto [mlo, mhi] = map.range("muscularity");
    EXPECT_EQ(mlo, -1.0);
    EXPECT_EQ(mhi, 1.0);
}

TEST(Samples, JsonLinesRoundTrip) {
    const auto model = body::make_test_model(0);
    const auto corpus = sample_corpus(model, 5, 9);
    const auto path = std::filesystem::temp_directory_path() / "reshape_samples.jsonl";
    write_samples(path, corpus);
    const auto back = read_samples(path);
    ASSERT_EQ(back.size(), corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        EXPECT_EQ(back[i].beta, corpus[i].beta);
        EXPECT_EQ(back[i].attributes, corpus[i].attributes);
    }
    std::ofstream(path, std::ios::app) << "{\"beta\": [1]}\n";
    EXPECT_THROW(read_samples(path), FormatError);
    std::filesystem::remove(path);
}
