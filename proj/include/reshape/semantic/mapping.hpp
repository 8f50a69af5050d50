#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "reshape/semantic/measure.hpp"

namespace reshape::semantic {

/// One corpus entry: a shape and the attributes it exhibits.
struct Sample {
    Eigen::VectorXd beta;
    AttributeVector attributes;
};

/// β = beta0 + A · ((a − attr_mean) / attr_scale), with a ordered by attribute_names.
struct LinearAttributeMap {
    std::vector<std::string> attribute_names;
    Eigen::VectorXd attr_mean;
    Eigen::VectorXd attr_scale;
    Eigen::MatrixXd A;  // B×K
    Eigen::VectorXd beta0;
    MeasureConfig measure;
    // Corpus extent per attribute, used for slider ranges.
    Eigen::VectorXd attr_min;
    Eigen::VectorXd attr_max;
    double lambda = 0.0;
    double residual = 0.0;

    Eigen::Index num_attributes() const { return static_cast<Eigen::Index>(attribute_names.size()); }
    Eigen::Index num_betas() const { return A.rows(); }

    bool has(std::string_view name) const {
        return std::find(attribute_names.begin(), attribute_names.end(), name) != attribute_names.end();
    }

    Eigen::VectorXd vectorize(const AttributeVector& a) const {
        Eigen::VectorXd out(num_attributes());
        for (Eigen::Index k = 0; k < out.size(); ++k) out(k) = a[attribute_names[static_cast<std::size_t>(k)]];
        return out;
    }

    Eigen::VectorXd beta_for(const AttributeVector& a) const {
        const Eigen::VectorXd normalized = (vectorize(a) - attr_mean).cwiseQuotient(attr_scale);
        return beta0 + A * normalized;
    }

    /// Slider range of one attribute: corpus span widened by 20% on each side.
    std::pair<double, double> range(std::string_view name) const {
        const auto it = std::find(attribute_names.begin(), attribute_names.end(), name);
        if (it == attribute_names.end()) throw ValueError("unknown attribute '" + std::string(name) + "'");
        const auto k = static_cast<Eigen::Index>(it - attribute_names.begin());
        double lo = attr_min(k), hi = attr_max(k);
        double pad = 0.2 * (hi - lo);
        if (pad == 0.0) pad = name == "muscularity" ? 1.0 : std::max(0.2 * std::abs(lo), 1e-3);
        lo -= pad;
        hi += pad;
        if (name == "muscularity") {
            lo = std::max(lo, -1.0);
            hi = std::min(hi, 1.0);
        }
        return {lo, hi};
    }
};

inline std::vector<std::string> default_attribute_names() {
    return {AttributeVector::kNames.begin(), AttributeVector::kNames.end()};
}

/// Ridge least-squares fit of β as an affine function of normalized attributes.
/// The intercept is not penalized. With λ = 0 a rank-deficient design throws.
inline LinearAttributeMap fit_map(std::span<const Sample> samples, double lambda = 1e-4,
                                  std::vector<std::string> names = default_attribute_names(),
                                  const MeasureConfig& config = {}) {
    const auto k = static_cast<Eigen::Index>(names.size());
    const auto n = static_cast<Eigen::Index>(samples.size());
    if (!(lambda >= 0.0)) throw ValueError("ridge lambda must be >= 0");
    if (k == 0) throw ValueError("attribute map needs at least one attribute");
    for (const auto& name : names) {
        if (!AttributeVector::is_attribute(name)) throw ValueError("unknown attribute '" + name + "'");
    }
    if (n < k + 1) {
        throw ValueError("need at least " + std::to_string(k + 1) + " samples, got " + std::to_string(n));
    }
    const Eigen::Index b = samples[0].beta.size();

    LinearAttributeMap map;
    map.attribute_names = std::move(names);
    map.measure = config;
    map.lambda = lambda;

    Eigen::MatrixXd x(n, k), y(n, b);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& s = samples[static_cast<std::size_t>(i)];
        if (s.beta.size() != b) throw DimensionError("samples disagree on the number of shape coefficients");
        x.row(i) = map.vectorize(s.attributes).transpose();
        y.row(i) = s.beta.transpose();
    }
    map.attr_mean = x.colwise().mean().transpose();
    map.attr_min = x.colwise().minCoeff().transpose();
    map.attr_max = x.colwise().maxCoeff().transpose();
    const Eigen::MatrixXd centered = x.rowwise() - map.attr_mean.transpose();
    map.attr_scale = (centered.colwise().squaredNorm() / static_cast<double>(n)).cwiseSqrt().transpose();
    for (Eigen::Index j = 0; j < k; ++j) {
        if (!(map.attr_scale(j) > 0.0)) map.attr_scale(j) = 1.0;
    }
    const Eigen::MatrixXd xn = centered.array().rowwise() / map.attr_scale.transpose().array();
    const Eigen::VectorXd y_mean = y.colwise().mean().transpose();
    const Eigen::MatrixXd yc = y.rowwise() - y_mean.transpose();

    Eigen::MatrixXd gram = xn.transpose() * xn;
    if (lambda == 0.0) {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xn);
        qr.setThreshold(1e-10);
        if (qr.rank() < k) {
            throw NumericError("singular system: attribute design has rank " + std::to_string(qr.rank()) +
                               " < " + std::to_string(k) + "; use a ridge lambda > 0");
        }
        map.A = qr.solve(yc).transpose();
    } else {
        gram.diagonal().array() += lambda;
        map.A = gram.ldlt().solve(xn.transpose() * yc).transpose();
    }
    map.beta0 = y_mean;

    const Eigen::MatrixXd fitted = (xn * map.A.transpose()).rowwise() + map.beta0.transpose();
    map.residual = std::sqrt((fitted - y).squaredNorm() / static_cast<double>(n * b));
    return map;
}

/// A single slider change: absolute value, or offset when `relative`.
struct AttributeEdit {
    std::string name;
    double value = 0.0;
    bool relative = false;
};

/// Parses "weight=+10" (relative), "weight=-3" (relative) or "height=1.8" (absolute).
inline AttributeEdit parse_edit(std::string_view text) {
    const auto eq = text.find('=');
    if (eq == std::string_view::npos || eq == 0 || eq + 1 >= text.size()) {
        throw ValueError("edit '" + std::string(text) + "' must look like name=value or name=+delta");
    }
    AttributeEdit edit;
    edit.name = std::string(text.substr(0, eq));
    std::string value(text.substr(eq + 1));
    edit.relative = value.front() == '+' || value.front() == '-';
    std::size_t used = 0;
    try {
        edit.value = std::stod(value, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != value.size() || !std::isfinite(edit.value)) {
        throw ValueError("edit '" + std::string(text) + "' has a non-numeric value");
    }
    return edit;
}

/// Attributes the sliders show for β: geometric measurements with the map's settings.
inline AttributeVector slider_state(const LinearAttributeMap& map, const BodyModel& model,
                                    const ShapeParams& shape) {
    return measure(model, shape, map.measure);
}

/// Applies `edits` on top of `current` (the displayed slider state) and solves for β.
inline ShapeParams attributes_to_beta(const LinearAttributeMap& map, const AttributeVector& current,
                                      std::span<const AttributeEdit> edits) {
    AttributeVector target = current;
    for (const auto& e : edits) {
        if (!map.has(e.name)) throw ValueError("unknown attribute '" + e.name + "'");
        double& slot = target[e.name];
        slot = e.relative ? slot + e.value : e.value;
    }
    return {map.beta_for(target)};
}

inline ShapeParams attributes_to_beta(const LinearAttributeMap& map, const BodyModel& model,
                                      const ShapeParams& shape, std::span<const AttributeEdit> edits) {
    for (const auto& e : edits) {
        if (!map.has(e.name)) throw ValueError("unknown attribute '" + e.name + "'");
    }
    if (map.num_betas() != model.num_betas()) {
        throw DimensionError("attribute map has " + std::to_string(map.num_betas()) +
                             " shape coefficients, model has " + std::to_string(model.num_betas()));
    }
    return attributes_to_beta(map, slider_state(map, model, shape), edits);
}

// JSON -----------------------------------------------------------------------

inline nlohmann::json to_json(const AttributeVector& a) {
    nlohmann::json j;
    for (auto name : AttributeVector::kNames) j[std::string(name)] = a[name];
    return j;
}

inline AttributeVector attributes_from_json(const nlohmann::json& j) {
    AttributeVector a;
    for (auto it = j.begin(); it != j.end(); ++it) a[it.key()] = it.value().get<double>();
    return a;
}

namespace detail {
inline std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }
inline Eigen::VectorXd from_vec(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}
}  // namespace detail

inline nlohmann::json to_json(const LinearAttributeMap& m) {
    std::vector<double> a;
    for (Eigen::Index r = 0; r < m.A.rows(); ++r)
        for (Eigen::Index c = 0; c < m.A.cols(); ++c) a.push_back(m.A(r, c));
    return {
        {"format", "reshape-attribute-map"},
        {"version", 1},
        {"attribute_names", m.attribute_names},
        {"attr_mean", detail::to_vec(m.attr_mean)},
        {"attr_scale", detail::to_vec(m.attr_scale)},
        {"attr_min", detail::to_vec(m.attr_min)},
        {"attr_max", detail::to_vec(m.attr_max)},
        {"A", {{"rows", m.A.rows()}, {"cols", m.A.cols()}, {"data", a}}},
        {"beta0", detail::to_vec(m.beta0)},
        {"density", m.measure.density},
        {"fractions",
         {{"chest", m.measure.chest_fraction},
          {"waist", m.measure.waist_fraction},
          {"hips", m.measure.hips_fraction}}},
        {"lambda", m.lambda},
        {"residual", m.residual},
    };
}

inline LinearAttributeMap map_from_json(const nlohmann::json& j) {
    LinearAttributeMap m;
    try {
        if (j.at("format").get<std::string>() != "reshape-attribute-map") {
            throw FormatError("not an attribute map document");
        }
        m.attribute_names = j.at("attribute_names").get<std::vector<std::string>>();
        m.attr_mean = detail::from_vec(j.at("attr_mean").get<std::vector<double>>());
        m.attr_scale = detail::from_vec(j.at("attr_scale").get<std::vector<double>>());
        m.attr_min = detail::from_vec(j.at("attr_min").get<std::vector<double>>());
        m.attr_max = detail::from_vec(j.at("attr_max").get<std::vector<double>>());
        const auto rows = j.at("A").at("rows").get<Eigen::Index>();
        const auto cols = j.at("A").at("cols").get<Eigen::Index>();
        const auto data = j.at("A").at("data").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
            throw DimensionError("attribute map A has " + std::to_string(data.size()) + " entries, expected " +
                                 std::to_string(rows * cols));
        }
        m.A.resize(rows, cols);
        for (Eigen::Index i = 0; i < rows * cols; ++i) m.A(i / cols, i % cols) = data[static_cast<std::size_t>(i)];
        m.beta0 = detail::from_vec(j.at("beta0").get<std::vector<double>>());
        m.measure.density = j.at("density").get<double>();
        m.measure.chest_fraction = j.at("fractions").at("chest").get<double>();
        m.measure.waist_fraction = j.at("fractions").at("waist").get<double>();
        m.measure.hips_fraction = j.at("fractions").at("hips").get<double>();
        m.lambda = j.value("lambda", 0.0);
        m.residual = j.value("residual", 0.0);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed attribute map: ") + e.what());
    }
    const auto k = m.num_attributes();
    if (m.A.cols() != k || m.attr_mean.size() != k || m.attr_scale.size() != k || m.attr_min.size() != k ||
        m.attr_max.size() != k || m.beta0.size() != m.A.rows()) {
        throw DimensionError("attribute map arrays disagree with its attribute count");
    }
    for (const auto& name : m.attribute_names) {
        if (!AttributeVector::is_attribute(name)) throw FormatError("unknown attribute '" + name + "'");
    }
    if ((m.attr_scale.array() <= 0.0).any()) throw InvariantError("attr_scale entries must be > 0");
    return m;
}

/// Corpus files are JSON lines: `{"beta": [...], "attributes": {name: value}}`.
inline nlohmann::json to_json(const Sample& s) {
    return {{"beta", detail::to_vec(s.beta)}, {"attributes", to_json(s.attributes)}};
}

inline Sample sample_from_json(const nlohmann::json& j) {
    try {
        return {detail::from_vec(j.at("beta").get<std::vector<double>>()), attributes_from_json(j.at("attributes"))};
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed sample: ") + e.what());
    }
}

inline void write_samples(const std::filesystem::path& path, std::span<const Sample> samples) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    for (const auto& s : samples) out << to_json(s).dump() << '\n';
}

inline std::vector<Sample> read_samples(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("cannot open " + path.string());
    std::vector<Sample> out;
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(sample_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(path.string() + ":" + std::to_string(number) + ": " + e.what());
        } catch (const FormatError& e) {
            throw FormatError(path.string() + ":" + std::to_string(number) + ": " + e.what());
        }
    }
    return out;
}

/// Draws β uniformly in [−range, range]^B and measures each draw.
inline std::vector<Sample> sample_corpus(const BodyModel& model, std::size_t count, std::uint64_t seed,
                                         double range = 2.0, const MeasureConfig& config = {}) {
    std::mt19937_64 engine(seed);
    std::vector<Sample> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Eigen::VectorXd beta(model.num_betas());
        for (Eigen::Index k = 0; k < beta.size(); ++k) {
            beta(k) = range * (2.0 * static_cast<double>(engine() >> 11) * 0x1.0p-53 - 1.0);
        }
        out.push_back({beta, measure(model, {beta}, config)});
    }
    return out;
}

}  // namespace reshape::semantic
