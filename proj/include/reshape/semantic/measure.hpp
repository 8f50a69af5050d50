#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "reshape/body/model.hpp"
#include "reshape/error.hpp"

namespace reshape::semantic {

using body::BodyModel;
using body::Mesh;
using body::ShapeParams;

/// The horizontal plane misses the mesh.
class NoIntersectionError : public Error {
public:
    using Error::Error;
};

/// Human-facing body attributes. Lengths in meters, weight in kilograms,
/// muscularity a dimensionless score in [−1, 1].
struct AttributeVector {
    double height = 0.0;
    double weight = 0.0;
    double chest = 0.0;
    double waist = 0.0;
    double hips = 0.0;
    double muscularity = 0.0;

    static constexpr std::array<std::string_view, 6> kNames{"height", "weight", "chest",
                                                             "waist", "hips", "muscularity"};

    static bool is_attribute(std::string_view name) {
        return std::find(kNames.begin(), kNames.end(), name) != kNames.end();
    }

    double& operator[](std::string_view name) {
        if (name == "height") return height;
        if (name == "weight") return weight;
        if (name == "chest") return chest;
        if (name == "waist") return waist;
        if (name == "hips") return hips;
        if (name == "muscularity") return muscularity;
        throw ValueError("unknown attribute '" + std::string(name) + "'");
    }
    double operator[](std::string_view name) const {
        return const_cast<AttributeVector&>(*this)[name];
    }

    bool operator==(const AttributeVector&) const = default;
};

/// Knobs of the geometric measurements. Fractions are of the vertical extent,
/// measured from the lowest vertex.
struct MeasureConfig {
    double density = 985.0;  // kg/m³
    double chest_fraction = 0.72;
    double waist_fraction = 0.62;
    double hips_fraction = 0.52;
};

/// Signed volume by tetrahedra against the origin; positive for outward-facing closed meshes.
inline double signed_volume(const Mesh& mesh) {
    double six_v = 0.0;
    for (Eigen::Index f = 0; f < mesh.faces.rows(); ++f) {
        const Eigen::Vector3d a = mesh.vertices.row(mesh.faces(f, 0)).transpose();
        const Eigen::Vector3d b = mesh.vertices.row(mesh.faces(f, 1)).transpose();
        const Eigen::Vector3d c = mesh.vertices.row(mesh.faces(f, 2)).transpose();
        six_v += a.dot(b.cross(c));
    }
    return six_v / 6.0;
}

/// Enclosed volume in m³. Throws NumericError when the signed volume is not
/// clearly positive (inverted or open mesh).
inline double mesh_volume(const Mesh& mesh) {
    const double v = signed_volume(mesh);
    if (!(v > 1e-12)) {
        throw NumericError("mesh volume " + std::to_string(v) +
                           " m^3 is not positive; mesh is inverted or not closed");
    }
    return v;
}

/// Perimeter of the convex hull of 2D points (Andrew's monotone chain).
inline double convex_hull_perimeter(std::vector<Eigen::Vector2d> pts) {
    std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
        return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
    });
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    if (pts.size() < 2) return 0.0;
    auto cross = [](const Eigen::Vector2d& o, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
        return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
    };
    std::vector<Eigen::Vector2d> hull(2 * pts.size());
    std::size_t k = 0;
    for (const auto& p : pts) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
        hull[k++] = p;
    }
    for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
        while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
        hull[k++] = pts[i];
    }
    hull.resize(k - 1);
    double perimeter = 0.0;
    for (std::size_t i = 0; i < hull.size(); ++i) {
        perimeter += (hull[(i + 1) % hull.size()] - hull[i]).norm();
    }
    return perimeter;
}

/// Vertical (y) extent of a mesh as (min, max).
inline std::pair<double, double> vertical_range(const Mesh& mesh) {
    if (mesh.vertices.rows() == 0) throw ValueError("empty mesh has no vertical extent");
    return {mesh.vertices.col(1).minCoeff(), mesh.vertices.col(1).maxCoeff()};
}

/// Girth at a height fraction: perimeter of the convex hull of the mesh's
/// intersection with the horizontal plane y = y_min + fraction · extent.
inline double circumference(const Mesh& mesh, double height_fraction) {
    const auto [lo, hi] = vertical_range(mesh);
    if (!(hi > lo)) throw ValueError("mesh has no positive vertical extent");
    const double plane = lo + height_fraction * (hi - lo);

    std::vector<Eigen::Vector2d> pts;
    auto point = [&](Eigen::Index v) {
        return Eigen::Vector2d(mesh.vertices(v, 0), mesh.vertices(v, 2));
    };
    for (Eigen::Index f = 0; f < mesh.faces.rows(); ++f) {
        for (int e = 0; e < 3; ++e) {
            const Eigen::Index a = mesh.faces(f, e);
            const Eigen::Index b = mesh.faces(f, (e + 1) % 3);
            const double da = mesh.vertices(a, 1) - plane;
            const double db = mesh.vertices(b, 1) - plane;
            if (da == 0.0) pts.push_back(point(a));
            if ((da < 0.0 && db > 0.0) || (da > 0.0 && db < 0.0)) {
                const double t = da / (da - db);
                pts.push_back(point(a) + t * (point(b) - point(a)));
            }
        }
    }
    if (pts.empty()) {
        throw NoIntersectionError("plane at height fraction " + std::to_string(height_fraction) +
                                  " does not intersect the mesh");
    }
    return convex_hull_perimeter(std::move(pts));
}

/// Measures a T-posed body (θ = 0). Muscularity has no geometric observable and is 0.
inline AttributeVector measure_mesh(const Mesh& mesh, const MeasureConfig& config = {}) {
    AttributeVector a;
    const auto [lo, hi] = vertical_range(mesh);
    a.height = hi - lo;
    a.weight = mesh_volume(mesh) * config.density;
    a.chest = circumference(mesh, config.chest_fraction);
    a.waist = circumference(mesh, config.waist_fraction);
    a.hips = circumference(mesh, config.hips_fraction);
    return a;
}

inline AttributeVector measure(const BodyModel& model, const ShapeParams& shape,
                               const MeasureConfig& config = {}) {
    return measure_mesh(model.mesh_with(body::shaped_template(model, shape)), config);
}

}  // namespace reshape::semantic
