#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "reshape/body/rotation.hpp"
#include "reshape/error.hpp"

namespace reshape::body {

/// N×3 real array, one row per point. Units are meters throughout.
using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Faces = Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor>;

struct Mesh {
    Points vertices;
    Faces faces;
};

/// Shape coefficients (β), one per shape direction of the owning model.
struct ShapeParams {
    Eigen::VectorXd beta;

    static ShapeParams zero(Eigen::Index num_betas) { return {Eigen::VectorXd::Zero(num_betas)}; }
};

/// Per-joint axis-angle rotations (θ), J×3, radians.
struct PoseParams {
    Points theta;

    static PoseParams zero(Eigen::Index num_joints) { return {Points::Zero(num_joints, 3)}; }

    /// Builds from the flattened joint-major layout (length 3·J, e.g. 72 for the standard model).
    static PoseParams from_flat(std::span<const double> flat) {
        if (flat.size() % 3 != 0) {
            throw DimensionError("pose vector length " + std::to_string(flat.size()) +
                                 " is not a multiple of 3");
        }
        PoseParams pose{Points(static_cast<Eigen::Index>(flat.size() / 3), 3)};
        for (std::size_t i = 0; i < flat.size(); ++i) {
            pose.theta(static_cast<Eigen::Index>(i / 3), static_cast<Eigen::Index>(i % 3)) = flat[i];
        }
        return pose;
    }

    std::vector<double> flat() const {
        std::vector<double> out;
        out.reserve(static_cast<std::size_t>(theta.size()));
        for (Eigen::Index j = 0; j < theta.rows(); ++j) {
            for (int c = 0; c < 3; ++c) out.push_back(theta(j, c));
        }
        return out;
    }
};

/// SMPL-compatible body model.
///
/// Blendshape bases are stored with one row per vertex coordinate: row 3·v + c
/// holds the displacement of coordinate c of vertex v.
struct BodyModel {
    Points template_vertices;            // V×3
    Faces faces;                         // F×3
    Eigen::MatrixXd shape_dirs;          // 3V×B
    Eigen::MatrixXd pose_dirs;           // 3V×9(J−1)
    Eigen::MatrixXd joint_regressor;     // J×V
    Eigen::MatrixXd skin_weights;        // V×J
    std::vector<int> parents;            // root has parent −1

    Eigen::Index num_vertices() const { return template_vertices.rows(); }
    Eigen::Index num_faces() const { return faces.rows(); }
    Eigen::Index num_joints() const { return static_cast<Eigen::Index>(parents.size()); }
    Eigen::Index num_betas() const { return shape_dirs.cols(); }

    Mesh mesh_with(Points vertices) const { return {std::move(vertices), faces}; }
};

inline constexpr double kRowSumTolerance = 1e-6;

/// Returns the joints in an order where every parent precedes its children.
/// Throws InvariantError unless `parents` is a single-rooted tree.
inline std::vector<int> kinematic_order(const std::vector<int>& parents) {
    const int n = static_cast<int>(parents.size());
    if (n == 0) throw InvariantError("kinematic tree has no joints");
    std::vector<std::vector<int>> children(static_cast<std::size_t>(n));
    int root = -1;
    for (int j = 0; j < n; ++j) {
        const int p = parents[static_cast<std::size_t>(j)];
        if (p < 0) {
            if (root >= 0) {
                throw InvariantError("kinematic tree has two roots: joints " + std::to_string(root) +
                                     " and " + std::to_string(j));
            }
            root = j;
        } else if (p >= n || p == j) {
            throw InvariantError("joint " + std::to_string(j) + " has invalid parent " +
                                 std::to_string(p));
        } else {
            children[static_cast<std::size_t>(p)].push_back(j);
        }
    }
    if (root < 0) throw InvariantError("kinematic tree has no root");
    std::vector<int> order{root};
    for (std::size_t i = 0; i < order.size(); ++i) {
        for (int c : children[static_cast<std::size_t>(order[i])]) order.push_back(c);
    }
    if (static_cast<int>(order.size()) != n) {
        throw InvariantError("kinematic tree contains a cycle not reachable from root joint " +
                             std::to_string(root));
    }
    return order;
}

/// Lists every violated BodyModel invariant; empty when the model is valid.
inline std::vector<std::string> invariant_violations(const BodyModel& m) {
    std::vector<std::string> out;
    const Eigen::Index v = m.num_vertices();
    const Eigen::Index j = m.num_joints();
    auto shape = [](Eigen::Index r, Eigen::Index c) {
        return std::to_string(r) + "x" + std::to_string(c);
    };
    if (m.template_vertices.cols() != 3) out.push_back("template_vertices must have 3 columns");
    if (m.shape_dirs.rows() != 3 * v) {
        out.push_back("shape_dirs is " + shape(m.shape_dirs.rows(), m.shape_dirs.cols()) +
                      ", expected " + std::to_string(3 * v) + " rows");
    }
    if (m.pose_dirs.rows() != 3 * v || m.pose_dirs.cols() != 9 * (j - 1)) {
        out.push_back("pose_dirs is " + shape(m.pose_dirs.rows(), m.pose_dirs.cols()) +
                      ", expected " + shape(3 * v, 9 * (j - 1)));
    }
    if (m.joint_regressor.rows() != j || m.joint_regressor.cols() != v) {
        out.push_back("joint_regressor is " + shape(m.joint_regressor.rows(), m.joint_regressor.cols()) +
                      ", expected " + shape(j, v));
    }
    if (m.skin_weights.rows() != v || m.skin_weights.cols() != j) {
        out.push_back("skin_weights is " + shape(m.skin_weights.rows(), m.skin_weights.cols()) +
                      ", expected " + shape(v, j));
    }
    if (!out.empty()) return out;

    for (Eigen::Index r = 0; r < v; ++r) {
        const auto row = m.skin_weights.row(r);
        if ((row.array() < 0.0).any()) {
            out.push_back("skin_weights row " + std::to_string(r) + " has a negative weight");
        }
        const double sum = row.sum();
        if (!(std::abs(sum - 1.0) <= kRowSumTolerance)) {
            std::ostringstream msg;
            msg << "skin_weights row " << r << " sums to " << sum;
            out.push_back(msg.str());
        }
    }
    for (Eigen::Index r = 0; r < j; ++r) {
        const double sum = m.joint_regressor.row(r).sum();
        if (!(std::abs(sum - 1.0) <= kRowSumTolerance)) {
            std::ostringstream msg;
            msg << "joint_regressor row " << r << " sums to " << sum;
            out.push_back(msg.str());
        }
    }
    for (Eigen::Index f = 0; f < m.num_faces(); ++f) {
        for (int c = 0; c < 3; ++c) {
            const int idx = m.faces(f, c);
            if (idx < 0 || idx >= v) {
                out.push_back("face " + std::to_string(f) + " references vertex " +
                              std::to_string(idx) + " outside [0, " + std::to_string(v) + ")");
            }
        }
    }
    try {
        kinematic_order(m.parents);
    } catch (const InvariantError& e) {
        out.emplace_back(e.what());
    }
    return out;
}

inline void validate(const BodyModel& m) {
    const auto issues = invariant_violations(m);
    if (!issues.empty()) throw InvariantError(issues.front());
}

namespace detail {

inline void require_betas(const BodyModel& m, const ShapeParams& shape) {
    if (shape.beta.size() != m.num_betas()) {
        throw DimensionError("shape has " + std::to_string(shape.beta.size()) +
                             " coefficients, model expects " + std::to_string(m.num_betas()));
    }
}

inline void require_pose(const BodyModel& m, const PoseParams& pose) {
    if (pose.theta.rows() != m.num_joints()) {
        throw DimensionError("pose has " + std::to_string(pose.theta.rows()) +
                             " joints, model expects " + std::to_string(m.num_joints()));
    }
}

inline Points unflatten(const Eigen::VectorXd& flat) {
    return Eigen::Map<const Points>(flat.data(), flat.size() / 3, 3);
}

}  // namespace detail

/// Template plus shape blendshapes: T + Σ_k β_k · shape_dirs[:, k].
inline Points shaped_template(const BodyModel& m, const ShapeParams& shape) {
    detail::require_betas(m, shape);
    const Eigen::VectorXd offsets = m.shape_dirs * shape.beta;
    return m.template_vertices + detail::unflatten(offsets);
}

/// Joint locations J×3 = joint_regressor · vertices.
inline Points regress_joints(const BodyModel& m, const Points& vertices) {
    if (vertices.rows() != m.num_vertices()) {
        throw DimensionError("got " + std::to_string(vertices.rows()) + " vertices, model has " +
                             std::to_string(m.num_vertices()));
    }
    return m.joint_regressor * vertices;
}

/// Pose feature vector: concatenation of vec(R(θ_j) − I) for the non-root joints, row-major.
inline Eigen::VectorXd pose_feature(const BodyModel& m, const PoseParams& pose) {
    detail::require_pose(m, pose);
    const Eigen::Index j = m.num_joints();
    Eigen::VectorXd feature(9 * (j - 1));
    Eigen::Index col = 0;
    for (Eigen::Index joint = 0; joint < j; ++joint) {
        if (m.parents[static_cast<std::size_t>(joint)] < 0) continue;
        const Eigen::Matrix3d r =
            rodrigues(pose.theta.row(joint).transpose()) - Eigen::Matrix3d::Identity();
        for (int a = 0; a < 3; ++a) {
            for (int b = 0; b < 3; ++b) feature(col++) = r(a, b);
        }
    }
    return feature;
}

/// Pose-corrective offsets V×3, zero at the rest pose.
inline Points pose_blend_offsets(const BodyModel& m, const PoseParams& pose) {
    return detail::unflatten(m.pose_dirs * pose_feature(m, pose));
}

/// Global rigid transforms of each joint with the rest-pose joint location removed,
/// so that applying transform j to a rest-pose point moves it with bone j.
inline std::vector<Eigen::Isometry3d> skinning_transforms(const BodyModel& m, const Points& joints,
                                                          const PoseParams& pose) {
    const auto order = kinematic_order(m.parents);
    const auto n = static_cast<std::size_t>(m.num_joints());
    std::vector<Eigen::Isometry3d> global(n, Eigen::Isometry3d::Identity());
    for (int j : order) {
        const auto uj = static_cast<std::size_t>(j);
        Eigen::Isometry3d local = Eigen::Isometry3d::Identity();
        local.linear() = rodrigues(pose.theta.row(j).transpose());
        const int p = m.parents[uj];
        if (p < 0) {
            local.translation() = joints.row(j).transpose();
            global[uj] = local;
        } else {
            local.translation() = (joints.row(j) - joints.row(p)).transpose();
            global[uj] = global[static_cast<std::size_t>(p)] * local;
        }
    }
    for (std::size_t j = 0; j < n; ++j) {
        const Eigen::Vector3d rest = joints.row(static_cast<Eigen::Index>(j)).transpose();
        global[j].translation() -= global[j].linear() * rest;
    }
    return global;
}

/// Full linear blend skinning of (β, θ).
inline Mesh skin(const BodyModel& m, const ShapeParams& shape, const PoseParams& pose) {
    detail::require_betas(m, shape);
    detail::require_pose(m, pose);
    if (!shape.beta.allFinite() || !pose.theta.allFinite()) {
        throw ValueError("shape or pose parameters contain non-finite values");
    }
    const Points shaped = shaped_template(m, shape);
    const Points joints = regress_joints(m, shaped);
    const Points posed = shaped + pose_blend_offsets(m, pose);
    const auto transforms = skinning_transforms(m, joints, pose);

    Points out(posed.rows(), 3);
    for (Eigen::Index v = 0; v < posed.rows(); ++v) {
        Eigen::Matrix3d linear = Eigen::Matrix3d::Zero();
        Eigen::Vector3d translation = Eigen::Vector3d::Zero();
        for (Eigen::Index j = 0; j < m.num_joints(); ++j) {
            const double w = m.skin_weights(v, j);
            if (w == 0.0) continue;
            const auto& t = transforms[static_cast<std::size_t>(j)];
            linear += w * t.linear();
            translation += w * t.translation();
        }
        out.row(v) = (linear * posed.row(v).transpose() + translation).transpose();
    }
    return m.mesh_with(std::move(out));
}

}  // namespace reshape::body
