#pragma once

#include <Eigen/Core>
#include <cmath>

namespace reshape::body {

/// Axis-angle vector (direction = axis, norm = angle in radians) to rotation matrix.
/// Below an angle of 1e-8 the second-order series I + K + K²/2 is used.
inline Eigen::Matrix3d rodrigues(const Eigen::Vector3d& axis_angle) {
    const double angle = axis_angle.norm();
    Eigen::Matrix3d k;
    k << 0.0, -axis_angle.z(), axis_angle.y(),
         axis_angle.z(), 0.0, -axis_angle.x(),
         -axis_angle.y(), axis_angle.x(), 0.0;
    if (angle < 1e-8) {
        return Eigen::Matrix3d::Identity() + k + 0.5 * k * k;
    }
    const Eigen::Matrix3d unit = k / angle;
    return Eigen::Matrix3d::Identity() + std::sin(angle) * unit +
           (1.0 - std::cos(angle)) * unit * unit;
}

}  // namespace reshape::body
