#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "reshape/body/model.hpp"
#include "reshape/body/rotation.hpp"
#include "reshape/error.hpp"

namespace reshape::render {

using body::Points;

enum class Projection { pinhole, weak_perspective };

/// Image-formation model. Camera frame: x right, y down, z forward (meters);
/// pixel (0, 0) is the top-left corner of the top-left pixel.
///
/// `rotation` (axis-angle) and `position` map model coordinates to the camera
/// frame: p_cam = R · p + position. Both default to identity.
struct Camera {
    Projection mode = Projection::pinhole;
    double focal = 1000.0;                         // pixels, pinhole
    Eigen::Vector2d principal{384.0, 512.0};       // pixels, pinhole
    double scale = 0.0;                            // pixels per meter, weak perspective
    Eigen::Vector2d translation{0.0, 0.0};         // pixels, weak perspective
    double depth_offset = 0.0;                     // meters added to z, weak perspective
    int width = 768;
    int height = 1024;
    Eigen::Vector3d rotation = Eigen::Vector3d::Zero();
    Eigen::Vector3d position = Eigen::Vector3d::Zero();

    static Camera pinhole(double focal, Eigen::Vector2d principal, int width, int height) {
        Camera c;
        c.mode = Projection::pinhole;
        c.focal = focal;
        c.principal = principal;
        c.width = width;
        c.height = height;
        return c;
    }

    static Camera weak_perspective(double scale, Eigen::Vector2d translation, int width, int height,
                                   double depth_offset = 0.0) {
        Camera c;
        c.mode = Projection::weak_perspective;
        c.scale = scale;
        c.translation = translation;
        c.width = width;
        c.height = height;
        c.depth_offset = depth_offset;
        return c;
    }

    /// Pinhole camera facing a y-up model from its +z side, `distance` meters
    /// away, with the optical axis at model height `center_y`.
    static Camera frontal(double center_y, double distance, double focal = 1000.0, int width = 768,
                          int height = 1024) {
        Camera c = pinhole(focal, {width / 2.0, height / 2.0}, width, height);
        c.rotation = {std::numbers::pi, 0.0, 0.0};
        c.position = {0.0, center_y, distance};
        return c;
    }

    void validate() const {
        if (width <= 0 || height <= 0) throw ValueError("camera image size must be positive");
        if (mode == Projection::pinhole && !(focal > 0.0)) throw ValueError("pinhole focal must be > 0");
        if (mode == Projection::weak_perspective && !(scale > 0.0)) {
            throw ValueError("weak-perspective scale must be > 0");
        }
    }

    Points to_camera_frame(const Points& model_points) const {
        const Eigen::Matrix3d r = body::rodrigues(rotation);
        Points out = model_points * r.transpose();
        out.rowwise() += position.transpose();
        return out;
    }
};

struct ProjectedVertex {
    double x = 0.0;
    double y = 0.0;
    double depth = 0.0;
    bool in_front = true;  // false for pinhole points with z ≤ 0
};

inline ProjectedVertex project_point(const Camera& cam, const Eigen::Vector3d& p) {
    if (cam.mode == Projection::pinhole) {
        if (!(p.z() > 0.0)) return {0.0, 0.0, p.z(), false};
        return {cam.focal * p.x() / p.z() + cam.principal.x(), cam.focal * p.y() / p.z() + cam.principal.y(),
                p.z(), true};
    }
    return {cam.scale * p.x() + cam.translation.x(), cam.scale * p.y() + cam.translation.y(),
            p.z() + cam.depth_offset, true};
}

/// Projects model-space vertices to (pixel x, pixel y, view depth).
inline std::vector<ProjectedVertex> project(const Camera& cam, const Points& vertices) {
    cam.validate();
    const Points cam_pts = cam.to_camera_frame(vertices);
    std::vector<ProjectedVertex> out;
    out.reserve(static_cast<std::size_t>(cam_pts.rows()));
    for (Eigen::Index i = 0; i < cam_pts.rows(); ++i) out.push_back(project_point(cam, cam_pts.row(i).transpose()));
    return out;
}

inline nlohmann::json to_json(const Camera& c) {
    nlohmann::json j;
    j["image_size"] = {c.width, c.height};
    if (c.mode == Projection::pinhole) {
        j["mode"] = "pinhole";
        j["focal"] = c.focal;
        j["principal"] = {c.principal.x(), c.principal.y()};
    } else {
        j["mode"] = "weak_perspective";
        j["scale"] = c.scale;
        j["translation"] = {c.translation.x(), c.translation.y()};
        j["depth_offset"] = c.depth_offset;
    }
    j["extrinsic"] = {{"rotation", {c.rotation.x(), c.rotation.y(), c.rotation.z()}},
                      {"translation", {c.position.x(), c.position.y(), c.position.z()}}};
    return j;
}

inline Camera camera_from_json(const nlohmann::json& j) {
    Camera c;
    try {
        const auto mode = j.at("mode").get<std::string>();
        const auto size = j.at("image_size").get<std::vector<int>>();
        if (size.size() != 2) throw FormatError("camera image_size must be [W, H]");
        c.width = size[0];
        c.height = size[1];
        auto vec2 = [](const nlohmann::json& v) {
            const auto a = v.get<std::vector<double>>();
            if (a.size() != 2) throw FormatError("expected a 2-vector");
            return Eigen::Vector2d(a[0], a[1]);
        };
        auto vec3 = [](const nlohmann::json& v) {
            const auto a = v.get<std::vector<double>>();
            if (a.size() != 3) throw FormatError("expected a 3-vector");
            return Eigen::Vector3d(a[0], a[1], a[2]);
        };
        if (mode == "pinhole") {
            c.mode = Projection::pinhole;
            c.focal = j.at("focal").get<double>();
            c.principal = vec2(j.at("principal"));
        } else if (mode == "weak_perspective") {
            c.mode = Projection::weak_perspective;
            c.scale = j.at("scale").get<double>();
            c.translation = vec2(j.at("translation"));
            c.depth_offset = j.value("depth_offset", 0.0);
        } else {
            throw FormatError("unknown camera mode '" + mode + "'");
        }
        if (j.contains("extrinsic")) {
            c.rotation = vec3(j["extrinsic"].at("rotation"));
            c.position = vec3(j["extrinsic"].at("translation"));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed camera: ") + e.what());
    }
    c.validate();
    return c;
}

}  // namespace reshape::render
