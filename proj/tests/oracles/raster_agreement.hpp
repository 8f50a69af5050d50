#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "oracles/raycast.hpp"
#include "reshape/render/raster.hpp"

namespace oracle {

inline reshape::body::Mesh triangles(const std::vector<std::array<Eigen::Vector3d, 3>>& tris) {
    reshape::body::Mesh m;
    m.vertices.resize(static_cast<Eigen::Index>(3 * tris.size()), 3);
    m.faces.resize(static_cast<Eigen::Index>(tris.size()), 3);
    for (std::size_t t = 0; t < tris.size(); ++t) {
        for (int c = 0; c < 3; ++c) {
            const auto row = static_cast<Eigen::Index>(3 * t + static_cast<std::size_t>(c));
            m.vertices.row(row) = tris[t][static_cast<std::size_t>(c)].transpose();
            m.faces(static_cast<Eigen::Index>(t), c) = static_cast<int>(row);
        }
    }
    return m;
}

// Random triangle soup in front of the camera, sized to a few tens of pixels.
inline reshape::body::Mesh random_soup(std::mt19937_64& rng, int count, double z_lo, double z_hi, double half_extent) {
    std::uniform_real_distribution<double> xy(-half_extent, half_extent);
    std::uniform_real_distribution<double> z(z_lo, z_hi);
    std::uniform_real_distribution<double> jitter(-0.4 * half_extent, 0.4 * half_extent);
    std::vector<std::array<Eigen::Vector3d, 3>> tris;
    for (int i = 0; i < count; ++i) {
        const Eigen::Vector3d c(xy(rng), xy(rng), z(rng));
        std::array<Eigen::Vector3d, 3> t;
        for (auto& v : t) v = c + Eigen::Vector3d(jitter(rng), jitter(rng), 0.2 * jitter(rng));
        tris.push_back(t);
    }
    return triangles(tris);
}

inline std::vector<Eigen::Vector2d> screen_vertices(const reshape::body::Mesh& m, const reshape::render::Camera& cam) {
    std::vector<Eigen::Vector2d> out;
    for (const auto& p : reshape::render::project(cam, m.vertices)) out.emplace_back(p.x, p.y);
    return out;
}

struct Agreement {
    std::size_t agree = 0;
    std::size_t total = 0;
    double worst_edge_distance = 0.0;  // of disagreeing pixels
};

inline Agreement compare_with_raycast(const reshape::body::Mesh& m, const reshape::render::Camera& cam) {
    const reshape::render::DepthMap d = reshape::render::rasterize_depth(m, cam);
    const auto ref = oracle::raycast(m, cam);
    const auto sv = screen_vertices(m, cam);
    Agreement a;
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            const double got = d.at(x, y);
            const double want = ref.depth[static_cast<std::size_t>(y * cam.width + x)];
            ++a.total;
            const bool same = std::isfinite(got) == std::isfinite(want) &&
                              (!std::isfinite(got) || std::abs(got - want) <= 1e-9 * want);
            if (same) {
                ++a.agree;
                continue;
            }
            double nearest = std::numeric_limits<double>::infinity();
            for (Eigen::Index f = 0; f < m.faces.rows(); ++f) {
                for (int e = 0; e < 3; ++e) {
                    const auto& p = sv[static_cast<std::size_t>(m.faces(f, e))];
                    const auto& q = sv[static_cast<std::size_t>(m.faces(f, (e + 1) % 3))];
                    nearest = std::min(nearest, oracle::segment_distance(x + 0.5, y + 0.5, p.x(), p.y(), q.x(), q.y()));
                }
            }
            a.worst_edge_distance = std::max(a.worst_edge_distance, nearest);
        }
    }
    return a;
}

}  // namespace oracle
