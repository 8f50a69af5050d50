#pragma once

// Dense voxel counting: a voxel centre is inside when a +y ray from below
// crosses the surface an odd number of times before reaching it. Counting is
// done per (x, z) column, one ray per column.

#include <algorithm>
#include <cmath>
#include <vector>

#include "reshape/body/model.hpp"

namespace oracle {

inline double voxel_volume(const reshape::body::Mesh& mesh, double voxel) {
    const auto& v = mesh.vertices;
    const double x0 = v.col(0).minCoeff(), x1 = v.col(0).maxCoeff();
    const double y0 = v.col(1).minCoeff();
    const double z0 = v.col(2).minCoeff(), z1 = v.col(2).maxCoeff();
    const long nx = static_cast<long>(std::ceil((x1 - x0) / voxel));
    const long nz = static_cast<long>(std::ceil((z1 - z0) / voxel));
    long inside = 0;
    std::vector<double> hits;
    for (long ix = 0; ix < nx; ++ix) {
        // Offset the sample column slightly so it never passes through a mesh edge.
        const double x = x0 + (ix + 0.5) * voxel + 1.234e-7;
        for (long iz = 0; iz < nz; ++iz) {
            const double z = z0 + (iz + 0.5) * voxel + 2.345e-7;
            hits.clear();
            for (Eigen::Index f = 0; f < mesh.faces.rows(); ++f) {
                const auto a = v.row(mesh.faces(f, 0)), b = v.row(mesh.faces(f, 1)), c = v.row(mesh.faces(f, 2));
                const double d = (b(0) - a(0)) * (c(2) - a(2)) - (c(0) - a(0)) * (b(2) - a(2));
                if (d == 0.0) continue;
                const double s = ((x - a(0)) * (c(2) - a(2)) - (c(0) - a(0)) * (z - a(2))) / d;
                const double t = ((b(0) - a(0)) * (z - a(2)) - (x - a(0)) * (b(2) - a(2))) / d;
                if (s < 0.0 || t < 0.0 || s + t > 1.0) continue;
                hits.push_back(a(1) + s * (b(1) - a(1)) + t * (c(1) - a(1)));
            }
            std::sort(hits.begin(), hits.end());
            for (std::size_t h = 0; h + 1 < hits.size(); h += 2) {
                // Voxel centres y0 + (k + 0.5)·voxel inside [hits[h], hits[h+1]].
                const double lo = std::ceil((hits[h] - y0) / voxel - 0.5);
                const double hi = std::floor((hits[h + 1] - y0) / voxel - 0.5);
                if (hi >= lo) inside += static_cast<long>(hi - lo + 1);
            }
        }
    }
    return static_cast<double>(inside) * voxel * voxel * voxel;
}

}  // namespace oracle
