#pragma once

// Warping of the ED volume mesh onto a target boundary: every interior
// vertex is kept at a fixed convex combination of its edge neighbours.

#include <string>
#include <utility>
#include <vector>

#include "lvmesh/mesh.hpp"
#include "lvmesh/tetmesh.hpp"

namespace lvmesh {

struct InteriorWeights {
    std::vector<int> interior; // tet-mesh vertex ids, ascending
    // rows[r] = (neighbour vertex id, weight) for interior[r]
    std::vector<std::vector<std::pair<int, double>>> rows;
};

// Inverse edge-length weights over edge neighbours, normalized per row.
InteriorWeights compute_weights(const TetMesh &mesh);

// max_i |x_i - sum_j w_ij x_j| over interior vertices at the mesh's own
// positions (zero only if the weights reproduce the mesh).
double identity_residual(const TetMesh &mesh, const InteriorWeights &w);

struct WarpOptions {
    double tolerance = 1e-10; // relative residual
    int max_iterations = 10000;
    int dense_below = 3000; // direct dense solve when the iterative one fails on small systems
};

struct WarpResult {
    TetMesh mesh;
    QualityReport quality;
    std::string solver; // "bicgstab", "dense-lu" or "sparse-lu"
    int iterations = 0; // largest over the three coordinates
    double residual = 0.0; // max relative residual over the three coordinates
};

// Boundary vertices go exactly to `target` through boundary_map; interior
// vertices solve x_i - sum_{j interior} w_ij x_j = sum_{b boundary} w_ib x_b.
WarpResult warp(const TetMesh &mesh, const InteriorWeights &w, const SurfaceMesh &target,
                const WarpOptions &opts = {});

} // namespace lvmesh
