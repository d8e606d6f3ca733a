#pragma once

// Tetrahedral meshing of a closed surface, element quality, and direct
// propagation of a volume mesh by a displacement field.

#include <cstdint>
#include <limits>
#include <vector>

#include "lvmesh/field.hpp"
#include "lvmesh/mesh.hpp"

namespace lvmesh {

struct TetMeshOptions {
    double max_volume = 9.0;     // mm^3
    double volume_tolerance = 1.5; // retained tets satisfy vol <= max_volume * tolerance
    // Lattice points closer than this fraction of the lattice spacing to the
    // surface are dropped.
    double surface_clearance = 0.4;
    int max_refinement_rounds = 12;
    std::uint64_t seed = 1;
};

struct TetMeshStats {
    int surface_vertices = 0;
    int steiner_points = 0;
    int refinement_points = 0;
    int peeled = 0;       // cells carved away from the Delaunay hull
    int outside_kept = 0; // cells with outside centroid kept to stay manifold
    int flat_flips = 0;   // zero-volume cells removed by local retriangulation
    int flat_kept = 0;    // zero-volume cells left over
};

// Delaunay tetrahedralization of the surface vertices plus interior Steiner
// points on a body-centred cubic lattice (spacing (6 * max_volume)^(1/3)).
// Cells whose centroid lies outside the surface are peeled off from the hull
// inwards, skipping any whose removal would make the boundary non-manifold
// or expose a Steiner point; inside cells above the volume tolerance are
// split by inserting their centroid. Surface vertex s becomes tet vertex s.
// The boundary is a closed manifold with the topology of a ball.
TetMesh tetrahedralize(const SurfaceMesh &surface, const TetMeshOptions &opts, TetMeshStats *stats = nullptr);
inline TetMesh tetrahedralize(const SurfaceMesh &surface, double max_volume) {
    TetMeshOptions o;
    o.max_volume = max_volume;
    return tetrahedralize(surface, o);
}

// Minimum corner value of det[e1,e2,e3] / (|e1||e2||e3|), scaled so the
// regular tet scores 1, clamped to [-1, 1]. Coincident vertices give 0 and
// set `degenerate`.
double scaled_jacobian(const Vec3 &a, const Vec3 &b, const Vec3 &c, const Vec3 &d, bool *degenerate = nullptr);

// Circumradius over shortest edge; +infinity for a degenerate tet.
double radius_edge(const Vec3 &a, const Vec3 &b, const Vec3 &c, const Vec3 &d);

struct QualityReport {
    std::vector<double> scaled_jacobian;
    std::vector<double> radius_edge;
    std::vector<double> volume;
    double min_sj = 0.0;
    double mean_sj = 0.0;
    double fraction_acceptable = 0.0; // scaled Jacobian >= 0.2
    int non_positive = 0;             // scaled Jacobian <= 0
    double max_volume = 0.0;
    double total_volume = 0.0;
    double max_radius_edge = 0.0;
    double mean_radius_edge = 0.0;
    bool valid = false; // no element with scaled Jacobian <= 0
};

QualityReport assess(const TetMesh &mesh);

struct TetMeshCheck {
    bool positive_volumes = false;
    bool boundary_watertight = false;
    bool boundary_map_bijective = false;
    bool ok() const { return positive_volumes && boundary_watertight && boundary_map_bijective; }
};

TetMeshCheck check_tetmesh(const TetMesh &mesh);

// Surface of the tet mesh expressed in surface-vertex ids (via boundary_map),
// so it can be compared with the source surface.
SurfaceMesh boundary_surface(const TetMesh &mesh);

struct PropagatedVolume {
    TetMesh mesh;
    QualityReport quality;
    int clamped_vertices = 0;
};

PropagatedVolume propagate_volume(const TetMesh &mesh, const DisplacementField &field, int frame_id = 0);

} // namespace lvmesh
