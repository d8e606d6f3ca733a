#pragma once

// Surface extraction from label masks, quadric-error decimation and
// displacement-driven propagation of surfaces.

#include <cstdint>
#include <string>

#include "lvmesh/field.hpp"
#include "lvmesh/mesh.hpp"
#include "lvmesh/volume.hpp"

namespace lvmesh {

enum class IsoPolicy {
    binary, // indicator of the label, isovalue 0.5
    box,    // indicator averaged over the 3x3x3 neighbourhood, isovalue 0.5
};

IsoPolicy parse_iso_policy(const std::string &s);
const char *to_string(IsoPolicy p);

// Cube polygonization with face ambiguities resolved by the asymptotic
// decider; adjacent cubes agree on every face so the result is closed. The
// volume is treated as zero outside its grid.
SurfaceMesh marching_cubes(const LabelVolume &labels, std::uint8_t label, IsoPolicy policy = IsoPolicy::box);

// Generic form on a scalar image; inside means value > iso.
SurfaceMesh marching_cubes(const ImageVolume &scalar, double iso);

struct DecimateOptions {
    int target_vertices = 2500;
    // Reject collapses that turn a face normal by more than this (cosine).
    double min_normal_cos = 0.2;
    // Reject collapses producing triangles with 4*sqrt(3)*area / sum(edge^2)
    // below this.
    double min_triangle_quality = 0.05;
};

SurfaceMesh decimate(const SurfaceMesh &mesh, const DecimateOptions &opts);
inline SurfaceMesh decimate(const SurfaceMesh &mesh, int target_vertices) {
    DecimateOptions o;
    o.target_vertices = target_vertices;
    return decimate(mesh, o);
}

struct PropagatedSurface {
    SurfaceMesh mesh;
    int clamped_vertices = 0; // vertices outside the field grid
};

// v' = v + u(v), trilinear; connectivity unchanged.
PropagatedSurface propagate_surface(const SurfaceMesh &mesh, const DisplacementField &field, int frame_id = 0);

} // namespace lvmesh
