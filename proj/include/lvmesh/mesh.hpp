#pragma once

// Triangle and tetrahedral meshes shared by the meshing, warping and metric
// modules.

#include <array>
#include <vector>

#include "lvmesh/common.hpp"

namespace lvmesh {

using Tri = std::array<int, 3>;
using Tet = std::array<int, 4>;

struct SurfaceMesh {
    std::vector<Vec3> vertices; // mm
    std::vector<Tri> triangles;
    int frame_id = 0;
};

struct TetMesh {
    std::vector<Vec3> vertices; // mm
    std::vector<Tet> tets;      // positive signed volume
    // boundary_map[s] = tet-mesh vertex carrying surface vertex s.
    std::vector<int> boundary_map;
    int frame_id = 0;
};

double triangle_area(const Vec3 &a, const Vec3 &b, const Vec3 &c);
double surface_area(const SurfaceMesh &m);
// Divergence-theorem volume; positive for an outward-oriented closed surface.
double enclosed_volume(const SurfaceMesh &m);

// Signed volume of (a,b,c,d): positive when d sits on the side of (a,b,c)
// that the right-handed normal points away from, i.e. det[b-a, c-a, d-a] / 6.
double tet_volume(const Vec3 &a, const Vec3 &b, const Vec3 &c, const Vec3 &d);
double tet_volume(const TetMesh &m, std::size_t t);

struct SurfaceCheck {
    bool watertight = false;        // every undirected edge used by exactly two triangles
    bool consistently_oriented = false; // each directed edge appears once, with its reverse
    bool vertex_manifold = false;   // the triangles around each used vertex form one fan
    double min_area = 0.0;
    double signed_volume = 0.0;
    int euler = 0; // V - E + F over referenced vertices
    int components = 0;
    int genus = 0; // per component sum, valid when closed and orientable
    int unused_vertices = 0;

    bool valid() const {
        return watertight && consistently_oriented && vertex_manifold && min_area > 1e-9 && signed_volume > 0.0;
    }
};

SurfaceCheck check_surface(const SurfaceMesh &m);

// Faces used by exactly one tet, oriented outward, over tet-mesh vertex ids.
std::vector<Tri> boundary_faces(const TetMesh &m);

// Sorted unique undirected edges (a < b).
std::vector<std::array<int, 2>> tet_edges(const TetMesh &m);

} // namespace lvmesh
