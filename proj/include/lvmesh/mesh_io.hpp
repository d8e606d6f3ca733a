#pragma once

// Legacy VTK ASCII meshes (and a PLY writer for surfaces). Coordinates are
// written with 17 significant digits so files round-trip exactly.

#include <filesystem>

#include "lvmesh/mesh.hpp"
#include "lvmesh/tetmesh.hpp"

namespace lvmesh {

// POLYDATA with POLYGONS.
void write_vtk(const SurfaceMesh &mesh, const std::filesystem::path &path);
SurfaceMesh read_vtk_surface(const std::filesystem::path &path);

// UNSTRUCTURED_GRID of tets (cell type 10). CELL_DATA carries the scaled
// Jacobian, POINT_DATA the surface vertex id of boundary vertices (-1
// elsewhere), which restores boundary_map on reading.
void write_vtk(const TetMesh &mesh, const std::filesystem::path &path);
TetMesh read_vtk_tetmesh(const std::filesystem::path &path);

void write_ply(const SurfaceMesh &mesh, const std::filesystem::path &path);

} // namespace lvmesh
