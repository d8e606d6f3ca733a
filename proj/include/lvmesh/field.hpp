#pragma once

#include <filesystem>
#include <vector>

#include "lvmesh/volume.hpp"

namespace lvmesh {

// Dense displacement on the fixed (ED) grid: a fixed-frame point x maps to
// x + u(x) in the moving frame. Units are mm.
struct DisplacementField {
    Grid grid;
    std::vector<Vec3> u;

    DisplacementField() = default;
    explicit DisplacementField(const Grid &g) : grid(g), u(g.voxel_count(), Vec3::Zero()) {}

    const Vec3 &at(int i, int j, int k) const { return u[grid.index(i, j, k)]; }
    Vec3 &at(int i, int j, int k) { return u[grid.index(i, j, k)]; }

    // Trilinear interpolation, clamped outside the grid (same policy as images).
    Vec3 sample(const Vec3 &p_mm) const;
    // Sample and report whether the point had to be clamped.
    Vec3 sample(const Vec3 &p_mm, bool &clamped) const;

    double max_norm() const;
    void validate() const;
};

// Resample `field` onto `target` grid by trilinear interpolation.
DisplacementField resample_field(const DisplacementField &field, const Grid &target);

// 3-channel f32 MetaImage.
DisplacementField read_field_mhd(const std::filesystem::path &header);
void write_field_mhd(const DisplacementField &field, const std::filesystem::path &header);

} // namespace lvmesh
