#include "lvmesh/field.hpp"

#include <algorithm>
#include <cmath>

namespace lvmesh {

namespace {

void axis(double c, int n, int &i0, int &i1, double &f, bool &clamped) {
    if (n == 1) {
        i0 = i1 = 0;
        f = 0.0;
        clamped = clamped || c < -0.5 || c > 0.5;
        return;
    }
    if (c < 0.0) {
        clamped = clamped || c < -0.5;
        c = 0.0;
    } else if (c > n - 1) {
        clamped = clamped || c > n - 0.5;
        c = n - 1;
    }
    i0 = std::min(int(std::floor(c)), n - 2);
    i1 = i0 + 1;
    f = c - i0;
}

} // namespace

Vec3 DisplacementField::sample(const Vec3 &p, bool &clamped) const {
    const Vec3 c = grid.to_voxel(p);
    int x0, x1, y0, y1, z0, z1;
    double fx, fy, fz;
    clamped = false;
    axis(c.x(), grid.dims[0], x0, x1, fx, clamped);
    axis(c.y(), grid.dims[1], y0, y1, fy, clamped);
    axis(c.z(), grid.dims[2], z0, z1, fz, clamped);
    const Vec3 c00 = at(x0, y0, z0) + fx * (at(x1, y0, z0) - at(x0, y0, z0));
    const Vec3 c10 = at(x0, y1, z0) + fx * (at(x1, y1, z0) - at(x0, y1, z0));
    const Vec3 c01 = at(x0, y0, z1) + fx * (at(x1, y0, z1) - at(x0, y0, z1));
    const Vec3 c11 = at(x0, y1, z1) + fx * (at(x1, y1, z1) - at(x0, y1, z1));
    const Vec3 c0 = c00 + fy * (c10 - c00);
    const Vec3 c1 = c01 + fy * (c11 - c01);
    return c0 + fz * (c1 - c0);
}

Vec3 DisplacementField::sample(const Vec3 &p) const {
    bool clamped;
    return sample(p, clamped);
}

double DisplacementField::max_norm() const {
    double m = 0.0;
    for (const auto &v : u) m = std::max(m, v.norm());
    return m;
}

void DisplacementField::validate() const {
    grid.validate();
    require(u.size() == grid.voxel_count(), "field: vector count does not match grid");
    for (const auto &v : u) require(v.allFinite(), "field: non-finite displacement");
}

DisplacementField resample_field(const DisplacementField &field, const Grid &target) {
    if (field.grid == target) return field;
    DisplacementField out(target);
    for (int k = 0; k < target.dims[2]; ++k)
        for (int j = 0; j < target.dims[1]; ++j)
            for (int i = 0; i < target.dims[0]; ++i) out.at(i, j, k) = field.sample(target.point(i, j, k));
    return out;
}

DisplacementField read_field_mhd(const std::filesystem::path &header) {
    MetaImage m = read_meta(header);
    require(m.channels == 3, "field: expected 3 channels in '" + header.string() + "'");
    DisplacementField f(m.grid);
    for (std::size_t i = 0; i < f.u.size(); ++i) f.u[i] = Vec3(m.values[3 * i], m.values[3 * i + 1], m.values[3 * i + 2]);
    f.validate();
    return f;
}

void write_field_mhd(const DisplacementField &field, const std::filesystem::path &header) {
    field.validate();
    MetaImage m;
    m.grid = field.grid;
    m.kind = ElementKind::f32;
    m.channels = 3;
    m.values.resize(field.u.size() * 3);
    for (std::size_t i = 0; i < field.u.size(); ++i)
        for (int c = 0; c < 3; ++c) m.values[3 * i + c] = float(field.u[i][c]);
    write_meta(m, header);
}

} // namespace lvmesh
