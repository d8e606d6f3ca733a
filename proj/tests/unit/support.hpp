#pragma once

#include <algorithm>
#include <filesystem>
#include <random>
#include <string>

#include <Eigen/Geometry>
#include <gtest/gtest.h>

#include "lvmesh/isosurface.hpp"
#include "lvmesh/mesh.hpp"
#include "lvmesh/phantom.hpp"
#include "lvmesh/volume.hpp"

namespace lvtest {

using namespace lvmesh;

// Fresh scratch directory per test, removed on destruction.
class TempDir {
  public:
    TempDir() {
        const auto *info = ::testing::UnitTest::GetInstance()->current_test_info();
        path_ = std::filesystem::temp_directory_path() /
                ("lvmesh_" + std::string(info->test_suite_name()) + "_" + info->name());
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    const std::filesystem::path &path() const { return path_; }
    std::filesystem::path operator/(const std::string &s) const { return path_ / s; }

  private:
    std::filesystem::path path_;
};

inline LabelVolume ball_mask(int n, const Vec3 &c, double r, std::uint8_t label = kMyocardium) {
    Grid g;
    g.dims = {n, n, n};
    LabelVolume m(g);
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i)
                if ((g.point(i, j, k) - c).norm() <= r) m.at(i, j, k) = label;
    return m;
}

inline SurfaceMesh sphere_surface(double r = 6.0, int n = 20) {
    const double c = 0.5 * (n - 1);
    return marching_cubes(ball_mask(n, Vec3::Constant(c), r), kMyocardium, IsoPolicy::box);
}

// Phantom small enough for quick end-to-end tests.
inline PhantomSpec small_phantom(int n = 32) {
    PhantomSpec s;
    s.dims = {n, n, n};
    s.endo_semi_axes = Vec3(5, 6, 8);
    s.epi_semi_axes = Vec3(9, 10, 12);
    s.base_z = 4.0;
    return s;
}

inline Vec3 random_vec(std::mt19937_64 &rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    return {d(rng), d(rng), d(rng)};
}

// Brute-force point-triangle distance: plane projection when the foot lies in
// the triangle, otherwise the nearest of the three edges.
inline double seg_distance(const Vec3 &p, const Vec3 &a, const Vec3 &b) {
    const Vec3 ab = b - a;
    const double L2 = ab.squaredNorm();
    const double t = L2 > 0 ? std::clamp((p - a).dot(ab) / L2, 0.0, 1.0) : 0.0;
    return (a + t * ab - p).norm();
}

inline double naive_point_triangle(const Vec3 &p, const Vec3 &a, const Vec3 &b, const Vec3 &c) {
    const Vec3 n = (b - a).cross(c - a);
    if (n.squaredNorm() > 0) {
        const Vec3 nn = n.normalized();
        const Vec3 q = p - nn * (p - a).dot(nn);
        const bool in = (b - a).cross(q - a).dot(n) >= 0 && (c - b).cross(q - b).dot(n) >= 0 &&
                        (a - c).cross(q - c).dot(n) >= 0;
        if (in) return std::abs((p - a).dot(nn));
    }
    return std::min({seg_distance(p, a, b), seg_distance(p, b, c), seg_distance(p, c, a)});
}

inline double naive_point_surface(const Vec3 &p, const SurfaceMesh &m) {
    double best = 1e300;
    for (const Tri &t : m.triangles)
        best = std::min(best, naive_point_triangle(p, m.vertices[std::size_t(t[0])], m.vertices[std::size_t(t[1])],
                                                   m.vertices[std::size_t(t[2])]));
    return best;
}

// Random union of balls on an n^3 grid.
inline LabelVolume random_blob(int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Grid g;
    g.dims = {n, n, n};
    LabelVolume m(g);
    const int balls = 1 + int(rng() % 4);
    for (int b = 0; b < balls; ++b) {
        const Vec3 c = random_vec(rng, 3.0, n - 4.0);
        const double r = std::uniform_real_distribution<double>(1.0, n / 4.0)(rng);
        for (int k = 0; k < n; ++k)
            for (int j = 0; j < n; ++j)
                for (int i = 0; i < n; ++i)
                    if ((g.point(i, j, k) - c).norm() <= r) m.at(i, j, k) = kMyocardium;
    }
    // Sprinkle isolated voxels to exercise ambiguous configurations.
    for (int s = 0; s < 6; ++s) m.at(1 + int(rng() % (n - 2)), 1 + int(rng() % (n - 2)), 1 + int(rng() % (n - 2))) = kMyocardium;
    return m;
}

inline double mean_edge_length(const SurfaceMesh &m) {
    double acc = 0.0;
    for (const Tri &t : m.triangles)
        for (int e = 0; e < 3; ++e) acc += (m.vertices[std::size_t(t[e])] - m.vertices[std::size_t(t[(e + 1) % 3])]).norm();
    return acc / (3.0 * double(m.triangles.size()));
}

} // namespace lvtest
