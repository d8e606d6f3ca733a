#include <Eigen/LU>

#include "lvmesh/delaunay.hpp"
#include "lvmesh/geometry.hpp"
#include "support.hpp"

using namespace lvtest;

namespace {

// Circumcentre from the 3x3 linear system 2 (p_i - p_0) . c = |p_i|^2 - |p_0|^2.
Vec3 circumcentre(const Vec3 &a, const Vec3 &b, const Vec3 &c, const Vec3 &d) {
    Mat3 M;
    M.row(0) = 2 * (b - a);
    M.row(1) = 2 * (c - a);
    M.row(2) = 2 * (d - a);
    const Vec3 r(b.squaredNorm() - a.squaredNorm(), c.squaredNorm() - a.squaredNorm(), d.squaredNorm() - a.squaredNorm());
    return M.fullPivLu().solve(r);
}

} // namespace

TEST(Geometry, PointTriangleDistanceMatchesBruteForce) {
    std::mt19937_64 rng(1);
    for (int n = 0; n < 2000; ++n) {
        const Vec3 a = random_vec(rng), b = random_vec(rng), c = random_vec(rng), p = random_vec(rng, -2, 2);
        EXPECT_NEAR(geom::point_triangle_distance(p, a, b, c), naive_point_triangle(p, a, b, c), 1e-12);
    }
}

TEST(Geometry, ClosestPointLiesOnTriangle) {
    std::mt19937_64 rng(2);
    for (int n = 0; n < 200; ++n) {
        const Vec3 a = random_vec(rng), b = random_vec(rng), c = random_vec(rng), p = random_vec(rng, -2, 2);
        const Vec3 q = geom::closest_point_on_triangle(p, a, b, c);
        EXPECT_NEAR(naive_point_triangle(q, a, b, c), 0.0, 1e-12);
        EXPECT_NEAR((q - p).norm(), naive_point_triangle(p, a, b, c), 1e-12);
    }
}

TEST(Geometry, TriangleTreeMatchesBruteForce) {
    const SurfaceMesh s = sphere_surface(5.0, 16);
    const geom::TriangleTree tree(s.vertices, s.triangles);
    std::mt19937_64 rng(3);
    for (int n = 0; n < 100; ++n) {
        const Vec3 p = random_vec(rng, -2, 18);
        EXPECT_NEAR(tree.distance(p), naive_point_surface(p, s), 1e-9);
    }
}

TEST(Geometry, RayParityOnSphere) {
    const SurfaceMesh s = sphere_surface(6.0, 20);
    const geom::RayParity rp(s);
    const Vec3 c = Vec3::Constant(9.5);
    EXPECT_TRUE(rp.inside(c));
    EXPECT_FALSE(rp.inside(Vec3(0, 0, 0)));
    EXPECT_FALSE(rp.inside(c + Vec3(7.5, 0, 0)));
    EXPECT_TRUE(rp.inside(c + Vec3(4.0, 1.0, -1.0)));
    EXPECT_EQ(rp.crossings(c.x(), c.y()).size() % 2, 0u);
}

TEST(Geometry, OrientationPredicates) {
    const Vec3 a(0, 0, 0), b(1, 0, 0), c(0, 1, 0), d(0, 0, 1);
    EXPECT_EQ(delaunay::orient3d(a, b, c, d), -delaunay::orient3d(b, a, c, d));
    EXPECT_NE(delaunay::orient3d(a, b, c, d), 0);
    EXPECT_EQ(delaunay::orient3d(a, b, c, Vec3(0.3, 0.3, 0)), 0);
    EXPECT_NEAR(tet_volume(a, b, c, d), 1.0 / 6.0, 1e-15);
}

TEST(Geometry, DelaunayCellsHaveEmptyCircumspheres) {
    std::mt19937_64 rng(4);
    std::vector<Vec3> pts;
    for (int n = 0; n < 150; ++n) pts.push_back(random_vec(rng, 0, 10));
    delaunay::Triangulation dt(Vec3::Zero(), Vec3::Constant(10), 7);
    dt.insert(pts);
    const auto tets = dt.tets();
    ASSERT_FALSE(tets.empty());
    for (const Tet &t : tets) {
        const Vec3 &a = pts[std::size_t(t[0])], &b = pts[std::size_t(t[1])], &c = pts[std::size_t(t[2])],
                   &d = pts[std::size_t(t[3])];
        EXPECT_GT(tet_volume(a, b, c, d), 0.0);
        const Vec3 cc = circumcentre(a, b, c, d);
        const double r = (a - cc).norm();
        for (std::size_t q = 0; q < pts.size(); ++q) {
            if (int(q) == t[0] || int(q) == t[1] || int(q) == t[2] || int(q) == t[3]) continue;
            EXPECT_GT((pts[q] - cc).norm(), r * (1 - 1e-9));
        }
    }
}

TEST(Geometry, DelaunayFillsTheConvexHull) {
    std::vector<Vec3> pts;
    for (int s = 0; s < 8; ++s) pts.push_back(Vec3(s & 1, (s >> 1) & 1, (s >> 2) & 1));
    std::mt19937_64 rng(5);
    for (int n = 0; n < 40; ++n) pts.push_back(random_vec(rng, 0.05, 0.95));
    delaunay::Triangulation dt(Vec3::Zero(), Vec3::Ones(), 3);
    dt.insert_sorted(pts);
    double vol = 0.0;
    for (const Tet &t : dt.tets())
        vol += tet_volume(pts[std::size_t(t[0])], pts[std::size_t(t[1])], pts[std::size_t(t[2])], pts[std::size_t(t[3])]);
    EXPECT_NEAR(vol, 1.0, 1e-12);
    EXPECT_EQ(dt.point_count(), pts.size());
}
