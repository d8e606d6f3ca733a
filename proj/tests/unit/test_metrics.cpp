#include <cmath>
#include <numbers>

#include "lvmesh/metrics.hpp"
#include "lvmesh/tetmesh.hpp"
#include "support.hpp"

using namespace lvtest;

namespace {

LabelVolume cube(int n, int x0, int y0, int z0, int side) {
    Grid g;
    g.dims = {n, n, n};
    LabelVolume m(g);
    for (int k = z0; k < z0 + side; ++k)
        for (int j = y0; j < y0 + side; ++j)
            for (int i = x0; i < x0 + side; ++i) m.at(i, j, k) = kMyocardium;
    return m;
}

// Latitude-longitude sphere, outward.
SurfaceMesh uv_sphere(const Vec3 &c, double r, int nlat = 48, int nlon = 96) {
    SurfaceMesh s;
    s.vertices.push_back(c + Vec3(0, 0, r));
    for (int i = 1; i < nlat; ++i) {
        const double th = std::numbers::pi * i / nlat;
        for (int j = 0; j < nlon; ++j) {
            const double ph = 2 * std::numbers::pi * j / nlon;
            s.vertices.push_back(c + r * Vec3(std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th)));
        }
    }
    s.vertices.push_back(c - Vec3(0, 0, r));
    const int south = int(s.vertices.size()) - 1;
    auto id = [&](int i, int j) { return 1 + (i - 1) * nlon + (j % nlon); };
    for (int j = 0; j < nlon; ++j) s.triangles.push_back({0, id(1, j), id(1, j + 1)});
    for (int i = 1; i < nlat - 1; ++i)
        for (int j = 0; j < nlon; ++j) {
            s.triangles.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
            s.triangles.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
        }
    for (int j = 0; j < nlon; ++j) s.triangles.push_back({south, id(nlat - 1, j + 1), id(nlat - 1, j)});
    return s;
}

SurfaceMesh unit_square(double z) {
    SurfaceMesh s;
    s.vertices = {{0, 0, z}, {1, 0, z}, {1, 1, z}, {0, 1, z}};
    s.triangles = {{0, 1, 2}, {0, 2, 3}};
    return s;
}

double naive_mad(const SurfaceMesh &a, const SurfaceMesh &b) {
    double ab = 0.0, ba = 0.0;
    for (const Vec3 &p : a.vertices) ab += naive_point_surface(p, b);
    for (const Vec3 &p : b.vertices) ba += naive_point_surface(p, a);
    return 0.5 * (ab / double(a.vertices.size()) + ba / double(b.vertices.size()));
}

Mat3 random_rotation(std::mt19937_64 &rng) {
    const Vec3 axis = random_vec(rng).normalized();
    return Eigen::AngleAxisd(std::uniform_real_distribution<double>(0, 3)(rng), axis).toRotationMatrix();
}

} // namespace

TEST(Metrics, DiceClosedForms) {
    const LabelVolume a = cube(8, 1, 1, 1, 2);
    EXPECT_EQ(dice(a, a, kMyocardium), 1.0);
    EXPECT_EQ(dice(a, cube(8, 5, 5, 5, 2), kMyocardium), 0.0);
    // Shifted one voxel along x: 4 of the 8 voxels overlap.
    EXPECT_EQ(dice(a, cube(8, 2, 1, 1, 2), kMyocardium), 0.5);
    Grid g;
    g.dims = {8, 8, 8};
    EXPECT_EQ(dice(LabelVolume(g), LabelVolume(g), kMyocardium), 1.0);
}

TEST(Metrics, DiceIsSymmetricAndLabelAgnostic) {
    const LabelVolume a = random_blob(14, 3), b = random_blob(14, 4);
    EXPECT_EQ(dice(a, b, kMyocardium), dice(b, a, kMyocardium));
    LabelVolume ra = a, rb = b;
    for (auto &v : ra.data) v = v == kMyocardium ? kLvPool : 0;
    for (auto &v : rb.data) v = v == kMyocardium ? kLvPool : 0;
    EXPECT_EQ(dice(ra, rb, kLvPool), dice(a, b, kMyocardium));
    const double d = dice(a, b, kMyocardium);
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, 1.0);
}

TEST(Metrics, DiceRejectsGridMismatch) {
    EXPECT_THROW(dice(cube(8, 1, 1, 1, 2), cube(9, 1, 1, 1, 2), kMyocardium), Error);
}

TEST(Metrics, VoxelizedSphereMatchesAnalyticVolume) {
    Grid g;
    g.dims = {24, 24, 24};
    const double r = 8.0;
    const LabelVolume m = voxelize(uv_sphere(Vec3(11.3, 11.6, 11.45), r), g);
    std::size_t n = 0;
    for (auto v : m.data) n += v == kMyocardium;
    EXPECT_NEAR(double(n) / (4.0 / 3.0 * std::numbers::pi * r * r * r), 1.0, 0.02);
}

TEST(Metrics, VoxelizeMatchesRayFreeOracle) {
    // Inside a sphere mesh fine enough that no voxel centre sits between the
    // polyhedron and the true sphere.
    Grid g;
    g.dims = {20, 20, 20};
    const Vec3 c(9.37, 9.61, 9.23);
    const LabelVolume m = voxelize(uv_sphere(c, 6.0, 96, 192), g);
    int mismatched = 0;
    for (int k = 0; k < 20; ++k)
        for (int j = 0; j < 20; ++j)
            for (int i = 0; i < 20; ++i) {
                const double d = (g.point(i, j, k) - c).norm();
                if (std::abs(d - 6.0) < 0.01) continue;
                mismatched += (d < 6.0) != (m.at(i, j, k) == kMyocardium);
            }
    EXPECT_EQ(mismatched, 0);
}

TEST(Metrics, VoxelizeOutsideGridIsEmpty) {
    Grid g;
    g.dims = {10, 10, 10};
    const LabelVolume m = voxelize(uv_sphere(Vec3(40, 40, 40), 3.0, 8, 16), g);
    for (auto v : m.data) EXPECT_EQ(v, 0);
}

TEST(Metrics, VoxelizeRejectsOpenSurface) {
    Grid g;
    g.dims = {4, 4, 4};
    EXPECT_THROW(voxelize(unit_square(0.5), g), Error);
}

namespace {

LabelVolume myocardium_only(const LabelVolume &mask) {
    LabelVolume myo(mask.grid);
    for (std::size_t i = 0; i < mask.data.size(); ++i) myo.data[i] = mask.data[i] == kMyocardium ? kMyocardium : 0;
    return myo;
}

} // namespace

TEST(Metrics, MarchingCubesRoundTripOnPhantomShell) {
    const Phantom ph = generate(PhantomSpec{});
    for (int t : {0, 3}) {
        const LabelVolume &mask = ph.labels[std::size_t(t)];
        const LabelVolume back = voxelize(marching_cubes(mask, kMyocardium), mask.grid);
        EXPECT_GE(dice(back, myocardium_only(mask), kMyocardium), 0.97) << "frame " << t;
    }
}

TEST(Metrics, BinaryMarchingCubesRoundTripIsExact) {
    // Binary surfaces pass through edge midpoints, so every voxel centre
    // keeps its side.
    const Phantom ph = generate(small_phantom());
    for (const LabelVolume &mask : ph.labels) {
        const LabelVolume back = voxelize(marching_cubes(mask, kMyocardium, IsoPolicy::binary), mask.grid);
        EXPECT_EQ(dice(back, myocardium_only(mask), kMyocardium), 1.0);
    }
}

TEST(Metrics, MadClosedForms) {
    const SurfaceMesh s = sphere_surface();
    EXPECT_EQ(mad(s, s), 0.0);
    EXPECT_EQ(hausdorff(s, s), 0.0);
    for (double d : {0.25, 1.0, 3.5}) {
        EXPECT_NEAR(mad(unit_square(0.0), unit_square(d)), d, 1e-15);
        EXPECT_NEAR(hausdorff(unit_square(0.0), unit_square(d)), d, 1e-15);
    }
    EXPECT_THROW(mad(SurfaceMesh{}, s), Error);
}

TEST(Metrics, MadMatchesBruteForce) {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 4; ++trial) {
        const SurfaceMesh a = decimate(sphere_surface(5.0 + trial * 0.4, 16), 250);
        SurfaceMesh b = decimate(marching_cubes(random_blob(16, 30 + std::uint64_t(trial)), kMyocardium), 300);
        for (Vec3 &p : b.vertices) p += 0.2 * random_vec(rng);
        const double ref = naive_mad(a, b);
        EXPECT_NEAR(mad(a, b), ref, 1e-9);
        EXPECT_NEAR(mad(b, a), ref, 1e-9);
        double h = 0.0;
        for (const Vec3 &p : a.vertices) h = std::max(h, naive_point_surface(p, b));
        for (const Vec3 &p : b.vertices) h = std::max(h, naive_point_surface(p, a));
        EXPECT_NEAR(hausdorff(a, b), h, 1e-9);
        EXPECT_GE(h, ref);
    }
}

TEST(Metrics, NodeDistanceClosedForms) {
    const SurfaceMesh s = sphere_surface(5.0, 14);
    const NodeDistance z = node_distance(s, s);
    EXPECT_EQ(z.mean, 0.0);
    EXPECT_EQ(z.max, 0.0);
    EXPECT_EQ(z.per_vertex, std::vector<double>(s.vertices.size(), 0.0));
    SurfaceMesh t = s;
    for (Vec3 &p : t.vertices) p += Vec3(1, 2, 2);
    const NodeDistance d = node_distance(s, t);
    EXPECT_NEAR(d.mean, 3.0, 1e-12);
    EXPECT_NEAR(d.max, 3.0, 1e-12);
}

TEST(Metrics, NodeDistanceIsRigidInvariant) {
    const SurfaceMesh a = decimate(sphere_surface(5.0, 14), 150);
    std::mt19937_64 rng(22);
    SurfaceMesh b = a;
    for (Vec3 &p : b.vertices) p += 0.7 * random_vec(rng);
    const NodeDistance d0 = node_distance(a, b);
    EXPECT_LE(d0.mean, d0.max);
    for (int trial = 0; trial < 5; ++trial) {
        const Mat3 R = random_rotation(rng);
        const Vec3 off = random_vec(rng, -20, 20);
        SurfaceMesh ra = a, rb = b;
        for (Vec3 &p : ra.vertices) p = R * p + off;
        for (Vec3 &p : rb.vertices) p = R * p + off;
        const NodeDistance d = node_distance(ra, rb);
        EXPECT_NEAR(d.mean, d0.mean, 1e-9);
        EXPECT_NEAR(d.max, d0.max, 1e-9);
    }
}

TEST(Metrics, NodeDistanceNeedsCorrespondence) {
    const SurfaceMesh a = sphere_surface(5.0, 14);
    SurfaceMesh b = a;
    b.vertices.pop_back();
    EXPECT_THROW(node_distance(a, b), Error);
    SurfaceMesh c = a;
    std::swap(c.triangles[0][1], c.triangles[0][2]);
    EXPECT_THROW(node_distance(a, c), Error);
    const TetMesh m = tetrahedralize(decimate(a, 120), 10.0);
    TetMesh n = m;
    n.tets.pop_back();
    EXPECT_THROW(node_distance(m, n), Error);
    EXPECT_EQ(node_distance(m, m).max, 0.0);
}

TEST(Metrics, TTestIdenticalSamples) {
    const std::vector<double> a{0.91, 0.93, 0.95, 0.9};
    const TTest r = ttest(a, a);
    EXPECT_EQ(r.t, 0.0);
    EXPECT_EQ(r.p, 1.0);
    EXPECT_EQ(r.tier, Significance::ns);
    const TTest flat = ttest({2.0, 2.0}, {2.0, 2.0, 2.0});
    EXPECT_EQ(flat.p, 1.0);
    EXPECT_EQ(flat.tier, Significance::ns);
    EXPECT_THROW(ttest({1.0}, {1.0, 2.0}), Error);
}

// Reference values from a 50-digit evaluation of the Welch statistic and the
// regularized incomplete beta function.
TEST(Metrics, TTestMatchesHighPrecisionReference) {
    const TTest j = ttest({0, 1e-6, 2e-6, 3e-6}, {1, 1.000001, 1.000002, 1.000003});
    EXPECT_NEAR(j.t, -1095445.1150103322269, 1e-6 * 1095445.0);
    EXPECT_NEAR(j.df, 6.0, 1e-9);
    EXPECT_NEAR(j.p / 3.9062499999487304688e-35, 1.0, 1e-6);
    EXPECT_EQ(j.tier, Significance::p05);

    const TTest m = ttest({1.2, 2.1, 3.3, 2.8, 1.9}, {2.5, 3.9, 3.1, 4.4});
    EXPECT_NEAR(m.t, -2.1825858187510503438, 1e-12);
    EXPECT_NEAR(m.df, 6.4567991159887610746, 1e-10);
    EXPECT_NEAR(m.p, 0.06862219469059439826, 1e-12);
    EXPECT_EQ(m.tier, Significance::p10);
}

TEST(Metrics, TTestSymmetry) {
    const std::vector<double> a{1.2, 2.1, 3.3, 2.8, 1.9}, b{2.5, 3.9, 3.1, 4.4};
    const TTest ab = ttest(a, b), ba = ttest(b, a);
    EXPECT_EQ(ab.t, -ba.t);
    EXPECT_EQ(ab.p, ba.p);
    EXPECT_EQ(ab.df, ba.df);
}

TEST(Metrics, SignificanceTiers) {
    EXPECT_EQ(tier_of(0.2), Significance::ns);
    EXPECT_EQ(tier_of(0.1), Significance::ns);
    EXPECT_EQ(tier_of(0.0999), Significance::p10);
    EXPECT_EQ(tier_of(0.05), Significance::p10);
    EXPECT_EQ(tier_of(0.0499), Significance::p05);
    EXPECT_STREQ(to_string(Significance::ns), "ns");
    EXPECT_STREQ(to_string(Significance::p10), "*");
    EXPECT_STREQ(to_string(Significance::p05), "**");
}

TEST(Metrics, MeanStdUsesSampleVariance) {
    const MeanStd ms = mean_std({2, 4, 4, 4, 5, 5, 7, 9});
    EXPECT_EQ(ms.mean, 5.0);
    EXPECT_NEAR(ms.std, std::sqrt(32.0 / 7.0), 1e-15);
}
