#include <cmath>
#include <numbers>

#include "lvmesh/metrics.hpp"
#include "support.hpp"

using namespace lvtest;

namespace {

SurfaceMesh phantom_surface(const Phantom &ph, int t) { return marching_cubes(ph.labels[std::size_t(t)], kMyocardium); }

} // namespace

TEST(Isosurface, PolicyNames) {
    EXPECT_EQ(parse_iso_policy("binary"), IsoPolicy::binary);
    EXPECT_EQ(parse_iso_policy("box"), IsoPolicy::box);
    EXPECT_STREQ(to_string(IsoPolicy::box), "box");
    EXPECT_THROW(parse_iso_policy("gauss"), Error);
}

TEST(Isosurface, SphereAreaAndVolume) {
    const double r = 10.0;
    const SurfaceMesh s = marching_cubes(ball_mask(28, Vec3::Constant(13.5), r), kMyocardium);
    const SurfaceCheck c = check_surface(s);
    EXPECT_TRUE(c.valid());
    EXPECT_NEAR(surface_area(s) / (4 * std::numbers::pi * r * r), 1.0, 0.03);
    EXPECT_NEAR(enclosed_volume(s) / (4.0 / 3.0 * std::numbers::pi * r * r * r), 1.0, 0.03);
}

TEST(Isosurface, SingleVoxelIsATopologicalSphere) {
    Grid g;
    g.dims = {5, 5, 5};
    LabelVolume m(g);
    m.at(2, 2, 2) = kMyocardium;
    const SurfaceCheck c = check_surface(marching_cubes(m, kMyocardium, IsoPolicy::binary));
    EXPECT_TRUE(c.valid());
    EXPECT_EQ(c.euler, 2);
    EXPECT_EQ(c.components, 1);
    // The 3x3x3 average of a lone voxel is 1/27, below the isovalue.
    EXPECT_THROW(marching_cubes(m, kMyocardium, IsoPolicy::box), Error);
}

TEST(Isosurface, LabelTouchingGridEdgeIsClosed) {
    Grid g;
    g.dims = {4, 4, 4};
    const SurfaceCheck c = check_surface(marching_cubes(LabelVolume(g, kMyocardium), kMyocardium, IsoPolicy::binary));
    EXPECT_TRUE(c.valid());
    EXPECT_EQ(c.euler, 2);
}

TEST(Isosurface, AbsentLabelIsAnError) {
    Grid g;
    g.dims = {4, 4, 4};
    EXPECT_THROW(marching_cubes(LabelVolume(g), kMyocardium), Error);
}

TEST(Isosurface, RandomBlobsAreWatertight) {
    for (std::uint64_t seed = 1; seed <= 25; ++seed) {
        const LabelVolume m = random_blob(16, seed);
        for (IsoPolicy p : {IsoPolicy::binary, IsoPolicy::box}) {
            const SurfaceMesh s = marching_cubes(m, kMyocardium, p);
            if (s.triangles.empty()) continue;
            const SurfaceCheck c = check_surface(s);
            EXPECT_TRUE(c.watertight) << "seed " << seed << " policy " << to_string(p);
            EXPECT_TRUE(c.consistently_oriented) << "seed " << seed;
            EXPECT_GT(c.signed_volume, 0.0) << "seed " << seed;
            EXPECT_GT(c.min_area, 1e-9) << "seed " << seed;
        }
    }
}

TEST(Isosurface, PhantomShellTopology) {
    const Phantom ph = generate(small_phantom());
    const SurfaceCheck c = check_surface(phantom_surface(ph, 0));
    EXPECT_TRUE(c.valid());
    EXPECT_EQ(c.components, 1);
    // A cut shell is a topological sphere.
    EXPECT_EQ(c.genus, 0);
}

TEST(Isosurface, ScalarOverloadMatchesIndicator) {
    const LabelVolume m = ball_mask(12, Vec3::Constant(5.5), 3.5);
    ImageVolume v(m.grid);
    for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] = m.data[i] == kMyocardium ? 1.0f : 0.0f;
    const SurfaceMesh a = marching_cubes(v, 0.5), b = marching_cubes(m, kMyocardium, IsoPolicy::binary);
    EXPECT_EQ(a.triangles.size(), b.triangles.size());
    EXPECT_NEAR(enclosed_volume(a), enclosed_volume(b), 1e-9);
}

TEST(Isosurface, DecimateToCurrentCountIsIdentity) {
    const SurfaceMesh s = sphere_surface();
    const SurfaceMesh d = decimate(s, int(s.vertices.size()));
    EXPECT_EQ(d.vertices, s.vertices);
    EXPECT_EQ(d.triangles, s.triangles);
}

TEST(Isosurface, DecimatedSphereStaysClose) {
    const SurfaceMesh s = sphere_surface(7.0, 20);
    const int target = int(s.vertices.size()) / 4;
    const SurfaceMesh d = decimate(s, target);
    EXPECT_LE(int(d.vertices.size()), target);
    EXPECT_TRUE(check_surface(d).valid());
    double h = 0.0;
    for (const Vec3 &p : s.vertices) h = std::max(h, naive_point_surface(p, d));
    for (const Vec3 &p : d.vertices) h = std::max(h, naive_point_surface(p, s));
    EXPECT_LT(h, 2.0 * mean_edge_length(s));
}

TEST(Isosurface, DecimatedPhantomStaysValid) {
    const Phantom ph = generate(small_phantom());
    const SurfaceMesh s = phantom_surface(ph, 0);
    const SurfaceMesh d = decimate(s, 600);
    const SurfaceCheck c = check_surface(d);
    EXPECT_TRUE(c.valid());
    EXPECT_EQ(c.genus, 0);
    EXPECT_LE(d.vertices.size(), 600u);
}

TEST(Isosurface, DecimationReducesEachStepMonotonically) {
    const SurfaceMesh s = sphere_surface(6.0, 18);
    std::size_t prev = s.vertices.size();
    for (int target : {800, 400, 200, 100}) {
        const SurfaceMesh d = decimate(s, target);
        EXPECT_LE(d.vertices.size(), prev);
        prev = d.vertices.size();
    }
}

TEST(Isosurface, PropagateByZeroAndTranslation) {
    const SurfaceMesh s = sphere_surface();
    Grid g;
    g.dims = {20, 20, 20};
    const PropagatedSurface z = propagate_surface(s, DisplacementField(g), 3);
    EXPECT_EQ(z.mesh.vertices, s.vertices);
    EXPECT_EQ(z.mesh.frame_id, 3);
    DisplacementField t(g);
    for (Vec3 &u : t.u) u = Vec3(0.5, -1.0, 2.0);
    const PropagatedSurface p = propagate_surface(s, t);
    EXPECT_EQ(p.mesh.triangles, s.triangles);
    for (std::size_t i = 0; i < s.vertices.size(); ++i) EXPECT_EQ(p.mesh.vertices[i], s.vertices[i] + Vec3(0.5, -1.0, 2.0));
}

TEST(Isosurface, AnalyticPropagationMatchesSegmentation) {
    const PhantomSpec spec;
    const Phantom ph = generate(spec);
    const SurfaceMesh ed = decimate(phantom_surface(ph, 0), 2500);
    for (int t : {2, 3}) {
        const SurfaceMesh moved = propagate_surface(ed, ph.fields[std::size_t(t)], t).mesh;
        EXPECT_LT(mad(moved, phantom_surface(ph, t)), 1.0) << "frame " << t;
    }
}
