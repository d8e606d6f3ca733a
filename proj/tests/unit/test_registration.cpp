#include <cmath>

#include "lvmesh/registration.hpp"
#include "support.hpp"

using namespace lvtest;
using namespace lvmesh::reg;

namespace {

Grid cube(int n, const Vec3 &spacing = Vec3::Ones()) {
    Grid g;
    g.dims = {n, n, n};
    g.spacing = spacing;
    return g;
}

ImageVolume random_image(const Grid &g, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(0.0, 1.0);
    ImageVolume v(g);
    for (float &x : v.data) x = float(d(rng));
    return v;
}

DisplacementField random_field(const Grid &g, std::uint64_t seed, double amp) {
    std::mt19937_64 rng(seed);
    DisplacementField f(g);
    for (Vec3 &u : f.u) u = random_vec(rng, -amp, amp);
    return f;
}

// Naive trilinear sampler with clamping, written independently of the library.
double naive_sample(const ImageVolume &v, const Vec3 &p) {
    const Grid &g = v.grid;
    double c[3];
    int i0[3];
    double f[3];
    for (int a = 0; a < 3; ++a) {
        c[a] = std::clamp((p[a] - g.origin[a]) / g.spacing[a], 0.0, double(g.dims[a] - 1));
        i0[a] = std::min(int(std::floor(c[a])), g.dims[a] - 2);
        if (g.dims[a] == 1) i0[a] = 0;
        f[a] = c[a] - i0[a];
    }
    double s = 0.0;
    for (int dz = 0; dz < 2; ++dz)
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
                const double w = (dx ? f[0] : 1 - f[0]) * (dy ? f[1] : 1 - f[1]) * (dz ? f[2] : 1 - f[2]);
                if (w == 0.0) continue;
                s += w * v.at(i0[0] + dx, i0[1] + dy, i0[2] + dz);
            }
    return s;
}

Vec3 naive_laplacian(const DisplacementField &u, int i, int j, int k) {
    const Grid &g = u.grid;
    auto at = [&](int a, int b, int c) {
        return u.at(std::clamp(a, 0, g.dims[0] - 1), std::clamp(b, 0, g.dims[1] - 1), std::clamp(c, 0, g.dims[2] - 1));
    };
    const Vec3 h2 = g.spacing.cwiseProduct(g.spacing);
    return (at(i + 1, j, k) - 2 * at(i, j, k) + at(i - 1, j, k)) / h2.x() +
           (at(i, j + 1, k) - 2 * at(i, j, k) + at(i, j - 1, k)) / h2.y() +
           (at(i, j, k + 1) - 2 * at(i, j, k) + at(i, j, k - 1)) / h2.z();
}

LossTerms naive_loss(const ImageVolume &f, const ImageVolume &m, const DisplacementField &u, double lambda) {
    const Grid &g = f.grid;
    double sim = 0.0, smooth = 0.0;
    for (int k = 0; k < g.dims[2]; ++k)
        for (int j = 0; j < g.dims[1]; ++j)
            for (int i = 0; i < g.dims[0]; ++i) {
                const double r = f.at(i, j, k) - naive_sample(m, g.point(i, j, k) + u.at(i, j, k));
                sim += r * r;
                const Vec3 l = naive_laplacian(u, i, j, k);
                smooth += l.x() * l.x() + l.y() * l.y() + l.z() * l.z();
            }
    const double n = double(g.voxel_count());
    sim /= n;
    smooth /= 3.0 * n;
    return {sim + lambda * smooth, sim, smooth};
}

// Centred cubic B-spline kernel.
double beta3(double x) {
    x = std::abs(x);
    if (x < 1) return 2.0 / 3.0 - x * x + 0.5 * x * x * x;
    if (x < 2) return std::pow(2 - x, 3) / 6.0;
    return 0.0;
}

ImageVolume translate_voxels(const ImageVolume &v, int dx, int dy, int dz) {
    ImageVolume out(v.grid, v.kind);
    const auto &d = v.grid.dims;
    for (int k = 0; k < d[2]; ++k)
        for (int j = 0; j < d[1]; ++j)
            for (int i = 0; i < d[0]; ++i)
                out.at(i, j, k) = v.at(std::clamp(i - dx, 0, d[0] - 1), std::clamp(j - dy, 0, d[1] - 1),
                                       std::clamp(k - dz, 0, d[2] - 1));
    return out;
}

} // namespace

TEST(Registration, NamesAndValidation) {
    EXPECT_EQ(parse_backend("dense"), Backend::dense);
    EXPECT_EQ(parse_backend("ffd"), Backend::ffd);
    EXPECT_THROW(parse_backend("cnn"), Error);
    EXPECT_EQ(parse_pairing("sequential"), Pairing::sequential);
    EXPECT_THROW(parse_pairing("pairwise"), Error);
    RegistrationConfig c;
    EXPECT_EQ(c.lambda, 1e-3);
    c.lambda = -1.0;
    EXPECT_THROW(c.validate(), Error);
}

TEST(Registration, LossIsZeroForIdenticalImages) {
    const ImageVolume f = random_image(cube(5), 1);
    const LossTerms l = loss_dense(f, f, DisplacementField(f.grid), 1e-3);
    EXPECT_EQ(l.total, 0.0);
}

TEST(Registration, LossMatchesNaiveEvaluator) {
    Grid g = cube(4, Vec3(1.0, 1.5, 0.8));
    g.origin = Vec3(2, -1, 0.5);
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const ImageVolume f = random_image(g, seed), m = random_image(g, seed + 100);
        const DisplacementField u = random_field(g, seed + 200, 1.5);
        const LossTerms a = loss_dense(f, m, u, 0.37), b = naive_loss(f, m, u, 0.37);
        EXPECT_NEAR(a.similarity, b.similarity, 1e-12 * std::max(1.0, b.similarity));
        EXPECT_NEAR(a.smooth, b.smooth, 1e-12 * std::max(1.0, b.smooth));
        EXPECT_NEAR(a.total, b.total, 1e-12 * std::max(1.0, b.total));
    }
}

TEST(Registration, LinearFieldHasNoInteriorLaplacian) {
    const Grid g = cube(6);
    DisplacementField u(g);
    Mat3 B;
    B << 0.1, -0.2, 0.05, 0.3, 0.0, -0.1, 0.02, 0.04, -0.3;
    const Vec3 a(1, 2, -1);
    for (std::size_t i = 0; i < u.u.size(); ++i) u.u[i] = a + B * g.point(i);
    for (int k = 1; k < 5; ++k)
        for (int j = 1; j < 5; ++j)
            for (int i = 1; i < 5; ++i) EXPECT_NEAR(naive_laplacian(u, i, j, k).norm(), 0.0, 1e-12);
    DisplacementField c(g);
    for (Vec3 &x : c.u) x = a;
    const ImageVolume f = random_image(g, 3);
    EXPECT_EQ(loss_dense(f, f, c, 1.0).smooth, 0.0);
}

TEST(Registration, GradientMatchesFiniteDifferences) {
    const Grid g = cube(6, Vec3(1.0, 0.9, 1.2));
    const ImageVolume f = gaussian_smooth(random_image(g, 7), 1.0), m = gaussian_smooth(random_image(g, 8), 1.0);
    const DisplacementField u = random_field(g, 9, 0.3);
    std::vector<Vec3> grad;
    loss_dense_gradient(f, m, u, 1e-3, grad);
    std::mt19937_64 rng(10);
    int checked = 0;
    for (int probe = 0; probe < 20; ++probe) {
        const std::size_t v = std::uniform_int_distribution<std::size_t>(0, u.u.size() - 1)(rng);
        const int a = int(rng() % 3);
        const double h = 1e-5;
        DisplacementField up = u, dn = u;
        up.u[v][a] += h;
        dn.u[v][a] -= h;
        const double fd = (loss_dense(f, m, up, 1e-3).total - loss_dense(f, m, dn, 1e-3).total) / (2 * h);
        if (std::abs(fd) < 1e-9) continue;
        EXPECT_LT(std::abs(grad[v][a] - fd) / std::abs(fd), 1e-4) << "voxel " << v << " axis " << a;
        ++checked;
    }
    EXPECT_GE(checked, 10);
}

TEST(Registration, DenseOnIdenticalFramesStaysNearZero) {
    const Phantom ph = generate(small_phantom());
    RegistrationConfig c;
    c.dense_iterations = 100;
    const DisplacementField u = register_dense(ph.frames.frames[0], ph.frames.frames[0], c);
    EXPECT_LE(u.max_norm(), 0.05);
}

TEST(Registration, FfdOnIdenticalFramesStaysNearZero) {
    const Phantom ph = generate(small_phantom());
    RegistrationConfig c;
    c.backend = Backend::ffd;
    c.ffd_iterations = 150;
    const FfdTransform t = register_ffd(ph.frames.frames[0], ph.frames.frames[0], c);
    EXPECT_LE(t.max_coeff_norm(), 0.1);
}

TEST(Registration, FfdRecoversTranslation) {
    PhantomSpec s = small_phantom(40);
    s.n_frames = 2;
    const Phantom ph = generate(s);
    const ImageVolume &fixed = ph.frames.frames[0];
    const ImageVolume moving = translate_voxels(fixed, 2, 1, 0);
    RegistrationConfig c;
    c.backend = Backend::ffd;
    const DisplacementField u = to_dense(register_ffd(fixed, moving, c));
    DisplacementField truth(fixed.grid);
    for (Vec3 &x : truth.u) x = Vec3(2, 1, 0);
    EXPECT_LT(mean_endpoint_error(u, truth, ph.labels[0], kMyocardium), 0.3);
}

TEST(Registration, BSplineBasisPartitionOfUnity) {
    for (double t : {0.0, 0.1, 0.5, 0.77, 0.999}) {
        double w[4], d[4], s[4];
        BSpline::weights(t, w);
        BSpline::first(t, d);
        BSpline::second(t, s);
        EXPECT_NEAR(w[0] + w[1] + w[2] + w[3], 1.0, 1e-15);
        EXPECT_NEAR(d[0] + d[1] + d[2] + d[3], 0.0, 1e-15);
        EXPECT_NEAR(s[0] + s[1] + s[2] + s[3], 0.0, 1e-14);
        EXPECT_NEAR(w[1], beta3(t), 1e-15);
    }
}

TEST(Registration, LatticeCoversImage) {
    Grid g = cube(20, Vec3(1.0, 1.5, 2.0));
    g.origin = Vec3(-3, 4, 0);
    const FfdTransform f = FfdTransform::covering(g, 5.0);
    for (int a = 0; a < 3; ++a) {
        EXPECT_LE(f.lattice_origin[a], g.origin[a] - f.control_spacing[a] + 1e-12);
        const double last = f.lattice_origin[a] + (f.lattice_dims[a] - 1) * f.control_spacing[a];
        EXPECT_GE(last, g.origin[a] + (g.dims[a] - 1) * g.spacing[a] + f.control_spacing[a] - 1e-9);
    }
}

TEST(Registration, ZeroCoefficientsGiveZeroField) {
    const FfdTransform f = FfdTransform::covering(cube(12), 4.0);
    for (const Vec3 &u : to_dense(f).u) EXPECT_EQ(u, Vec3::Zero());
}

TEST(Registration, SingleControlPointMatchesTensorProduct) {
    FfdTransform f = FfdTransform::covering(cube(16), 4.0);
    const int ci = 2, cj = 3, ck = 2;
    f.coeffs[f.control_index(ci, cj, ck)] = Vec3(1, 0, 0);
    const Vec3 probes[] = {{4, 8, 4}, {5.3, 7.1, 3.2}, {1.0, 9.9, 6.5}, {7.5, 4.2, 2.25}, {3.0, 11.0, 0.5}};
    for (const Vec3 &p : probes) {
        double ref = 1.0;
        for (int a = 0; a < 3; ++a) {
            const int c = a == 0 ? ci : a == 1 ? cj : ck;
            ref *= beta3((p[a] - f.lattice_origin[a]) / f.control_spacing[a] - c);
        }
        EXPECT_NEAR(f.displacement(p).x(), ref, 1e-14);
        EXPECT_EQ(f.displacement(p).y(), 0.0);
    }
}

TEST(Registration, ConstantCoefficientsReproduceConstant) {
    FfdTransform f = FfdTransform::covering(cube(14), 3.0);
    for (Vec3 &c : f.coeffs) c = Vec3(0.5, -1.25, 2.0);
    for (const Vec3 &u : to_dense(f).u) EXPECT_NEAR((u - Vec3(0.5, -1.25, 2.0)).norm(), 0.0, 1e-13);
}

TEST(Registration, AffineTransformHasNoBendingEnergy) {
    FfdTransform f = FfdTransform::covering(cube(14), 3.0);
    Mat3 A;
    A << 0.02, 0.1, -0.03, 0.0, 0.05, 0.01, -0.04, 0.0, 0.02;
    for (int k = 0; k < f.lattice_dims[2]; ++k)
        for (int j = 0; j < f.lattice_dims[1]; ++j)
            for (int i = 0; i < f.lattice_dims[0]; ++i) f.coeffs[f.control_index(i, j, k)] = A * f.control_point(i, j, k) + Vec3(1, 2, 3);
    EXPECT_NEAR(bending_energy(f), 0.0, 1e-12);
    const Vec3 p(6.2, 3.3, 9.1);
    EXPECT_NEAR((f.displacement(p) - (A * p + Vec3(1, 2, 3))).norm(), 0.0, 1e-12);
}

TEST(Registration, TwoFramesGiveSameFieldForBothPairings) {
    PhantomSpec s = small_phantom();
    s.n_frames = 2;
    const Phantom ph = generate(s);
    RegistrationConfig c;
    c.dense_iterations = 40;
    const auto a = register_sequence(ph.frames, c, Pairing::fixed_reference);
    const auto b = register_sequence(ph.frames, c, Pairing::sequential);
    ASSERT_EQ(a.size(), 1u);
    ASSERT_EQ(b.size(), 1u);
    EXPECT_EQ(a[0].u, b[0].u);
}

TEST(Registration, ComposeWithZeroIsIdentity) {
    const Grid g = cube(6);
    const DisplacementField f = random_field(g, 4, 0.8), z(g);
    EXPECT_EQ(compose_fields(f, z).u, f.u);
    const DisplacementField r = compose_fields(z, f);
    for (std::size_t i = 0; i < f.u.size(); ++i) EXPECT_NEAR((r.u[i] - f.u[i]).norm(), 0.0, 1e-12);
}

TEST(Registration, ComposedTranslationsAdd) {
    const Grid g = cube(7);
    DisplacementField a(g), b(g);
    for (Vec3 &u : a.u) u = Vec3(0.5, -1, 0.25);
    for (Vec3 &u : b.u) u = Vec3(1, 2, -3);
    for (const Vec3 &u : compose_fields(a, b).u) EXPECT_EQ(u, Vec3(1.5, 1, -2.75));
    const auto acc = accumulate_sequential({a, b, b});
    ASSERT_EQ(acc.size(), 3u);
    for (const Vec3 &u : acc[2].u) EXPECT_EQ(u, Vec3(2.5, 3, -5.75));
}

TEST(Registration, ComposedPhantomHalfStepsMatchFullStep) {
    const PhantomSpec s;
    const Grid g = s.grid();
    const DisplacementField ed_1 = analytic_field(s, 1, g);
    // Frame 1 -> frame 2 in frame-1 coordinates: y -> c + s2/s1 (y - c).
    DisplacementField f12(g);
    const Vec3 c = s.center(), r = s.scale(2).cwiseQuotient(s.scale(1));
    for (std::size_t i = 0; i < f12.u.size(); ++i) {
        const Vec3 y = g.point(i);
        f12.u[i] = c + r.cwiseProduct(y - c) - y;
    }
    const DisplacementField full = analytic_field(s, 2, g), comp = compose_fields(ed_1, f12);
    const Phantom ph = generate(s);
    EXPECT_LT(mean_endpoint_error(comp, full, ph.labels[0], kMyocardium), 0.1);
}

TEST(Registration, WarpImageZeroAndUnitShift) {
    const ImageVolume m = random_image(cube(6), 12);
    EXPECT_EQ(warp_image(m, DisplacementField(m.grid)).data, m.data);
    DisplacementField t(m.grid);
    for (Vec3 &u : t.u) u = Vec3(1, 0, 0);
    const ImageVolume w = warp_image(m, t);
    for (int k = 0; k < 6; ++k)
        for (int j = 0; j < 6; ++j)
            for (int i = 0; i < 5; ++i) EXPECT_EQ(w.at(i, j, k), m.at(i + 1, j, k));
}

TEST(Registration, TrueFieldAlignsPhantomFrames) {
    // Pulling the peak frame back with the true field reproduces ED up to the
    // noise of the two frames (variance 2 sigma^2) and partial-volume edges.
    const PhantomSpec s;
    const Phantom ph = generate(s);
    const ImageVolume &ed = ph.frames.frames[0], &es = ph.frames.frames[3];
    const ImageVolume w = warp_image(es, ph.fields[3]);
    double mse = 0.0, raw = 0.0;
    for (std::size_t i = 0; i < ed.data.size(); ++i) {
        mse += std::pow(double(w.data[i]) - ed.data[i], 2);
        raw += std::pow(double(es.data[i]) - ed.data[i], 2);
    }
    EXPECT_LT(mse, 1.5 * 2.0 * s.noise_sigma * s.noise_sigma * double(ed.data.size()));
    EXPECT_LT(mse, 0.5 * raw);
}

TEST(Registration, EndpointErrorOfTranslation) {
    const Grid g = cube(4);
    DisplacementField a(g), b(g);
    for (Vec3 &u : b.u) u = Vec3(0, 3, 4);
    LabelVolume m(g, kMyocardium);
    EXPECT_DOUBLE_EQ(mean_endpoint_error(a, b, m, kMyocardium), 5.0);
    EXPECT_THROW(mean_endpoint_error(a, b, m, kLvPool), Error);
}
