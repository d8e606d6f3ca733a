#include "lvmesh/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace lvmesh {

void PhantomSpec::validate() const {
    grid().validate();
    for (int a = 0; a < 3; ++a) {
        require(endo_semi_axes[a] > 0.0, "phantom: endocardial semi-axes must be positive");
        require(epi_semi_axes[a] > endo_semi_axes[a], "phantom: epicardial semi-axes must exceed endocardial ones");
    }
    require(n_frames >= 2, "phantom: need at least two frames");
    require(radial_contraction > 0.0 && radial_contraction < 1.0, "phantom: radial contraction must be in (0,1)");
    require(longitudinal_shortening >= 0.0 && longitudinal_shortening < 1.0,
            "phantom: longitudinal shortening must be in [0,1)");
    require(noise_sigma >= 0.0, "phantom: noise sigma must be non-negative");
    require(misalignment_mm >= 0.0, "phantom: misalignment amplitude must be non-negative");
    require(base_z > -endo_semi_axes.z() && base_z < endo_semi_axes.z(),
            "phantom: basal cut must intersect the blood pool");

    // Thinnest wall at peak contraction.
    double gmax = 0.0;
    for (int t = 0; t < n_frames; ++t) gmax = std::max(gmax, profile(t));
    const double s_min = std::min(1.0 - radial_contraction * gmax, 1.0 - longitudinal_shortening * gmax);
    double wall = 1e300;
    for (int a = 0; a < 3; ++a) wall = std::min(wall, epi_semi_axes[a] - endo_semi_axes[a]);
    require(wall * s_min >= spacing.maxCoeff(), "phantom: wall thinner than one voxel at peak contraction");
}

Grid PhantomSpec::grid() const {
    Grid g;
    g.dims = dims;
    g.spacing = spacing;
    g.origin = Vec3::Zero();
    return g;
}

Vec3 PhantomSpec::center() const {
    Vec3 c;
    for (int a = 0; a < 3; ++a) c[a] = 0.5 * (dims[a] - 1) * spacing[a];
    // Shell spans [-epi_z, base_z] about the centre; centre that span in the grid.
    c.z() += 0.5 * (epi_semi_axes.z() - base_z);
    return c;
}

double PhantomSpec::profile(int t) const {
    const double s = std::sin(std::numbers::pi * double(t) / double(n_frames - 1));
    return s * s;
}

Vec3 PhantomSpec::scale(int t) const {
    const double g = profile(t);
    const double s = 1.0 - radial_contraction * g;
    return {s, s, 1.0 - longitudinal_shortening * g};
}

Vec3 PhantomSpec::forward(int t, const Vec3 &x) const {
    const Vec3 c = center();
    return c + scale(t).cwiseProduct(x - c);
}

Vec3 PhantomSpec::inverse(int t, const Vec3 &y) const {
    const Vec3 c = center();
    return c + (y - c).cwiseQuotient(scale(t));
}

std::uint8_t PhantomSpec::label_at(int t, const Vec3 &p) const {
    const Vec3 q = inverse(t, p) - center();
    if (q.z() > base_z) return kBackground;
    const double epi = q.cwiseQuotient(epi_semi_axes).squaredNorm();
    if (epi > 1.0) return kBackground;
    const double endo = q.cwiseQuotient(endo_semi_axes).squaredNorm();
    return endo > 1.0 ? kMyocardium : kLvPool;
}

namespace {

float intensity_of(std::uint8_t label) {
    switch (label) {
    case kMyocardium: return kMyocardiumIntensity;
    case kLvPool: return kPoolIntensity;
    default: return kBackgroundIntensity;
    }
}

} // namespace

DisplacementField analytic_field(const PhantomSpec &spec, int t, const Grid &grid) {
    DisplacementField f(grid);
    for (std::size_t i = 0; i < f.u.size(); ++i) {
        const Vec3 x = grid.point(i);
        f.u[i] = spec.forward(t, x) - x;
    }
    return f;
}

Phantom generate(const PhantomSpec &spec) {
    spec.validate();
    const Grid g = spec.grid();
    Phantom ph;
    for (int t = 0; t < spec.n_frames; ++t) {
        LabelVolume lab(g);
        ImageVolume img(g, ElementKind::f32);
        std::mt19937_64 rng(spec.seed + std::uint64_t(t));
        std::normal_distribution<double> noise(0.0, spec.noise_sigma > 0.0 ? spec.noise_sigma : 1.0);
        for (int k = 0; k < g.dims[2]; ++k)
            for (int j = 0; j < g.dims[1]; ++j)
                for (int i = 0; i < g.dims[0]; ++i) {
                    const Vec3 p = g.point(i, j, k);
                    lab.at(i, j, k) = spec.label_at(t, p);
                    // 2x2x2 supersampling gives partial-volume edges.
                    double acc = 0.0;
                    for (int s = 0; s < 8; ++s) {
                        const Vec3 off((s & 1 ? 0.25 : -0.25) * g.spacing.x(), (s & 2 ? 0.25 : -0.25) * g.spacing.y(),
                                       (s & 4 ? 0.25 : -0.25) * g.spacing.z());
                        acc += intensity_of(spec.label_at(t, p + off));
                    }
                    double v = acc / 8.0;
                    if (spec.noise_sigma > 0.0) v += noise(rng);
                    img.at(i, j, k) = float(v);
                }
        ph.frames.frames.push_back(std::move(img));
        ph.labels.push_back(std::move(lab));
        ph.fields.push_back(analytic_field(spec, t, g));
    }
    return ph;
}

// -------------------------------------------------------------------------

template <typename Vol> static void shift_slice_impl(Vol &vol, int k, SliceOffset s) {
    if (s.dx == 0 && s.dy == 0) return;
    const int nx = vol.grid.dims[0], ny = vol.grid.dims[1];
    auto src = vol.data;
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const int si = std::clamp(i - s.dx, 0, nx - 1);
            const int sj = std::clamp(j - s.dy, 0, ny - 1);
            vol.at(i, j, k) = src[vol.grid.index(si, sj, k)];
        }
}

void shift_slice(ImageVolume &vol, int k, SliceOffset s) { shift_slice_impl(vol, k, s); }
void shift_slice(LabelVolume &vol, int k, SliceOffset s) { shift_slice_impl(vol, k, s); }

Misaligned inject_misalignment(const std::vector<LabelVolume> &labels, const FrameSequence &frames, double amplitude,
                               std::uint64_t seed) {
    require(amplitude >= 0.0, "misalignment: amplitude must be non-negative");
    require(!labels.empty() && labels.size() == frames.n_frames(), "misalignment: one label volume per frame required");
    const Grid &g = labels.front().grid;
    const int nx = g.dims[0], ny = g.dims[1], nz = g.dims[2];

    Misaligned out{frames, labels, std::vector<SliceOffset>(std::size_t(nz))};
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(-amplitude, amplitude);
    for (int k = 0; k < nz; ++k) {
        if (amplitude > 0.0) {
            const double dx = uni(rng), dy = uni(rng);
            out.shifts[k] = {int(std::lround(dx / g.spacing.x())), int(std::lround(dy / g.spacing.y()))};
        }
    }

    for (std::size_t f = 0; f < labels.size(); ++f) {
        const LabelVolume &lab = labels[f];
        for (int k = 0; k < nz; ++k) {
            const SliceOffset s = out.shifts[k];
            // Anatomy must stay in view.
            for (int j = 0; j < ny; ++j)
                for (int i = 0; i < nx; ++i) {
                    if (lab.at(i, j, k) == kBackground) continue;
                    const int ti = i + s.dx, tj = j + s.dy;
                    if (ti < 0 || tj < 0 || ti >= nx || tj >= ny)
                        throw Error("misalignment: shift of slice " + std::to_string(k) +
                                    " pushes anatomy out of the field of view");
                }
            shift_slice(out.labels[f], k, s);
            shift_slice(out.frames.frames[f], k, s);
        }
    }
    return out;
}

} // namespace lvmesh
