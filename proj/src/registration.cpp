#include "lvmesh/registration.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace lvmesh::reg {

Backend parse_backend(const std::string &s) {
    if (s == "dense") return Backend::dense;
    if (s == "ffd") return Backend::ffd;
    throw Error("unknown registration backend '" + s + "' (expected dense or ffd)");
}

Pairing parse_pairing(const std::string &s) {
    if (s == "fixed_reference" || s == "fixed-reference") return Pairing::fixed_reference;
    if (s == "sequential") return Pairing::sequential;
    throw Error("unknown pairing '" + s + "' (expected fixed_reference or sequential)");
}

const char *to_string(Backend b) { return b == Backend::dense ? "dense" : "ffd"; }
const char *to_string(Pairing p) { return p == Pairing::fixed_reference ? "fixed_reference" : "sequential"; }

void RegistrationConfig::validate() const {
    require(std::isfinite(lambda) && lambda >= 0.0, "registration: lambda must be >= 0");
    require(levels >= 1, "registration: levels must be >= 1");
    require(dense_iterations >= 1 && ffd_iterations >= 1, "registration: iterations must be >= 1");
    require(ffd_samples >= 1, "registration: ffd samples must be >= 1");
    require(learning_rate > 0.0, "registration: learning rate must be positive");
    require(ffd_gain_a > 0.0 && ffd_gain_A >= 0.0 && ffd_gain_alpha > 0.0, "registration: invalid ffd gain schedule");
    require(ffd_control_spacing_vox >= 1.0, "registration: ffd control spacing must be >= 1 voxel");
}

// -------------------------------------------------------------------------
// Dense loss

namespace {

// Discrete Laplacian of the field at every voxel (replicate boundaries).
std::vector<Vec3> laplacian(const DisplacementField &u) {
    const Grid &g = u.grid;
    std::vector<Vec3> lap(u.u.size());
    const Vec3 inv_h2 = g.spacing.cwiseProduct(g.spacing).cwiseInverse();
    for (int k = 0; k < g.dims[2]; ++k)
        for (int j = 0; j < g.dims[1]; ++j)
            for (int i = 0; i < g.dims[0]; ++i) {
                const Vec3 &c = u.at(i, j, k);
                const Vec3 lx = u.at(std::min(i + 1, g.dims[0] - 1), j, k) + u.at(std::max(i - 1, 0), j, k) - 2.0 * c;
                const Vec3 ly = u.at(i, std::min(j + 1, g.dims[1] - 1), k) + u.at(i, std::max(j - 1, 0), k) - 2.0 * c;
                const Vec3 lz = u.at(i, j, std::min(k + 1, g.dims[2] - 1)) + u.at(i, j, std::max(k - 1, 0)) - 2.0 * c;
                lap[g.index(i, j, k)] = lx * inv_h2.x() + ly * inv_h2.y() + lz * inv_h2.z();
            }
    return lap;
}

LossTerms evaluate(const ImageVolume &fixed, const ImageVolume &moving, const DisplacementField &u, double lambda,
                   std::vector<Vec3> *grad) {
    require(u.grid == fixed.grid, "loss: field grid does not match the fixed image grid");
    require(u.u.size() == fixed.data.size(), "loss: field size does not match the fixed image");
    const Grid &g = fixed.grid;
    const std::size_t n = g.voxel_count();
    const double inv_n = 1.0 / double(n);

    if (grad) grad->assign(n, Vec3::Zero());

    double sim = 0.0;
    std::size_t idx = 0;
    Vec3 gm;
    for (int k = 0; k < g.dims[2]; ++k)
        for (int j = 0; j < g.dims[1]; ++j)
            for (int i = 0; i < g.dims[0]; ++i, ++idx) {
                const Vec3 p = g.point(i, j, k) + u.u[idx];
                const double r = sample_trilinear(moving, p, gm) - double(fixed.data[idx]);
                sim += r * r;
                if (grad) (*grad)[idx] = (2.0 * inv_n * r) * gm;
            }
    sim *= inv_n;

    const std::vector<Vec3> lap = laplacian(u);
    double smooth = 0.0;
    for (const auto &l : lap) smooth += l.squaredNorm();
    smooth *= inv_n / 3.0;

    if (grad && lambda > 0.0) {
        const Vec3 inv_h2 = g.spacing.cwiseProduct(g.spacing).cwiseInverse();
        const double c = 2.0 * lambda * inv_n / 3.0;
        auto &gr = *grad;
        for (int k = 0; k < g.dims[2]; ++k)
            for (int j = 0; j < g.dims[1]; ++j)
                for (int i = 0; i < g.dims[0]; ++i) {
                    const std::size_t self = g.index(i, j, k);
                    const Vec3 w = c * lap[self];
                    const std::size_t xp = g.index(std::min(i + 1, g.dims[0] - 1), j, k);
                    const std::size_t xm = g.index(std::max(i - 1, 0), j, k);
                    const std::size_t yp = g.index(i, std::min(j + 1, g.dims[1] - 1), k);
                    const std::size_t ym = g.index(i, std::max(j - 1, 0), k);
                    const std::size_t zp = g.index(i, j, std::min(k + 1, g.dims[2] - 1));
                    const std::size_t zm = g.index(i, j, std::max(k - 1, 0));
                    gr[xp] += w * inv_h2.x();
                    gr[xm] += w * inv_h2.x();
                    gr[yp] += w * inv_h2.y();
                    gr[ym] += w * inv_h2.y();
                    gr[zp] += w * inv_h2.z();
                    gr[zm] += w * inv_h2.z();
                    gr[self] -= 2.0 * (inv_h2.x() + inv_h2.y() + inv_h2.z()) * w;
                }
    }
    return {sim + lambda * smooth, sim, smooth};
}

std::pair<ImageVolume, ImageVolume> normalized_pair(const ImageVolume &fixed, const ImageVolume &moving) {
    double scale = 0.0;
    for (float v : fixed.data) scale = std::max(scale, double(std::abs(v)));
    for (float v : moving.data) scale = std::max(scale, double(std::abs(v)));
    if (scale == 0.0) scale = 1.0;
    auto norm = [scale](const ImageVolume &in) {
        ImageVolume out = in;
        out.kind = ElementKind::f32;
        for (auto &v : out.data) v = float(double(v) / scale);
        return out;
    };
    return {norm(fixed), norm(moving)};
}

// One pass of a 1D filter along axis a, replicate boundaries.
template <typename Line>
void along_axes(std::vector<Vec3> &v, const Grid &g, Line &&line) {
    std::vector<Vec3> in, out;
    const std::array<std::size_t, 3> stride{1, std::size_t(g.dims[0]), std::size_t(g.dims[0]) * std::size_t(g.dims[1])};
    for (int a = 0; a < 3; ++a) {
        const int n = g.dims[a];
        const int b = (a + 1) % 3, c = (a + 2) % 3;
        in.resize(std::size_t(n));
        out.resize(std::size_t(n));
        for (int q = 0; q < g.dims[c]; ++q)
            for (int p = 0; p < g.dims[b]; ++p) {
                const std::size_t base = std::size_t(p) * stride[b] + std::size_t(q) * stride[c];
                for (int i = 0; i < n; ++i) in[std::size_t(i)] = v[base + std::size_t(i) * stride[a]];
                line(in, out);
                for (int i = 0; i < n; ++i) v[base + std::size_t(i) * stride[a]] = out[std::size_t(i)];
            }
    }
}

// Gaussian smoothing of a vector field in place (sigma in voxels). Wide
// kernels use three box passes with matching variance.
void smooth_vectors(std::vector<Vec3> &v, const Grid &g, double sigma) {
    if (sigma <= 0.0) return;
    if (sigma < 3.0) {
        const int radius = int(std::ceil(3.0 * sigma));
        std::vector<double> kernel(std::size_t(2 * radius + 1));
        double ksum = 0.0;
        for (int r = -radius; r <= radius; ++r)
            ksum += kernel[std::size_t(r + radius)] = std::exp(-0.5 * r * r / (sigma * sigma));
        for (auto &w : kernel) w /= ksum;
        along_axes(v, g, [&](const std::vector<Vec3> &in, std::vector<Vec3> &out) {
            const int n = int(in.size());
            for (int i = 0; i < n; ++i) {
                Vec3 acc = Vec3::Zero();
                for (int r = -radius; r <= radius; ++r) acc += kernel[std::size_t(r + radius)] * in[std::size_t(std::clamp(i + r, 0, n - 1))];
                out[std::size_t(i)] = acc;
            }
        });
        return;
    }
    const int r = std::max(1, int(std::lround(0.5 * (std::sqrt(1.0 + 4.0 * sigma * sigma) - 1.0))));
    const double inv = 1.0 / double(2 * r + 1);
    for (int pass = 0; pass < 3; ++pass)
        along_axes(v, g, [&](const std::vector<Vec3> &in, std::vector<Vec3> &out) {
            const int n = int(in.size());
            auto at = [&](int i) { return in[std::size_t(std::clamp(i, 0, n - 1))]; };
            Vec3 acc = Vec3::Zero();
            for (int i = -r; i <= r; ++i) acc += at(i);
            for (int i = 0; i < n; ++i) {
                out[std::size_t(i)] = acc * inv;
                acc += at(i + r + 1) - at(i - r);
            }
        });
}

} // namespace

LossTerms loss_dense(const ImageVolume &fixed, const ImageVolume &moving, const DisplacementField &u, double lambda) {
    return evaluate(fixed, moving, u, lambda, nullptr);
}

LossTerms loss_dense_gradient(const ImageVolume &fixed, const ImageVolume &moving, const DisplacementField &u,
                              double lambda, std::vector<Vec3> &grad) {
    return evaluate(fixed, moving, u, lambda, &grad);
}

DisplacementField register_dense(const ImageVolume &fixed, const ImageVolume &moving, const RegistrationConfig &cfg,
                                 RegistrationLog *log) {
    cfg.validate();
    fixed.validate();
    moving.validate();
    auto [f0, m0] = normalized_pair(fixed, moving);

    std::vector<ImageVolume> fp{gaussian_smooth(f0, cfg.image_smoothing_vox)},
        mp{gaussian_smooth(m0, cfg.image_smoothing_vox)};
    for (int l = 1; l < cfg.levels; ++l) {
        fp.push_back(downsample2(fp.back()));
        mp.push_back(downsample2(mp.back()));
    }

    DisplacementField field(fp.back().grid);
    std::vector<Vec3> grad;
    const LossTerms zero = loss_dense(f0, m0, DisplacementField(f0.grid), cfg.lambda);
    if (log) log->zero_field = zero;
    DisplacementField accepted(f0.grid);
    double accepted_loss = zero.total;

    for (int level = cfg.levels - 1; level >= 0; --level) {
        const ImageVolume &F = fp[std::size_t(level)];
        const ImageVolume &M = mp[std::size_t(level)];
        // u = base + G v: base carries the coarser solution, Adam acts on the
        // latent v and G (Gaussian) keeps each update spatially coherent.
        const DisplacementField base = resample_field(field, F.grid);
        field = base;
        std::vector<Vec3> latent(field.u.size(), Vec3::Zero()), smoothed;
        const double n = double(F.grid.voxel_count());
        const double lr0 = cfg.learning_rate * F.grid.spacing.minCoeff();
        const double sigma = cfg.gradient_smoothing_mm / F.grid.spacing.minCoeff();
        std::vector<Vec3> m1(field.u.size(), Vec3::Zero()), m2(field.u.size(), Vec3::Zero());
        double b1t = 1.0, b2t = 1.0;
        for (int it = 0; it < cfg.dense_iterations; ++it) {
            const LossTerms L = loss_dense_gradient(F, M, field, cfg.lambda, grad);
            if (!std::isfinite(L.total))
                throw Error("register_dense: non-finite loss at level " + std::to_string(level) + ", iteration " +
                            std::to_string(it));
            if (log) log->iterations.push_back({level, it, L.total, L.similarity, L.smooth});

            smooth_vectors(grad, F.grid, sigma);
            const double lr = lr0 * (1.0 - 0.9 * double(it) / double(cfg.dense_iterations));
            b1t *= cfg.adam_beta1;
            b2t *= cfg.adam_beta2;
            double vmean = 0.0;
            for (std::size_t i = 0; i < field.u.size(); ++i) {
                const Vec3 gi = grad[i] * n; // per-voxel scale; Adam is otherwise scale-free
                m1[i] = cfg.adam_beta1 * m1[i] + (1.0 - cfg.adam_beta1) * gi;
                m2[i] = cfg.adam_beta2 * m2[i] + (1.0 - cfg.adam_beta2) * gi.cwiseProduct(gi);
                vmean += m2[i].sum();
            }
            // Denominator floor relative to the field-wide RMS gradient, so
            // weak gradients in flat regions do not become full-size steps.
            const double eps = cfg.adam_epsilon_rel * std::sqrt(vmean / (3.0 * n * (1.0 - b2t))) + 1e-12;
            for (std::size_t i = 0; i < field.u.size(); ++i) {
                const Vec3 mh = m1[i] / (1.0 - b1t);
                const Vec3 vh = m2[i] / (1.0 - b2t);
                latent[i] -= lr * mh.cwiseQuotient((vh.cwiseSqrt().array() + eps).matrix());
            }
            smoothed = latent;
            smooth_vectors(smoothed, F.grid, sigma);
            for (std::size_t i = 0; i < field.u.size(); ++i) field.u[i] = base.u[i] + smoothed[i];
        }
        // A level that ends worse than the previous one (at full resolution)
        // is discarded.
        DisplacementField full = resample_field(field, f0.grid);
        LossTerms L = loss_dense(f0, m0, full, cfg.lambda);
        if (!std::isfinite(L.total)) throw Error("register_dense: non-finite loss after level " + std::to_string(level));
        if (L.total > accepted_loss) {
            full = accepted;
            L = loss_dense(f0, m0, full, cfg.lambda);
            field = resample_field(accepted, F.grid);
        } else {
            accepted = full;
            accepted_loss = L.total;
        }
        if (log) {
            log->level_final.push_back(L);
            if (log->keep_fields) log->level_fields.push_back(std::move(full));
        }
    }
    return accepted;
}

// -------------------------------------------------------------------------
// FFD

void BSpline::weights(double t, double w[4]) {
    w[0] = b0(t);
    w[1] = b1(t);
    w[2] = b2(t);
    w[3] = b3(t);
}

void BSpline::first(double t, double d[4]) {
    d[0] = -0.5 * (1 - t) * (1 - t);
    d[1] = (9 * t * t - 12 * t) / 6.0;
    d[2] = (-9 * t * t + 6 * t + 3) / 6.0;
    d[3] = 0.5 * t * t;
}

void BSpline::second(double t, double d[4]) {
    d[0] = 1 - t;
    d[1] = 3 * t - 2;
    d[2] = -3 * t + 1;
    d[3] = t;
}

FfdTransform FfdTransform::covering(const Grid &g, double spacing_vox) {
    g.validate();
    require(spacing_vox >= 1.0, "ffd: control spacing must be at least one voxel");
    FfdTransform f;
    f.image_grid = g;
    f.control_spacing = g.spacing * spacing_vox;
    for (int a = 0; a < 3; ++a) {
        const double extent = (g.dims[a] - 1) * g.spacing[a];
        f.lattice_dims[a] = int(std::floor(extent / f.control_spacing[a] + 1e-9)) + 4;
        f.lattice_origin[a] = g.origin[a] - f.control_spacing[a];
    }
    f.coeffs.assign(std::size_t(f.lattice_dims[0]) * f.lattice_dims[1] * f.lattice_dims[2], Vec3::Zero());
    return f;
}

namespace {

struct Support {
    std::array<int, 3> base;
    std::array<double, 3> t;
};

Support support_of(const FfdTransform &f, const Vec3 &p) {
    Support s;
    for (int a = 0; a < 3; ++a) {
        const double c = (p[a] - f.lattice_origin[a]) / f.control_spacing[a];
        s.base[a] = std::clamp(int(std::floor(c)) - 1, 0, f.lattice_dims[a] - 4);
        s.t[a] = c - double(s.base[a] + 1);
    }
    return s;
}

struct Derivs {
    Vec3 xx, yy, zz, xy, xz, yz;
};

// Second derivatives of the transform at p and, optionally, accumulate the
// gradient of scale * bending density into `grad`.
Derivs second_derivatives(const FfdTransform &f, const Support &s, std::vector<Vec3> *grad, double scale) {
    double w[3][4], d1[3][4], d2[3][4];
    for (int a = 0; a < 3; ++a) {
        BSpline::weights(s.t[a], w[a]);
        BSpline::first(s.t[a], d1[a]);
        BSpline::second(s.t[a], d2[a]);
    }
    const Vec3 h = f.control_spacing;
    Derivs D{Vec3::Zero(), Vec3::Zero(), Vec3::Zero(), Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};
    for (int c = 0; c < 4; ++c)
        for (int b = 0; b < 4; ++b)
            for (int a = 0; a < 4; ++a) {
                const Vec3 &q = f.coeffs[f.control_index(s.base[0] + a, s.base[1] + b, s.base[2] + c)];
                D.xx += d2[0][a] * w[1][b] * w[2][c] * q;
                D.yy += w[0][a] * d2[1][b] * w[2][c] * q;
                D.zz += w[0][a] * w[1][b] * d2[2][c] * q;
                D.xy += d1[0][a] * d1[1][b] * w[2][c] * q;
                D.xz += d1[0][a] * w[1][b] * d1[2][c] * q;
                D.yz += w[0][a] * d1[1][b] * d1[2][c] * q;
            }
    D.xx /= h.x() * h.x();
    D.yy /= h.y() * h.y();
    D.zz /= h.z() * h.z();
    D.xy /= h.x() * h.y();
    D.xz /= h.x() * h.z();
    D.yz /= h.y() * h.z();
    if (grad) {
        for (int c = 0; c < 4; ++c)
            for (int b = 0; b < 4; ++b)
                for (int a = 0; a < 4; ++a) {
                    const Vec3 g = 2.0 * scale *
                                   (D.xx * (d2[0][a] * w[1][b] * w[2][c] / (h.x() * h.x())) +
                                    D.yy * (w[0][a] * d2[1][b] * w[2][c] / (h.y() * h.y())) +
                                    D.zz * (w[0][a] * w[1][b] * d2[2][c] / (h.z() * h.z())) +
                                    2.0 * D.xy * (d1[0][a] * d1[1][b] * w[2][c] / (h.x() * h.y())) +
                                    2.0 * D.xz * (d1[0][a] * w[1][b] * d1[2][c] / (h.x() * h.z())) +
                                    2.0 * D.yz * (w[0][a] * d1[1][b] * d1[2][c] / (h.y() * h.z())));
                    (*grad)[f.control_index(s.base[0] + a, s.base[1] + b, s.base[2] + c)] += g;
                }
    }
    return D;
}

double density(const Derivs &D) {
    return D.xx.squaredNorm() + D.yy.squaredNorm() + D.zz.squaredNorm() +
           2.0 * (D.xy.squaredNorm() + D.xz.squaredNorm() + D.yz.squaredNorm());
}

} // namespace

Vec3 FfdTransform::displacement(const Vec3 &p) const {
    const Support s = support_of(*this, p);
    double w[3][4];
    for (int a = 0; a < 3; ++a) BSpline::weights(s.t[a], w[a]);
    Vec3 out = Vec3::Zero();
    for (int c = 0; c < 4; ++c)
        for (int b = 0; b < 4; ++b) {
            const double wbc = w[1][b] * w[2][c];
            for (int a = 0; a < 4; ++a)
                out += (w[0][a] * wbc) * coeffs[control_index(s.base[0] + a, s.base[1] + b, s.base[2] + c)];
        }
    return out;
}

double FfdTransform::bending_density(const Vec3 &p) const {
    return density(second_derivatives(*this, support_of(*this, p), nullptr, 0.0));
}

double FfdTransform::max_coeff_norm() const {
    double m = 0.0;
    for (const auto &c : coeffs) m = std::max(m, c.norm());
    return m;
}

double bending_energy(const FfdTransform &ffd) {
    const Grid &g = ffd.image_grid;
    double acc = 0.0;
    for (std::size_t i = 0; i < g.voxel_count(); ++i) acc += ffd.bending_density(g.point(i));
    return acc / double(g.voxel_count());
}

FfdTransform register_ffd(const ImageVolume &fixed, const ImageVolume &moving, const RegistrationConfig &cfg,
                          RegistrationLog *log) {
    cfg.validate();
    fixed.validate();
    moving.validate();
    auto [f0, m0] = normalized_pair(fixed, moving);
    FfdTransform ffd = FfdTransform::covering(f0.grid, cfg.ffd_control_spacing_vox);
    const Grid &g = f0.grid;
    const std::size_t nvox = g.voxel_count();

    std::mt19937_64 rng(cfg.seed);
    std::uniform_int_distribution<std::size_t> pick(0, nvox - 1);
    std::vector<Vec3> grad(ffd.coeffs.size());
    if (log) log->zero_field = loss_dense(f0, m0, DisplacementField(g), 0.0);

    for (int level = cfg.levels - 1; level >= 0; --level) {
        const double sigma = level == 0 ? 0.0 : std::ldexp(1.0, level - 1);
        const ImageVolume F = gaussian_smooth(f0, sigma);
        const ImageVolume M = gaussian_smooth(m0, sigma);
        for (int it = 0; it < cfg.ffd_iterations; ++it) {
            std::fill(grad.begin(), grad.end(), Vec3::Zero());
            double sim = 0.0, bend = 0.0;
            const double inv_s = 1.0 / double(cfg.ffd_samples);
            for (int s = 0; s < cfg.ffd_samples; ++s) {
                const std::size_t idx = pick(rng);
                const Vec3 x = g.point(idx);
                const Support sup = support_of(ffd, x);
                double w[3][4];
                for (int a = 0; a < 3; ++a) BSpline::weights(sup.t[a], w[a]);
                Vec3 T = Vec3::Zero();
                for (int c = 0; c < 4; ++c)
                    for (int b = 0; b < 4; ++b)
                        for (int a = 0; a < 4; ++a)
                            T += (w[0][a] * w[1][b] * w[2][c]) *
                                 ffd.coeffs[ffd.control_index(sup.base[0] + a, sup.base[1] + b, sup.base[2] + c)];
                Vec3 gm;
                const double r = sample_trilinear(M, x + T, gm) - double(F.data[idx]);
                sim += r * r * inv_s;
                const Vec3 gr = (2.0 * r * inv_s) * gm;
                for (int c = 0; c < 4; ++c)
                    for (int b = 0; b < 4; ++b)
                        for (int a = 0; a < 4; ++a)
                            grad[ffd.control_index(sup.base[0] + a, sup.base[1] + b, sup.base[2] + c)] +=
                                (w[0][a] * w[1][b] * w[2][c]) * gr;
                if (cfg.lambda > 0.0)
                    bend += inv_s * density(second_derivatives(ffd, sup, &grad, cfg.lambda * inv_s));
            }
            const double total = sim + cfg.lambda * bend;
            if (!std::isfinite(total))
                throw Error("register_ffd: non-finite loss at level " + std::to_string(level) + ", iteration " +
                            std::to_string(it));
            if (log) log->iterations.push_back({level, it, total, sim, bend});

            double gmax = 0.0;
            for (const auto &v : grad) gmax = std::max(gmax, v.norm());
            if (gmax == 0.0) continue;
            const double gain = cfg.ffd_gain_a / std::pow(double(it) + cfg.ffd_gain_A, cfg.ffd_gain_alpha);
            for (std::size_t i = 0; i < grad.size(); ++i) ffd.coeffs[i] -= (gain / gmax) * grad[i];
        }
        if (log) log->level_final.push_back(loss_dense(f0, m0, to_dense(ffd), 0.0));
    }
    return ffd;
}

DisplacementField to_dense(const FfdTransform &ffd) {
    DisplacementField out(ffd.image_grid);
    for (std::size_t i = 0; i < out.u.size(); ++i) out.u[i] = ffd.displacement(ffd.image_grid.point(i));
    return out;
}

// -------------------------------------------------------------------------

std::vector<DisplacementField> register_sequence(const FrameSequence &frames, const RegistrationConfig &cfg,
                                                 Pairing pairing, std::vector<RegistrationLog> *logs,
                                                 const std::function<void(int)> &progress) {
    frames.validate();
    cfg.validate();
    std::vector<DisplacementField> out;
    if (logs) logs->clear();
    for (std::size_t t = 1; t < frames.n_frames(); ++t) {
        if (progress) progress(int(t));
        const ImageVolume &fixed = pairing == Pairing::fixed_reference ? frames.frames[0] : frames.frames[t - 1];
        const ImageVolume &moving = frames.frames[t];
        RegistrationConfig c = cfg;
        c.seed = cfg.seed + t;
        RegistrationLog log;
        if (cfg.backend == Backend::dense)
            out.push_back(register_dense(fixed, moving, c, &log));
        else
            out.push_back(to_dense(register_ffd(fixed, moving, c, &log)));
        if (logs) logs->push_back(std::move(log));
    }
    return out;
}

DisplacementField compose_fields(const DisplacementField &f_ab, const DisplacementField &f_bc) {
    f_ab.validate();
    f_bc.validate();
    DisplacementField out(f_ab.grid);
    for (std::size_t i = 0; i < out.u.size(); ++i) {
        const Vec3 x = f_ab.grid.point(i);
        out.u[i] = f_ab.u[i] + f_bc.sample(x + f_ab.u[i]);
    }
    return out;
}

std::vector<DisplacementField> accumulate_sequential(const std::vector<DisplacementField> &seq) {
    std::vector<DisplacementField> out;
    for (const auto &f : seq) out.push_back(out.empty() ? f : compose_fields(out.back(), f));
    return out;
}

ImageVolume warp_image(const ImageVolume &moving, const DisplacementField &field) {
    ImageVolume out(field.grid, ElementKind::f32);
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = float(sample_trilinear(moving, field.grid.point(i) + field.u[i]));
    return out;
}

double mean_endpoint_error(const DisplacementField &a, const DisplacementField &b, const LabelVolume &mask,
                           std::uint8_t label) {
    require(a.grid == b.grid && a.grid == mask.grid, "endpoint error: grids differ");
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.u.size(); ++i)
        if (mask.data[i] == label) {
            acc += (a.u[i] - b.u[i]).norm();
            ++n;
        }
    require(n > 0, "endpoint error: mask has no voxels with the requested label");
    return acc / double(n);
}

} // namespace lvmesh::reg
