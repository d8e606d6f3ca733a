#pragma once

// Deformable registration of each frame against the fixed ED frame.
//
// Two backends share one field convention (fixed = ED, moving = frame t, u maps
// ED points into frame t):
//  - dense: a per-voxel field minimising MSE + lambda * mean(|Laplacian u|^2),
//    optimised directly with Adam-style moments over a coarse-to-fine pyramid;
//  - ffd:   a cubic B-spline control lattice minimising sampled MSE plus a
//    bending-energy penalty with a decaying-gain stochastic gradient descent.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lvmesh/field.hpp"
#include "lvmesh/volume.hpp"

namespace lvmesh::reg {

enum class Backend { dense, ffd };
enum class Pairing { fixed_reference, sequential };

Backend parse_backend(const std::string &s);
Pairing parse_pairing(const std::string &s);
const char *to_string(Backend b);
const char *to_string(Pairing p);

struct RegistrationConfig {
    Backend backend = Backend::dense;
    double lambda = 1e-3;
    int levels = 3;

    // dense backend
    int dense_iterations = 250; // per pyramid level
    double learning_rate = 0.08; // mm per step at unit voxel spacing
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon_rel = 10.0; // epsilon as a fraction of the RMS gradient
    // Gaussian presmoothing of both images (voxels) before the pyramid.
    double image_smoothing_vox = 1.0;
    // Gaussian width (mm) of the update parameterization u = base + G v.
    double gradient_smoothing_mm = 16.0;

    // ffd backend
    int ffd_iterations = 500; // per pyramid level
    int ffd_samples = 2048;
    double ffd_gain_a = 1.0; // mm
    double ffd_gain_A = 20.0;
    double ffd_gain_alpha = 0.602;
    double ffd_control_spacing_vox = 8.0;

    std::uint64_t seed = 42;

    void validate() const;
};

struct LossTerms {
    double total = 0.0;
    double similarity = 0.0;
    double smooth = 0.0;
};

// similarity = mean_x (F(x) - M(x + u(x)))^2, trilinear and clamped;
// smooth     = mean over voxels and components of (Lap u)^2, 7-point stencil,
//              replicate boundaries, physical units.
LossTerms loss_dense(const ImageVolume &fixed, const ImageVolume &moving, const DisplacementField &u, double lambda);
// Same terms plus the exact gradient with respect to every field entry.
LossTerms loss_dense_gradient(const ImageVolume &fixed, const ImageVolume &moving, const DisplacementField &u,
                              double lambda, std::vector<Vec3> &grad);

struct IterationRecord {
    int level = 0;
    int iteration = 0;
    double total = 0.0;
    double similarity = 0.0;
    double smooth = 0.0;
};

struct RegistrationLog {
    std::vector<IterationRecord> iterations;
    // Full-resolution loss of each level's final field, coarse to fine.
    std::vector<LossTerms> level_final;
    LossTerms zero_field;
    // Full-resolution field at the end of each level (filled when keep_fields).
    bool keep_fields = false;
    std::vector<DisplacementField> level_fields;
};

DisplacementField register_dense(const ImageVolume &fixed, const ImageVolume &moving, const RegistrationConfig &cfg,
                                 RegistrationLog *log = nullptr);

// -------------------------------------------------------------------------
// Cubic B-spline free-form deformation.

// Uniform cubic B-spline basis pieces, t in [0,1).
struct BSpline {
    static double b0(double t) { return (1 - t) * (1 - t) * (1 - t) / 6.0; }
    static double b1(double t) { return (3 * t * t * t - 6 * t * t + 4) / 6.0; }
    static double b2(double t) { return (-3 * t * t * t + 3 * t * t + 3 * t + 1) / 6.0; }
    static double b3(double t) { return t * t * t / 6.0; }
    static void weights(double t, double w[4]);
    static void first(double t, double d[4]);
    static void second(double t, double d[4]);
};

struct FfdTransform {
    Grid image_grid;                  // fixed image domain
    std::array<int, 3> lattice_dims{}; // control points per axis
    Vec3 lattice_origin = Vec3::Zero();
    Vec3 control_spacing = Vec3::Ones(); // mm
    std::vector<Vec3> coeffs;            // control displacements, x-fastest

    // Lattice covering `image_grid` with one extra control ring below and two
    // above each axis.
    static FfdTransform covering(const Grid &image_grid, double spacing_vox);

    std::size_t control_index(int i, int j, int k) const {
        return (std::size_t(k) * lattice_dims[1] + std::size_t(j)) * lattice_dims[0] + std::size_t(i);
    }
    Vec3 control_point(int i, int j, int k) const {
        return lattice_origin + Vec3(i, j, k).cwiseProduct(control_spacing);
    }
    Vec3 displacement(const Vec3 &p) const;
    // Bending-energy density |d2T|^2 (xx+yy+zz + 2(xy+xz+yz)) at p.
    double bending_density(const Vec3 &p) const;
    double max_coeff_norm() const;
};

// Mean bending-energy density over the voxel centres of the image grid.
double bending_energy(const FfdTransform &ffd);

FfdTransform register_ffd(const ImageVolume &fixed, const ImageVolume &moving, const RegistrationConfig &cfg,
                          RegistrationLog *log = nullptr);

DisplacementField to_dense(const FfdTransform &ffd);

// -------------------------------------------------------------------------

// fixed_reference: field t registers (frame 0, frame t), t = 1..N-1.
// sequential:      field t registers (frame t-1, frame t).
// Progress callback receives the pair index before each registration.
std::vector<DisplacementField> register_sequence(const FrameSequence &frames, const RegistrationConfig &cfg,
                                                 Pairing pairing, std::vector<RegistrationLog> *logs = nullptr,
                                                 const std::function<void(int)> &progress = {});

// (f_ab o f_bc)(x) = u_ab(x) + u_bc(x + u_ab(x)), on f_ab's grid.
DisplacementField compose_fields(const DisplacementField &f_ab, const DisplacementField &f_bc);

// Chain sequential fields into ED -> t fields (index t-1 -> ED->t).
std::vector<DisplacementField> accumulate_sequential(const std::vector<DisplacementField> &sequential);

// out(x) = moving(x + u(x)), trilinear and clamped; output on the field grid.
ImageVolume warp_image(const ImageVolume &moving, const DisplacementField &field);

// Mean |u_a - u_b| over voxels where mask == label (mm).
double mean_endpoint_error(const DisplacementField &a, const DisplacementField &b, const LabelVolume &mask,
                           std::uint8_t label);

} // namespace lvmesh::reg
