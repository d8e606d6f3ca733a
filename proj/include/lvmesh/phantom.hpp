#pragma once

// Synthetic beating left ventricle: a truncated thick ellipsoidal shell that
// contracts about its centre with analytic ground-truth motion.

#include <cstdint>
#include <vector>

#include "lvmesh/field.hpp"
#include "lvmesh/volume.hpp"

namespace lvmesh {

struct PhantomSpec {
    std::array<int, 3> dims{64, 64, 64};
    Vec3 spacing{1.0, 1.0, 1.0};
    Vec3 endo_semi_axes{12.0, 16.0, 22.0};
    Vec3 epi_semi_axes{20.0, 24.0, 30.0};
    double base_z = 10.0; // basal cut, mm above the ventricle centre
    int n_frames = 6;
    double radial_contraction = 0.25;      // c
    double longitudinal_shortening = 0.15; // l
    double noise_sigma = 8.0;              // u8 intensity scale
    double misalignment_mm = 0.0;
    std::uint64_t seed = 1;

    void validate() const;

    Grid grid() const;
    // Ventricle centre: grid centre in-plane, truncated shell centred along z.
    Vec3 center() const;
    // g(t) = sin^2(pi t / (N_T - 1)).
    double profile(int t) const;
    // Diagonal of the scaling applied at frame t.
    Vec3 scale(int t) const;
    // Analytic ED -> frame t map and its inverse.
    Vec3 forward(int t, const Vec3 &x_ed) const;
    Vec3 inverse(int t, const Vec3 &x_t) const;
    // Label of a physical point in frame t (shell region predicate).
    std::uint8_t label_at(int t, const Vec3 &p) const;
};

struct Phantom {
    FrameSequence frames;
    std::vector<LabelVolume> labels;
    std::vector<DisplacementField> fields; // fields[t]: ED -> frame t
};

constexpr float kMyocardiumIntensity = 180.0f;
constexpr float kPoolIntensity = 90.0f;
constexpr float kBackgroundIntensity = 30.0f;

Phantom generate(const PhantomSpec &spec);

// Analytic displacement ED -> frame t sampled on `grid`.
DisplacementField analytic_field(const PhantomSpec &spec, int t, const Grid &grid);

// Per-slice in-plane translation, in voxels.
struct SliceOffset {
    int dx = 0;
    int dy = 0;
    bool operator==(const SliceOffset &) const = default;
};

struct Misaligned {
    FrameSequence frames;
    std::vector<LabelVolume> labels;
    std::vector<SliceOffset> shifts; // one per z-slice, shared by all frames
};

// Translate every z-slice by a uniform random in-plane shift drawn from
// [-amplitude, amplitude]^2 mm and rounded to whole voxels. The same shift is
// applied to the slice in every frame and mask.
Misaligned inject_misalignment(const std::vector<LabelVolume> &labels, const FrameSequence &frames, double amplitude_mm,
                               std::uint64_t seed);

// Slice translation with edge clamping; shared by the phantom and align.
void shift_slice(ImageVolume &vol, int k, SliceOffset s);
void shift_slice(LabelVolume &vol, int k, SliceOffset s);

} // namespace lvmesh
