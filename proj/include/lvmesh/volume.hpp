#pragma once

// Voxel grids, scalar/label volumes, trilinear sampling and MetaImage I/O.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "lvmesh/common.hpp"

namespace lvmesh {

struct Grid {
    std::array<int, 3> dims{0, 0, 0};
    Vec3 spacing{1.0, 1.0, 1.0};
    Vec3 origin{0.0, 0.0, 0.0};

    std::size_t voxel_count() const {
        return std::size_t(dims[0]) * std::size_t(dims[1]) * std::size_t(dims[2]);
    }
    // x-fastest, z-slowest.
    std::size_t index(int i, int j, int k) const {
        return (std::size_t(k) * std::size_t(dims[1]) + std::size_t(j)) * std::size_t(dims[0]) + std::size_t(i);
    }
    Vec3 point(int i, int j, int k) const {
        return {origin.x() + i * spacing.x(), origin.y() + j * spacing.y(), origin.z() + k * spacing.z()};
    }
    Vec3 point(std::size_t idx) const;
    // Continuous voxel coordinates of a physical point.
    Vec3 to_voxel(const Vec3 &p) const { return (p - origin).cwiseQuotient(spacing); }

    bool contains_voxel(int i, int j, int k) const {
        return i >= 0 && j >= 0 && k >= 0 && i < dims[0] && j < dims[1] && k < dims[2];
    }
    void validate() const;

    bool operator==(const Grid &o) const { return dims == o.dims && spacing == o.spacing && origin == o.origin; }
    bool operator!=(const Grid &o) const { return !(*this == o); }
};

enum class ElementKind { u8, i16, f32 };

const char *to_string(ElementKind k);

// Scalar image. Values are held as float; integer kinds are exactly representable.
struct ImageVolume {
    Grid grid;
    ElementKind kind = ElementKind::f32;
    std::vector<float> data;

    ImageVolume() = default;
    ImageVolume(const Grid &g, ElementKind k = ElementKind::f32, float fill = 0.0f)
        : grid(g), kind(k), data(g.voxel_count(), fill) {}

    float at(int i, int j, int k) const { return data[grid.index(i, j, k)]; }
    float &at(int i, int j, int k) { return data[grid.index(i, j, k)]; }
    void validate() const;
};

// ACDC label convention.
enum Label : std::uint8_t {
    kBackground = 0,
    kRvPool = 1,
    kMyocardium = 2,
    kLvPool = 3,
};

struct LabelVolume {
    Grid grid;
    std::vector<std::uint8_t> data;

    LabelVolume() = default;
    explicit LabelVolume(const Grid &g, std::uint8_t fill = kBackground) : grid(g), data(g.voxel_count(), fill) {}

    std::uint8_t at(int i, int j, int k) const { return data[grid.index(i, j, k)]; }
    std::uint8_t &at(int i, int j, int k) { return data[grid.index(i, j, k)]; }
    std::size_t count(std::uint8_t label) const;
    void validate() const;
};

struct FrameSequence {
    std::vector<ImageVolume> frames;

    std::size_t n_frames() const { return frames.size(); }
    const Grid &grid() const { return frames.front().grid; }
    // N_T >= 2 and a shared grid.
    void validate() const;
};

// Trilinear interpolation at a physical point. Outside the grid the coordinate
// is clamped to the nearest edge voxel.
double sample_trilinear(const ImageVolume &vol, const Vec3 &p_mm);
// Same, also returning the spatial gradient (per mm) of the interpolant.
// Clamped directions have zero derivative.
double sample_trilinear(const ImageVolume &vol, const Vec3 &p_mm, Vec3 &grad);

// Resample along z to a new slice thickness, preserving the physical extent
// of the slab. Images use linear interpolation, labels nearest neighbour.
ImageVolume resample_z(const ImageVolume &vol, double new_sz_mm);
LabelVolume resample_z(const LabelVolume &vol, double new_sz_mm);

// Halve resolution by 2x2x2 block averaging (edge voxels replicated for odd sizes).
// Axes already at or below `min_dim` are left untouched.
ImageVolume downsample2(const ImageVolume &vol, int min_dim = 8);

ImageVolume gaussian_smooth(const ImageVolume &vol, double sigma_vox);

// -------------------------------------------------------------------------
// MetaImage (.mhd header + .raw payload), little-endian, x-fastest.

struct MetaImage {
    Grid grid;
    ElementKind kind = ElementKind::f32;
    int channels = 1;
    std::vector<float> values; // voxel_count * channels, channel-interleaved
};

MetaImage read_meta(const std::filesystem::path &header);
void write_meta(const MetaImage &img, const std::filesystem::path &header);

ImageVolume read_mhd(const std::filesystem::path &header);
LabelVolume read_labels_mhd(const std::filesystem::path &header);
void write_mhd(const ImageVolume &vol, const std::filesystem::path &header);
// Labels are always stored as u8.
void write_mhd(const LabelVolume &vol, const std::filesystem::path &header);

} // namespace lvmesh
