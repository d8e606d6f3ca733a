#pragma once

// Slice misalignment correction: stack short-axis slices so the LV blood-pool
// centroids are collinear.

#include <optional>
#include <vector>

#include "lvmesh/phantom.hpp"
#include "lvmesh/volume.hpp"

namespace lvmesh::align {

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

// Mean in-plane position (mm) of voxels carrying `label` in slice k.
std::optional<Point2> centroid2d(const LabelVolume &mask, int k, std::uint8_t label = kLvPool);

struct AppliedShift {
    int frame = 0;
    int slice = 0;
    SliceOffset offset; // voxels
};

struct Corrected {
    FrameSequence frames;
    std::vector<LabelVolume> masks;
    std::vector<AppliedShift> shifts; // frame-major, slice-minor
};

// Reference axis: vertical line through the component-wise (lower) median of
// the ED slice centroids. Every slice of every frame is translated by whole
// voxels so its own centroid lands on that axis; slices without the label
// inherit the shift of the nearest labeled slice.
Corrected correct(const FrameSequence &frames, const std::vector<LabelVolume> &masks, std::uint8_t label = kLvPool);

} // namespace lvmesh::align
