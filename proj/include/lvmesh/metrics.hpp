#pragma once

// Overlap, surface distance and correspondence metrics, and the two-sample
// t-test used to compare methods.

#include <string>
#include <vector>

#include "lvmesh/mesh.hpp"
#include "lvmesh/volume.hpp"

namespace lvmesh {

// 2|A n B| / (|A| + |B|) over voxels carrying `label`; 1 when both are empty.
double dice(const LabelVolume &a, const LabelVolume &b, std::uint8_t label);

// Voxels whose centre is inside the closed surface get `label`.
LabelVolume voxelize(const SurfaceMesh &surface, const Grid &grid, std::uint8_t label = kMyocardium);

// Symmetric mean vertex-to-surface distance.
double mad(const SurfaceMesh &a, const SurfaceMesh &b);
// Symmetric maximum vertex-to-surface distance.
double hausdorff(const SurfaceMesh &a, const SurfaceMesh &b);

struct NodeDistance {
    double mean = 0.0;
    double max = 0.0;
    std::vector<double> per_vertex;
};

NodeDistance node_distance(const std::vector<Vec3> &a, const std::vector<Vec3> &b);
NodeDistance node_distance(const SurfaceMesh &a, const SurfaceMesh &b);
NodeDistance node_distance(const TetMesh &a, const TetMesh &b);

enum class Significance { ns, p10, p05 };
const char *to_string(Significance s); // "ns", "*", "**"

struct TTest {
    double t = 0.0;
    double df = 0.0;
    double p = 1.0;
    Significance tier = Significance::ns;
};

// Welch two-sample t-test, two-sided.
TTest ttest(const std::vector<double> &a, const std::vector<double> &b);
Significance tier_of(double p);

struct FrameMetrics {
    int frame = 0;
    double dice = 0.0;
    double mad = 0.0;
    double hausdorff = 0.0;
    double node_mean = 0.0;
    double node_max = 0.0;
};

struct MeanStd {
    double mean = 0.0;
    double std = 0.0; // sample standard deviation (n - 1)
};

MeanStd mean_std(const std::vector<double> &v);

} // namespace lvmesh
