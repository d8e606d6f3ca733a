#include "lvmesh/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/distributions/students_t.hpp>

#include "lvmesh/geometry.hpp"

namespace lvmesh {

double dice(const LabelVolume &a, const LabelVolume &b, std::uint8_t label) {
    require(a.grid == b.grid, "dice: masks are on different grids");
    require(a.data.size() == b.data.size(), "dice: mask sizes differ");
    std::size_t na = 0, nb = 0, both = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const bool x = a.data[i] == label, y = b.data[i] == label;
        na += x;
        nb += y;
        both += x && y;
    }
    if (na + nb == 0) return 1.0;
    return 2.0 * double(both) / double(na + nb);
}

LabelVolume voxelize(const SurfaceMesh &surface, const Grid &grid, std::uint8_t label) {
    grid.validate();
    const SurfaceCheck c = check_surface(surface);
    require(c.watertight, "voxelize: surface is not watertight");
    LabelVolume out(grid);
    const geom::RayParity parity(surface);
    for (int j = 0; j < grid.dims[1]; ++j)
        for (int i = 0; i < grid.dims[0]; ++i) {
            const Vec3 p0 = grid.point(i, j, 0);
            const std::vector<double> z = parity.crossings(p0.x(), p0.y());
            if (z.empty()) continue;
            std::size_t below = 0;
            for (int k = 0; k < grid.dims[2]; ++k) {
                const double zk = grid.point(i, j, k).z();
                while (below < z.size() && z[below] < zk) ++below;
                if (below % 2 == 1) out.at(i, j, k) = label;
            }
        }
    return out;
}

namespace {

std::vector<double> vertex_to_surface(const SurfaceMesh &from, const SurfaceMesh &to) {
    require(!from.vertices.empty() && !to.triangles.empty(), "surface distance: empty mesh");
    const geom::TriangleTree tree(to.vertices, to.triangles);
    std::vector<double> d(from.vertices.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = tree.distance(from.vertices[i]);
    return d;
}

double mean(const std::vector<double> &v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / double(v.size());
}

} // namespace

double mad(const SurfaceMesh &a, const SurfaceMesh &b) {
    return 0.5 * (mean(vertex_to_surface(a, b)) + mean(vertex_to_surface(b, a)));
}

double hausdorff(const SurfaceMesh &a, const SurfaceMesh &b) {
    const auto ab = vertex_to_surface(a, b), ba = vertex_to_surface(b, a);
    return std::max(*std::max_element(ab.begin(), ab.end()), *std::max_element(ba.begin(), ba.end()));
}

NodeDistance node_distance(const std::vector<Vec3> &a, const std::vector<Vec3> &b) {
    require(a.size() == b.size(), "node_distance: vertex counts differ (" + std::to_string(a.size()) + " vs " +
                                      std::to_string(b.size()) + ")");
    require(!a.empty(), "node_distance: empty meshes");
    NodeDistance r;
    r.per_vertex.resize(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = (a[i] - b[i]).norm();
        r.per_vertex[i] = d;
        r.mean += d;
        r.max = std::max(r.max, d);
    }
    r.mean /= double(a.size());
    return r;
}

NodeDistance node_distance(const SurfaceMesh &a, const SurfaceMesh &b) {
    require(a.triangles == b.triangles, "node_distance: surfaces have different connectivity");
    return node_distance(a.vertices, b.vertices);
}

NodeDistance node_distance(const TetMesh &a, const TetMesh &b) {
    require(a.tets == b.tets, "node_distance: tet meshes have different connectivity");
    return node_distance(a.vertices, b.vertices);
}

const char *to_string(Significance s) {
    switch (s) {
    case Significance::p05:
        return "**";
    case Significance::p10:
        return "*";
    default:
        return "ns";
    }
}

Significance tier_of(double p) {
    if (p < 0.05) return Significance::p05;
    if (p < 0.1) return Significance::p10;
    return Significance::ns;
}

MeanStd mean_std(const std::vector<double> &v) {
    MeanStd r;
    if (v.empty()) return r;
    r.mean = mean(v);
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - r.mean) * (x - r.mean);
        r.std = std::sqrt(ss / double(v.size() - 1));
    }
    return r;
}

TTest ttest(const std::vector<double> &a, const std::vector<double> &b) {
    require(a.size() >= 2 && b.size() >= 2, "ttest: each sample needs at least two values");
    const MeanStd sa = mean_std(a), sb = mean_std(b);
    const double na = double(a.size()), nb = double(b.size());
    const double va = sa.std * sa.std / na, vb = sb.std * sb.std / nb;
    TTest r;
    const double diff = sa.mean - sb.mean;
    if (va + vb == 0.0) {
        if (diff == 0.0) return r;
        r.t = diff > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
        r.df = na + nb - 2.0;
        r.p = 0.0;
        r.tier = Significance::p05;
        return r;
    }
    r.t = diff / std::sqrt(va + vb);
    r.df = (va + vb) * (va + vb) / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    const boost::math::students_t dist(r.df);
    r.p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t))));
    r.tier = tier_of(r.p);
    return r;
}

} // namespace lvmesh
