#pragma once

// Point-triangle distance, an exact nearest-triangle query tree and a
// ray-parity inside test over closed triangle meshes.

#include <vector>

#include "lvmesh/mesh.hpp"

namespace lvmesh::geom {

// Closest point of triangle (a,b,c) to p.
Vec3 closest_point_on_triangle(const Vec3 &p, const Vec3 &a, const Vec3 &b, const Vec3 &c);
double point_triangle_distance(const Vec3 &p, const Vec3 &a, const Vec3 &b, const Vec3 &c);

// Bounding-volume hierarchy over triangles; queries are exact.
class TriangleTree {
  public:
    TriangleTree(const std::vector<Vec3> &vertices, const std::vector<Tri> &triangles);
    // Distance from p to the nearest triangle.
    double distance(const Vec3 &p) const;
    bool empty() const { return tris_.empty(); }

  private:
    struct Node {
        Vec3 lo, hi;
        int left = -1, right = -1; // children, or -1 for a leaf
        int begin = 0, end = 0;    // leaf range in order_
    };
    int build(int begin, int end);
    void query(int node, const Vec3 &p, double &best2) const;

    std::vector<Vec3> verts_;
    std::vector<Tri> tris_;
    std::vector<Vec3> centroid_;
    std::vector<int> order_;
    std::vector<Node> nodes_;
};

// Parity of crossings of a +z ray; the ray is offset in x and y by a small
// fixed jitter so it never grazes an edge or vertex of an axis-aligned mesh.
class RayParity {
  public:
    explicit RayParity(const SurfaceMesh &surface);
    bool inside(const Vec3 &p) const;
    // Sorted z values where the jittered vertical line through (x, y) crosses
    // the surface.
    std::vector<double> crossings(double x, double y) const;

  private:
    void bin_range(double lo, double hi, int axis, int &b0, int &b1) const;

    std::vector<Vec3> verts_;
    std::vector<Tri> tris_;
    double jx_ = 0.0, jy_ = 0.0;
    double x0_ = 0.0, y0_ = 0.0, bw_ = 1.0, bh_ = 1.0;
    int nbx_ = 1, nby_ = 1;
    std::vector<std::vector<int>> bins_;
};

} // namespace lvmesh::geom
