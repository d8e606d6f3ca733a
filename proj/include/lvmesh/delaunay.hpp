#pragma once

// Incremental Bowyer-Watson Delaunay tetrahedralization in 3D.
//
// Predicates run on coordinates carrying a tiny deterministic perturbation
// (relative 1e-9 of the bounding box) so cospherical and coplanar input
// behaves as if in general position; each predicate is evaluated in double
// precision with an error filter and falls back to exact rational arithmetic.

#include <cstdint>
#include <vector>

#include "lvmesh/mesh.hpp"

namespace lvmesh::delaunay {

// Sign of det[b-a, c-a, d-a] (positive for a right-handed tet).
int orient3d(const Vec3 &a, const Vec3 &b, const Vec3 &c, const Vec3 &d);
// Positive when e lies strictly inside the circumsphere of the positively
// oriented tet (a,b,c,d).
int insphere(const Vec3 &a, const Vec3 &b, const Vec3 &c, const Vec3 &d, const Vec3 &e);

// Number of predicate calls that needed the exact fallback (diagnostics).
std::uint64_t exact_fallbacks();

class Triangulation {
  public:
    // `bbox_lo`, `bbox_hi` must contain every point that will be inserted.
    Triangulation(const Vec3 &bbox_lo, const Vec3 &bbox_hi, std::uint64_t seed = 1);

    // Insert points in the given order; returns their ids (0-based, in call order).
    void insert(const std::vector<Vec3> &points);
    // Insert with a spatially coherent (Morton) order; ids still follow input order.
    void insert_sorted(const std::vector<Vec3> &points);

    std::size_t point_count() const { return pts_.size() - 4; }
    // Tets not touching the enclosing super-tet, over point ids, oriented
    // positively in perturbed coordinates.
    std::vector<Tet> tets() const;
    // Every cell, including those touching the super-tet, whose corners are
    // numbered -4..-1.
    std::vector<Tet> all_tets() const;

  private:
    struct Cell {
        std::array<int, 4> v;
        std::array<int, 4> n; // n[i] faces v[i]
        bool alive = true;
    };
    void insert_one(const Vec3 &p);
    int locate(int start, const Vec3 &p) const;
    int new_cell(const std::array<int, 4> &v);

    std::vector<Vec3> pts_;  // perturbed; super-tet occupies the first four
    std::vector<Vec3> orig_; // unperturbed input, same indexing
    std::vector<Cell> cells_;
    std::vector<int> free_;
    std::vector<std::uint32_t> mark_;
    std::uint32_t stamp_ = 0;
    int last_ = 0;
    double jitter_ = 0.0;
    std::uint64_t rng_;
};

} // namespace lvmesh::delaunay
