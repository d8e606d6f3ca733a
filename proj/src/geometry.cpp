#include "lvmesh/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lvmesh::geom {

Vec3 closest_point_on_triangle(const Vec3 &p, const Vec3 &a, const Vec3 &b, const Vec3 &c) {
    const Vec3 ab = b - a, ac = c - a, ap = p - a;
    const double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0.0 && d2 <= 0.0) return a;

    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3) return b;

    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + ab * (d1 / (d1 - d3));

    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0.0 && d5 <= d6) return c;

    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + ac * (d2 / (d2 - d6));

    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));

    const double denom = va + vb + vc;
    if (!(std::abs(denom) > 0.0)) {
        // Degenerate triangle: nearest of its three edges.
        auto seg = [&](const Vec3 &s, const Vec3 &e) {
            const Vec3 d = e - s;
            const double l2 = d.squaredNorm();
            const double t = l2 > 0.0 ? std::clamp((p - s).dot(d) / l2, 0.0, 1.0) : 0.0;
            return Vec3(s + t * d);
        };
        Vec3 best = seg(a, b);
        for (const Vec3 &q : {seg(b, c), seg(c, a)})
            if ((q - p).squaredNorm() < (best - p).squaredNorm()) best = q;
        return best;
    }
    const double v = vb / denom, w = vc / denom;
    return a + ab * v + ac * w;
}

double point_triangle_distance(const Vec3 &p, const Vec3 &a, const Vec3 &b, const Vec3 &c) {
    return (closest_point_on_triangle(p, a, b, c) - p).norm();
}

// -------------------------------------------------------------------------

TriangleTree::TriangleTree(const std::vector<Vec3> &vertices, const std::vector<Tri> &triangles)
    : verts_(vertices), tris_(triangles) {
    centroid_.reserve(tris_.size());
    for (const Tri &t : tris_) centroid_.push_back((verts_[t[0]] + verts_[t[1]] + verts_[t[2]]) / 3.0);
    order_.resize(tris_.size());
    std::iota(order_.begin(), order_.end(), 0);
    if (!tris_.empty()) {
        nodes_.reserve(2 * tris_.size());
        build(0, int(tris_.size()));
    }
}

int TriangleTree::build(int begin, int end) {
    Node node;
    node.lo = Vec3::Constant(1e300);
    node.hi = Vec3::Constant(-1e300);
    for (int i = begin; i < end; ++i)
        for (int k : tris_[order_[i]]) {
            node.lo = node.lo.cwiseMin(verts_[k]);
            node.hi = node.hi.cwiseMax(verts_[k]);
        }
    const int id = int(nodes_.size());
    nodes_.push_back(node);
    if (end - begin <= 4) {
        nodes_[id].begin = begin;
        nodes_[id].end = end;
        return id;
    }
    int axis;
    (node.hi - node.lo).maxCoeff(&axis);
    const int mid = (begin + end) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int a, int b) { return centroid_[a][axis] < centroid_[b][axis]; });
    const int l = build(begin, mid);
    const int r = build(mid, end);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
}

namespace {

double box_distance2(const Vec3 &p, const Vec3 &lo, const Vec3 &hi) {
    const Vec3 d = (lo - p).cwiseMax(p - hi).cwiseMax(Vec3::Zero());
    return d.squaredNorm();
}

} // namespace

void TriangleTree::query(int id, const Vec3 &p, double &best2) const {
    const Node &n = nodes_[id];
    if (n.left < 0) {
        for (int i = n.begin; i < n.end; ++i) {
            const Tri &t = tris_[order_[i]];
            const double d2 = (closest_point_on_triangle(p, verts_[t[0]], verts_[t[1]], verts_[t[2]]) - p).squaredNorm();
            best2 = std::min(best2, d2);
        }
        return;
    }
    const double dl = box_distance2(p, nodes_[n.left].lo, nodes_[n.left].hi);
    const double dr = box_distance2(p, nodes_[n.right].lo, nodes_[n.right].hi);
    const int first = dl <= dr ? n.left : n.right, second = dl <= dr ? n.right : n.left;
    const double df = std::min(dl, dr), ds = std::max(dl, dr);
    if (df <= best2) query(first, p, best2);
    if (ds <= best2) query(second, p, best2);
}

double TriangleTree::distance(const Vec3 &p) const {
    require(!tris_.empty(), "distance query on an empty mesh");
    double best2 = 1e300;
    query(0, p, best2);
    return std::sqrt(best2);
}

// -------------------------------------------------------------------------

namespace {

// Sign of the 2D orientation of (a, b, p) evaluated with the endpoints in a
// canonical order, so two triangles sharing an edge see exactly opposite
// results. Zero is folded to the positive side.
bool left_of(const Vec3 &a, const Vec3 &b, double px, double py, bool a_first) {
    const Vec3 &s = a_first ? a : b;
    const Vec3 &e = a_first ? b : a;
    const double o = (e.x() - s.x()) * (py - s.y()) - (e.y() - s.y()) * (px - s.x());
    const bool pos = o >= 0.0;
    return a_first ? pos : !pos;
}

bool lex_less(const Vec3 &a, const Vec3 &b) {
    if (a.x() != b.x()) return a.x() < b.x();
    if (a.y() != b.y()) return a.y() < b.y();
    return a.z() < b.z();
}

} // namespace

RayParity::RayParity(const SurfaceMesh &surface) : verts_(surface.vertices), tris_(surface.triangles) {
    Vec3 lo = Vec3::Constant(1e300), hi = Vec3::Constant(-1e300);
    for (const Vec3 &v : verts_) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
    if (tris_.empty()) return;
    const double diag = std::max((hi - lo).norm(), 1e-9);
    jx_ = 1.37e-7 * diag;
    jy_ = 0.71e-7 * diag;
    const int nb = std::clamp(int(std::sqrt(double(tris_.size()) / 4.0)), 1, 512);
    nbx_ = nby_ = nb;
    x0_ = lo.x();
    y0_ = lo.y();
    bw_ = std::max((hi.x() - lo.x()) / nb, 1e-12);
    bh_ = std::max((hi.y() - lo.y()) / nb, 1e-12);
    bins_.assign(std::size_t(nbx_) * std::size_t(nby_), {});
    for (std::size_t t = 0; t < tris_.size(); ++t) {
        const Tri &tri = tris_[t];
        double xl = 1e300, xh = -1e300, yl = 1e300, yh = -1e300;
        for (int k : tri) {
            xl = std::min(xl, verts_[k].x());
            xh = std::max(xh, verts_[k].x());
            yl = std::min(yl, verts_[k].y());
            yh = std::max(yh, verts_[k].y());
        }
        int bx0, bx1, by0, by1;
        bin_range(xl, xh, 0, bx0, bx1);
        bin_range(yl, yh, 1, by0, by1);
        for (int by = by0; by <= by1; ++by)
            for (int bx = bx0; bx <= bx1; ++bx) bins_[std::size_t(by) * std::size_t(nbx_) + std::size_t(bx)].push_back(int(t));
    }
}

void RayParity::bin_range(double lo, double hi, int axis, int &b0, int &b1) const {
    const double o = axis == 0 ? x0_ : y0_, w = axis == 0 ? bw_ : bh_;
    const int n = axis == 0 ? nbx_ : nby_;
    b0 = std::clamp(int(std::floor((lo - o) / w)), 0, n - 1);
    b1 = std::clamp(int(std::floor((hi - o) / w)), 0, n - 1);
}

std::vector<double> RayParity::crossings(double x, double y) const {
    std::vector<double> zs;
    if (tris_.empty()) return zs;
    const double px = x + jx_, py = y + jy_;
    if (px < x0_ || py < y0_ || px > x0_ + bw_ * nbx_ || py > y0_ + bh_ * nby_) return zs;
    int bx, bx1, by, by1;
    bin_range(px, px, 0, bx, bx1);
    bin_range(py, py, 1, by, by1);
    for (int t : bins_[std::size_t(by) * std::size_t(nbx_) + std::size_t(bx)]) {
        const Vec3 &a = verts_[tris_[t][0]], &b = verts_[tris_[t][1]], &c = verts_[tris_[t][2]];
        const double area2 = (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
        if (area2 == 0.0) continue; // edge-on to the ray
        const bool ccw = area2 > 0.0;
        const bool e0 = left_of(a, b, px, py, lex_less(a, b));
        const bool e1 = left_of(b, c, px, py, lex_less(b, c));
        const bool e2 = left_of(c, a, px, py, lex_less(c, a));
        if (!(e0 == ccw && e1 == ccw && e2 == ccw)) continue;
        // Barycentric z at (px, py).
        const double l1 = ((c.x() - b.x()) * (py - b.y()) - (c.y() - b.y()) * (px - b.x())) / area2;
        const double l2 = ((a.x() - c.x()) * (py - c.y()) - (a.y() - c.y()) * (px - c.x())) / area2;
        const double l3 = 1.0 - l1 - l2;
        zs.push_back(l1 * a.z() + l2 * b.z() + l3 * c.z());
    }
    std::sort(zs.begin(), zs.end());
    return zs;
}

bool RayParity::inside(const Vec3 &p) const {
    const auto zs = crossings(p.x(), p.y());
    const auto above = zs.end() - std::upper_bound(zs.begin(), zs.end(), p.z());
    return (above % 2) == 1;
}

} // namespace lvmesh::geom
