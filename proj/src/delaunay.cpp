#include "lvmesh/delaunay.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/multiprecision/cpp_int.hpp>

namespace lvmesh::delaunay {

namespace {

using Exact = boost::multiprecision::cpp_rational;

std::uint64_t g_exact = 0;

std::uint64_t splitmix(std::uint64_t &s) {
    std::uint64_t z = (s += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

double unit(std::uint64_t &s) { return double(splitmix(s) >> 11) * (1.0 / 9007199254740992.0) * 2.0 - 1.0; }

template <typename T> T det3(const T &a0, const T &a1, const T &a2, const T &b0, const T &b1, const T &b2, const T &c0,
                             const T &c1, const T &c2) {
    return a0 * (b1 * c2 - b2 * c1) - a1 * (b0 * c2 - b2 * c0) + a2 * (b0 * c1 - b1 * c0);
}

int sign_of(const Exact &x) { return x > 0 ? 1 : (x < 0 ? -1 : 0); }

} // namespace

std::uint64_t exact_fallbacks() { return g_exact; }

int orient3d(const Vec3 &a, const Vec3 &b, const Vec3 &c, const Vec3 &d) {
    const Vec3 u = b - a, v = c - a, w = d - a;
    const double det = det3(u.x(), u.y(), u.z(), v.x(), v.y(), v.z(), w.x(), w.y(), w.z());
    const Vec3 au = u.cwiseAbs(), av = v.cwiseAbs(), aw = w.cwiseAbs();
    const double perm = au.x() * (av.y() * aw.z() + av.z() * aw.y()) + au.y() * (av.x() * aw.z() + av.z() * aw.x()) +
                        au.z() * (av.x() * aw.y() + av.y() * aw.x());
    const double bound = 1e-14 * perm;
    if (det > bound) return 1;
    if (det < -bound) return -1;
    ++g_exact;
    const Exact ax(a.x()), ay(a.y()), az(a.z());
    const Exact ux = Exact(b.x()) - ax, uy = Exact(b.y()) - ay, uz = Exact(b.z()) - az;
    const Exact vx = Exact(c.x()) - ax, vy = Exact(c.y()) - ay, vz = Exact(c.z()) - az;
    const Exact wx = Exact(d.x()) - ax, wy = Exact(d.y()) - ay, wz = Exact(d.z()) - az;
    return sign_of(det3(ux, uy, uz, vx, vy, vz, wx, wy, wz));
}

int insphere(const Vec3 &a, const Vec3 &b, const Vec3 &c, const Vec3 &d, const Vec3 &e) {
    // Rows (x - e, |x - e|^2); the raw determinant is negative for e inside a
    // positively oriented tet.
    const Vec3 p[4] = {a - e, b - e, c - e, d - e};
    double l[4], al[4];
    for (int i = 0; i < 4; ++i) al[i] = l[i] = p[i].squaredNorm();
    auto m3 = [&](int i, int j, int k) { return det3(p[i].x(), p[i].y(), p[i].z(), p[j].x(), p[j].y(), p[j].z(), p[k].x(), p[k].y(), p[k].z()); };
    auto pm3 = [&](int i, int j, int k) {
        const Vec3 x = p[i].cwiseAbs(), y = p[j].cwiseAbs(), z = p[k].cwiseAbs();
        return x.x() * (y.y() * z.z() + y.z() * z.y()) + x.y() * (y.x() * z.z() + y.z() * z.x()) +
               x.z() * (y.x() * z.y() + y.y() * z.x());
    };
    const double raw = -l[0] * m3(1, 2, 3) + l[1] * m3(0, 2, 3) - l[2] * m3(0, 1, 3) + l[3] * m3(0, 1, 2);
    const double perm = al[0] * pm3(1, 2, 3) + al[1] * pm3(0, 2, 3) + al[2] * pm3(0, 1, 3) + al[3] * pm3(0, 1, 2);
    const double bound = 1e-13 * perm;
    if (raw > bound) return -1;
    if (raw < -bound) return 1;
    ++g_exact;
    Exact q[4][4];
    const Vec3 *src[4] = {&a, &b, &c, &d};
    const Exact ex(e.x()), ey(e.y()), ez(e.z());
    for (int i = 0; i < 4; ++i) {
        q[i][0] = Exact(src[i]->x()) - ex;
        q[i][1] = Exact(src[i]->y()) - ey;
        q[i][2] = Exact(src[i]->z()) - ez;
        q[i][3] = q[i][0] * q[i][0] + q[i][1] * q[i][1] + q[i][2] * q[i][2];
    }
    auto e3 = [&](int i, int j, int k) {
        return det3(q[i][0], q[i][1], q[i][2], q[j][0], q[j][1], q[j][2], q[k][0], q[k][1], q[k][2]);
    };
    const Exact r = -q[0][3] * e3(1, 2, 3) + q[1][3] * e3(0, 2, 3) - q[2][3] * e3(0, 1, 3) + q[3][3] * e3(0, 1, 2);
    return -sign_of(r);
}

// -------------------------------------------------------------------------

Triangulation::Triangulation(const Vec3 &lo, const Vec3 &hi, std::uint64_t seed) : rng_(seed) {
    const Vec3 c = 0.5 * (lo + hi);
    const double r = std::max((hi - lo).norm(), 1e-9);
    jitter_ = 1e-9 * r;
    // Regular tet with inradius well beyond the box.
    const double D = 30.0 * r;
    const Vec3 dirs[4] = {Vec3(1, 1, 1), Vec3(1, -1, -1), Vec3(-1, 1, -1), Vec3(-1, -1, 1)};
    for (const Vec3 &d : dirs) {
        pts_.push_back(c + D * d.normalized());
        orig_.push_back(pts_.back());
    }
    std::array<int, 4> v{0, 1, 2, 3};
    if (orient3d(pts_[0], pts_[1], pts_[2], pts_[3]) < 0) std::swap(v[0], v[1]);
    Cell cell;
    cell.v = v;
    cell.n = {-1, -1, -1, -1};
    cells_.push_back(cell);
    mark_.push_back(0);
}

int Triangulation::new_cell(const std::array<int, 4> &v) {
    Cell c;
    c.v = v;
    c.n = {-1, -1, -1, -1};
    if (!free_.empty()) {
        const int id = free_.back();
        free_.pop_back();
        cells_[std::size_t(id)] = c;
        return id;
    }
    cells_.push_back(c);
    mark_.push_back(0);
    return int(cells_.size()) - 1;
}

int Triangulation::locate(int start, const Vec3 &p) const {
    int cur = start;
    std::uint64_t s = rng_ ^ std::uint64_t(pts_.size());
    for (std::size_t steps = 0; steps < cells_.size() * 4 + 100; ++steps) {
        const Cell &c = cells_[std::size_t(cur)];
        const int off = int(splitmix(s) & 3);
        int next = -1;
        for (int q = 0; q < 4; ++q) {
            const int i = (q + off) & 3;
            std::array<Vec3, 4> t{pts_[c.v[0]], pts_[c.v[1]], pts_[c.v[2]], pts_[c.v[3]]};
            t[i] = p;
            if (orient3d(t[0], t[1], t[2], t[3]) < 0) {
                next = c.n[i];
                break;
            }
        }
        if (next < 0) {
            // Either inside, or outside the super-tet (impossible for valid input).
            bool inside = true;
            for (int i = 0; i < 4 && inside; ++i) {
                std::array<Vec3, 4> t{pts_[c.v[0]], pts_[c.v[1]], pts_[c.v[2]], pts_[c.v[3]]};
                t[i] = p;
                if (orient3d(t[0], t[1], t[2], t[3]) < 0) inside = false;
            }
            if (!inside) throw Error("delaunay: point outside the enclosing box");
            return cur;
        }
        cur = next;
    }
    throw Error("delaunay: point location did not terminate");
}

void Triangulation::insert_one(const Vec3 &q) {
    const int pid = int(pts_.size());
    std::uint64_t s = rng_ * 0x2545f4914f6cdd1dull + std::uint64_t(pid);
    const Vec3 p = q + jitter_ * Vec3(unit(s), unit(s), unit(s));
    pts_.push_back(p);
    orig_.push_back(q);

    if (last_ < 0 || last_ >= int(cells_.size()) || !cells_[std::size_t(last_)].alive) {
        last_ = 0;
        while (!cells_[std::size_t(last_)].alive) ++last_;
    }
    const int start = locate(last_, p);

    ++stamp_;
    std::vector<int> cavity{start}, stack{start};
    mark_[std::size_t(start)] = stamp_;
    while (!stack.empty()) {
        const int t = stack.back();
        stack.pop_back();
        for (int i = 0; i < 4; ++i) {
            const int o = cells_[std::size_t(t)].n[i];
            if (o < 0 || mark_[std::size_t(o)] == stamp_) continue;
            const Cell &oc = cells_[std::size_t(o)];
            if (insphere(pts_[oc.v[0]], pts_[oc.v[1]], pts_[oc.v[2]], pts_[oc.v[3]], p) > 0) {
                mark_[std::size_t(o)] = stamp_;
                cavity.push_back(o);
                stack.push_back(o);
            }
        }
    }

    struct Open {
        int a, b; // sorted vertex pair on a face through p
        int cell, slot;
    };
    std::vector<Open> open;
    std::vector<int> created;
    for (int t : cavity) {
        for (int i = 0; i < 4; ++i) {
            const int o = cells_[std::size_t(t)].n[i];
            if (o >= 0 && mark_[std::size_t(o)] == stamp_) continue;
            std::array<int, 4> v = cells_[std::size_t(t)].v;
            v[i] = pid;
            const int nc = new_cell(v);
            if (mark_.size() < cells_.size()) mark_.resize(cells_.size(), 0);
            mark_[std::size_t(nc)] = 0;
            cells_[std::size_t(nc)].n[i] = o;
            if (o >= 0)
                for (int j = 0; j < 4; ++j)
                    if (cells_[std::size_t(o)].n[j] == t) cells_[std::size_t(o)].n[j] = nc;
            for (int j = 0; j < 4; ++j) {
                if (j == i) continue;
                int a = -1, b = -1;
                for (int k = 0; k < 4; ++k) {
                    if (k == i || k == j) continue;
                    (a < 0 ? a : b) = v[k];
                }
                if (a > b) std::swap(a, b);
                auto it = std::find_if(open.begin(), open.end(), [&](const Open &f) { return f.a == a && f.b == b; });
                if (it == open.end()) {
                    open.push_back({a, b, nc, j});
                } else {
                    cells_[std::size_t(nc)].n[j] = it->cell;
                    cells_[std::size_t(it->cell)].n[it->slot] = nc;
                    *it = open.back();
                    open.pop_back();
                }
            }
            created.push_back(nc);
        }
    }
    if (!open.empty()) throw Error("delaunay: cavity boundary is not closed");
    // Retire the cavity only now: new cells must not reuse its slots while
    // its neighbour links are still being read.
    for (int t : cavity) {
        cells_[std::size_t(t)].alive = false;
        free_.push_back(t);
    }
    last_ = created.front();
}

void Triangulation::insert(const std::vector<Vec3> &points) {
    for (const Vec3 &p : points) insert_one(p);
}

namespace {

std::uint64_t spread(std::uint64_t x) {
    x &= 0x1fffff;
    x = (x | x << 32) & 0x1f00000000ffffull;
    x = (x | x << 16) & 0x1f0000ff0000ffull;
    x = (x | x << 8) & 0x100f00f00f00f00full;
    x = (x | x << 4) & 0x10c30c30c30c30c3ull;
    x = (x | x << 2) & 0x1249249249249249ull;
    return x;
}

} // namespace

void Triangulation::insert_sorted(const std::vector<Vec3> &points) {
    if (points.empty()) return;
    Vec3 lo = points.front(), hi = points.front();
    for (const Vec3 &p : points) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    const Vec3 ext = (hi - lo).cwiseMax(Vec3::Constant(1e-12));
    std::vector<std::uint64_t> code(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        const Vec3 r = (points[i] - lo).cwiseQuotient(ext) * 2097151.0;
        code[i] = spread(std::uint64_t(r.x())) | spread(std::uint64_t(r.y())) << 1 | spread(std::uint64_t(r.z())) << 2;
    }
    std::vector<std::size_t> order(points.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return code[a] < code[b]; });

    const std::size_t base = pts_.size();
    // Insert in spatial order, then permute ids back.
    std::vector<int> id_of(points.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
        id_of[order[k]] = int(pts_.size());
        insert_one(points[order[k]]);
    }
    std::vector<int> perm(pts_.size());
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = 0; i < points.size(); ++i) perm[std::size_t(id_of[i])] = int(base + i);
    std::vector<Vec3> np(pts_.size()), no(pts_.size());
    for (std::size_t i = 0; i < pts_.size(); ++i) {
        np[std::size_t(perm[i])] = pts_[i];
        no[std::size_t(perm[i])] = orig_[i];
    }
    pts_ = std::move(np);
    orig_ = std::move(no);
    for (Cell &c : cells_)
        for (int &v : c.v) v = perm[std::size_t(v)];
}

std::vector<Tet> Triangulation::tets() const {
    std::vector<Tet> out;
    for (const Cell &c : cells_) {
        if (!c.alive) continue;
        if (c.v[0] < 4 || c.v[1] < 4 || c.v[2] < 4 || c.v[3] < 4) continue;
        out.push_back({c.v[0] - 4, c.v[1] - 4, c.v[2] - 4, c.v[3] - 4});
    }
    return out;
}

std::vector<Tet> Triangulation::all_tets() const {
    std::vector<Tet> out;
    for (const Cell &c : cells_)
        if (c.alive) out.push_back({c.v[0] - 4, c.v[1] - 4, c.v[2] - 4, c.v[3] - 4});
    return out;
}

} // namespace lvmesh::delaunay
