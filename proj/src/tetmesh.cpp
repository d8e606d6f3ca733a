#include "lvmesh/tetmesh.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>

#include <Eigen/Dense>

#include "lvmesh/delaunay.hpp"
#include "lvmesh/geometry.hpp"

namespace lvmesh {

namespace {

Vec3 centroid(const std::vector<Vec3> &v, const Tet &t) { return 0.25 * (v[t[0]] + v[t[1]] + v[t[2]] + v[t[3]]); }

double tet_vol(const std::vector<Vec3> &v, const Tet &t) { return tet_volume(v[t[0]], v[t[1]], v[t[2]], v[t[3]]); }

constexpr int kFace[4][3] = {{1, 2, 3}, {0, 3, 2}, {0, 1, 3}, {0, 2, 1}}; // outward, opposite corner i

// Peels cells off a Delaunay triangulation, starting from its convex hull.
// Every removal is checked locally: each touched vertex must keep a single
// inside fan and a single outside fan (so the boundary stays a closed
// 2-manifold), protected interior points must stay off the boundary and
// surface points must stay in the mesh. Cells that cannot go alone are
// retried together with the other flagged cells around one of their corners.
class Sculptor {
  public:
    Sculptor(const std::vector<Vec3> &pts, std::vector<Tet> all, int interior_from)
        : all_(std::move(all)), interior_from_(interior_from) {
        const std::size_t n = all_.size();
        in_.assign(n, 0);
        nbr_.assign(n, {-1, -1, -1, -1});
        star_.assign(pts.size(), {});
        std::unordered_map<std::uint64_t, std::pair<int, int>> faces;
        faces.reserve(n * 2);
        for (std::size_t t = 0; t < n; ++t) {
            Tet &k = all_[t];
            const bool hull = k[0] < 0 || k[1] < 0 || k[2] < 0 || k[3] < 0;
            if (!hull) {
                if (tet_vol(pts, k) < 0.0) std::swap(k[0], k[1]);
                in_[t] = 1;
            }
            for (int v : k)
                if (v >= 0) star_[std::size_t(v)].push_back(int(t));
            for (int i = 0; i < 4; ++i) {
                auto [it, fresh] = faces.try_emplace(face_key(k, i), int(t), i);
                if (!fresh) {
                    nbr_[t][std::size_t(i)] = it->second.first;
                    nbr_[std::size_t(it->second.first)][std::size_t(it->second.second)] = int(t);
                }
            }
        }
    }

    std::size_t size() const { return all_.size(); }
    const Tet &tet(std::size_t t) const { return all_[t]; }
    bool in(std::size_t t) const { return in_[t]; }

    // Removes flagged cells reachable from the outside while the checks
    // allow. Returns the number removed.
    int peel(const std::vector<char> &want_out) {
        int removed = 0;
        for (bool changed = true; changed;) {
            changed = false;
            for (std::size_t t = 0; t < all_.size(); ++t) {
                if (!in_[t] || !want_out[t] || !exposed(t)) continue;
                int n = try_remove({int(t)});
                for (int c = 0; c < 4 && n == 0; ++c) {
                    const int v = all_[t][std::size_t(c)];
                    std::vector<int> group;
                    for (int u : star_[std::size_t(v)])
                        if (in_[std::size_t(u)] && want_out[std::size_t(u)]) group.push_back(u);
                    if (group.size() > 1) n = try_remove(group);
                }
                if (n == 0) n = try_remove(pocket(t, want_out));
                removed += n;
                changed = changed || n > 0;
            }
        }
        return removed;
    }

  private:
    static std::uint64_t face_key(const Tet &k, int i) {
        std::array<std::uint64_t, 3> f{};
        for (int j = 0, m = 0; j < 4; ++j)
            if (j != i) f[std::size_t(m++)] = std::uint64_t(k[std::size_t(j)] + 4);
        std::sort(f.begin(), f.end());
        return (f[0] << 42) | (f[1] << 21) | f[2];
    }

    // Flagged cells face-connected to t (bounded).
    std::vector<int> pocket(std::size_t t, const std::vector<char> &want_out) const {
        std::vector<int> out{int(t)};
        for (std::size_t i = 0; i < out.size() && out.size() < 256; ++i)
            for (int n : nbr_[std::size_t(out[i])])
                if (in_[std::size_t(n)] && want_out[std::size_t(n)] &&
                    std::find(out.begin(), out.end(), n) == out.end())
                    out.push_back(n);
        return out.size() > 1 ? out : std::vector<int>{};
    }

    bool exposed(std::size_t t) const {
        for (int n : nbr_[t])
            if (!in_[std::size_t(n)]) return true;
        return false;
    }

    int try_remove(const std::vector<int> &cells) {
        if (cells.empty()) return 0;
        for (int t : cells) in_[std::size_t(t)] = 0;
        std::vector<int> verts;
        for (int t : cells)
            for (int v : all_[std::size_t(t)]) verts.push_back(v);
        std::sort(verts.begin(), verts.end());
        verts.erase(std::unique(verts.begin(), verts.end()), verts.end());
        bool ok = true;
        for (int v : verts)
            if (!vertex_ok(v)) {
                ok = false;
                break;
            }
        if (!ok)
            for (int t : cells) in_[std::size_t(t)] = 1;
        return ok ? int(cells.size()) : 0;
    }

    // One inside and at most one outside fan around v (faces through v),
    // with the extra conditions on protected and surface points.
    bool vertex_ok(int v) const {
        const std::vector<int> &s = star_[std::size_t(v)];
        int in_fans = 0, out_fans = 0;
        std::vector<char> seen(s.size(), 0);
        auto local = [&](int t) { return std::size_t(std::find(s.begin(), s.end(), t) - s.begin()); };
        std::vector<std::size_t> stack;
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (seen[i]) continue;
            const bool state = in_[std::size_t(s[i])];
            (state ? in_fans : out_fans)++;
            seen[i] = 1;
            stack.assign(1, i);
            while (!stack.empty()) {
                const int t = s[stack.back()];
                stack.pop_back();
                const Tet &k = all_[std::size_t(t)];
                for (int f = 0; f < 4; ++f) {
                    if (k[std::size_t(f)] == v) continue;
                    const int n = nbr_[std::size_t(t)][std::size_t(f)];
                    if (bool(in_[std::size_t(n)]) != state) continue;
                    const std::size_t j = local(n);
                    if (j >= s.size() || seen[j]) continue;
                    seen[j] = 1;
                    stack.push_back(j);
                }
            }
        }
        if (v < interior_from_) return in_fans == 1 && out_fans <= 1;
        return in_fans == 1 ? out_fans == 0 : in_fans == 0;
    }

    std::vector<Tet> all_;
    int interior_from_;
    std::vector<char> in_;
    std::vector<std::array<int, 4>> nbr_;
    std::vector<std::vector<int>> star_;
};

// Replaces each zero-volume cell and the two cells on one side of it that
// share an apex by two cells joining that apex to the faces on the other
// side (the flat cell is two triangulations of a planar quad stacked).
int flip_out_flats(const std::vector<Vec3> &pts, std::vector<Tet> &cells, double flat) {
    auto key = [](int a, int b, int c) {
        std::array<int, 3> f{a, b, c};
        std::sort(f.begin(), f.end());
        return std::uint64_t(std::uint32_t(f[0])) << 42 | std::uint64_t(std::uint32_t(f[1])) << 21 | std::uint32_t(f[2]);
    };
    auto face = [](const Tet &k, int i) { return std::array<int, 3>{k[kFace[i][0]], k[kFace[i][1]], k[kFace[i][2]]}; };
    int flips = 0;
    for (bool changed = true; changed;) {
        changed = false;
        std::unordered_map<std::uint64_t, std::vector<int>> owners;
        std::vector<char> alive(cells.size(), 1);
        for (std::size_t t = 0; t < cells.size(); ++t)
            for (int i = 0; i < 4; ++i) {
                const auto f = face(cells[t], i);
                owners[key(f[0], f[1], f[2])].push_back(int(t));
            }
        std::vector<Tet> added;
        for (std::size_t t = 0; t < cells.size(); ++t) {
            if (!alive[t] || std::abs(tet_vol(pts, cells[t])) > flat) continue;
            const Tet &k = cells[t];
            auto across = [&](int i) {
                const auto f = face(k, i);
                for (int o : owners[key(f[0], f[1], f[2])])
                    if (o != int(t)) return alive[std::size_t(o)] ? o : -1;
                return -1;
            };
            static constexpr int kPairs[3][4] = {{0, 1, 2, 3}, {0, 2, 1, 3}, {0, 3, 1, 2}};
            bool done = false;
            for (const auto &pr : kPairs) {
                for (int side = 0; side < 2 && !done; ++side) {
                    const int i0 = pr[2 * side], i1 = pr[2 * side + 1];
                    const int j0 = pr[2 - 2 * side], j1 = pr[3 - 2 * side];
                    const int n0 = across(i0), n1 = across(i1);
                    if (n0 < 0 || n1 < 0 || n0 == n1) continue;
                    auto apex = [&](int n, int i) {
                        const auto f = face(k, i);
                        for (int v : cells[std::size_t(n)])
                            if (v != f[0] && v != f[1] && v != f[2]) return v;
                        return -1;
                    };
                    const int p = apex(n0, i0);
                    if (p < 0 || p != apex(n1, i1)) continue;
                    const double before = tet_vol(pts, cells[std::size_t(n0)]) + tet_vol(pts, cells[std::size_t(n1)]);
                    Tet a{}, b{};
                    const auto fa = face(k, j0), fb = face(k, j1);
                    a = {fa[0], fa[1], fa[2], p};
                    b = {fb[0], fb[1], fb[2], p};
                    if (tet_vol(pts, a) < 0.0) std::swap(a[0], a[1]);
                    if (tet_vol(pts, b) < 0.0) std::swap(b[0], b[1]);
                    const double va = tet_vol(pts, a), vb = tet_vol(pts, b);
                    if (va <= flat || vb <= flat || std::abs(va + vb - before) > 1e-9 * before) continue;
                    alive[t] = alive[std::size_t(n0)] = alive[std::size_t(n1)] = 0;
                    added.push_back(a);
                    added.push_back(b);
                    done = true;
                }
                if (done) break;
            }
            if (done) {
                ++flips;
                changed = true;
            }
        }
        std::vector<Tet> next;
        for (std::size_t t = 0; t < cells.size(); ++t)
            if (alive[t]) next.push_back(cells[t]);
        next.insert(next.end(), added.begin(), added.end());
        cells.swap(next);
    }
    return flips;
}

} // namespace

TetMesh tetrahedralize(const SurfaceMesh &surface, const TetMeshOptions &opts, TetMeshStats *stats) {
    require(opts.max_volume > 0.0, "tetrahedralize: max volume must be positive");
    require(opts.volume_tolerance >= 1.0, "tetrahedralize: volume tolerance must be at least 1");
    const SurfaceCheck chk = check_surface(surface);
    require(chk.watertight && chk.consistently_oriented && chk.vertex_manifold,
            "tetrahedralize: surface is not a watertight oriented manifold");
    require(chk.signed_volume > 0.0, "tetrahedralize: surface must be outward oriented");
    require(chk.unused_vertices == 0, "tetrahedralize: surface has unreferenced vertices");

    const int ns = int(surface.vertices.size());
    const geom::RayParity inside(surface);
    const geom::TriangleTree tree(surface.vertices, surface.triangles);
    const double h = std::cbrt(6.0 * opts.max_volume);

    Vec3 lo = surface.vertices.front(), hi = lo;
    for (const Vec3 &v : surface.vertices) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }

    // Body-centred cubic lattice, strictly inside and clear of the surface.
    std::vector<Vec3> steiner;
    const Vec3 ext = hi - lo;
    const int nx = int(std::ceil(ext.x() / h)) + 1, ny = int(std::ceil(ext.y() / h)) + 1,
              nz = int(std::ceil(ext.z() / h)) + 1;
    for (int k = 0; k < nz; ++k)
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i)
                for (int c = 0; c < 2; ++c) {
                    const Vec3 p = lo + h * Vec3(i + 0.5 * c, j + 0.5 * c, k + 0.5 * c);
                    if (!inside.inside(p)) continue;
                    if (tree.distance(p) < opts.surface_clearance * h) continue;
                    steiner.push_back(p);
                }

    TetMeshStats st;
    st.surface_vertices = ns;
    st.steiner_points = int(steiner.size());
    const double flat = 1e-10 * h * h * h;
    const double vmax = opts.max_volume * opts.volume_tolerance;

    std::vector<Vec3> pts;
    std::vector<Tet> kept;
    pts = surface.vertices;
    pts.insert(pts.end(), steiner.begin(), steiner.end());
    delaunay::Triangulation dt(lo - Vec3::Constant(h), hi + Vec3::Constant(h), opts.seed);
    dt.insert_sorted(pts);
    for (int round = 0;; ++round) {
        Sculptor sc(pts, dt.all_tets(), ns);
        std::vector<char> want_out(sc.size(), 0);
        for (std::size_t t = 0; t < sc.size(); ++t)
            if (sc.in(t))
                want_out[t] = char(tet_vol(pts, sc.tet(t)) <= flat || !inside.inside(centroid(pts, sc.tet(t))));
        st.peeled = sc.peel(want_out);
        kept.clear();
        st.outside_kept = st.flat_kept = 0;
        std::vector<Vec3> extra;
        for (std::size_t t = 0; t < sc.size(); ++t) {
            if (!sc.in(t)) continue;
            const Tet &k = sc.tet(t);
            kept.push_back(k);
            const double v = tet_vol(pts, k);
            if (v <= flat) ++st.flat_kept;
            if (want_out[t]) {
                ++st.outside_kept;
            } else if (v > vmax) {
                extra.push_back(centroid(pts, k));
            }
        }
        if (extra.empty() || round >= opts.max_refinement_rounds) break;
        st.refinement_points += int(extra.size());
        pts.insert(pts.end(), extra.begin(), extra.end());
        dt.insert(extra);
    }
    st.flat_flips = flip_out_flats(pts, kept, flat);
    st.flat_kept = 0;
    for (const Tet &k : kept)
        if (tet_vol(pts, k) <= flat) ++st.flat_kept;

    // Compact: surface vertices keep their ids, used Steiner points follow.
    std::vector<int> remap(pts.size(), -1);
    for (int s = 0; s < ns; ++s) remap[std::size_t(s)] = s;
    TetMesh out;
    out.vertices.assign(surface.vertices.begin(), surface.vertices.end());
    std::vector<char> used(pts.size(), 0);
    for (const Tet &t : kept)
        for (int v : t) used[std::size_t(v)] = 1;
    for (std::size_t v = std::size_t(ns); v < pts.size(); ++v)
        if (used[v]) {
            remap[v] = int(out.vertices.size());
            out.vertices.push_back(pts[v]);
        }
    for (const Tet &t : kept) out.tets.push_back({remap[t[0]], remap[t[1]], remap[t[2]], remap[t[3]]});
    out.boundary_map.resize(std::size_t(ns));
    for (int s = 0; s < ns; ++s) out.boundary_map[std::size_t(s)] = s;
    out.frame_id = surface.frame_id;
    if (stats) *stats = st;

    require(!out.tets.empty(), "tetrahedralize: no tetrahedra inside the surface");
    const TetMeshCheck c = check_tetmesh(out);
    require(c.boundary_map_bijective, "tetrahedralize: some surface vertices are not on the mesh boundary");
    require(c.boundary_watertight, "tetrahedralize: carved boundary is not watertight");
    return out;
}

// -------------------------------------------------------------------------

double scaled_jacobian(const Vec3 &a, const Vec3 &b, const Vec3 &c, const Vec3 &d, bool *degenerate) {
    static constexpr int kCorner[4][4] = {{0, 1, 2, 3}, {1, 0, 3, 2}, {2, 0, 1, 3}, {3, 0, 2, 1}};
    const Vec3 *p[4] = {&a, &b, &c, &d};
    if (degenerate) *degenerate = false;
    double best = 1e300;
    for (const auto &k : kCorner) {
        const Vec3 e1 = *p[k[1]] - *p[k[0]], e2 = *p[k[2]] - *p[k[0]], e3 = *p[k[3]] - *p[k[0]];
        const double l = e1.norm() * e2.norm() * e3.norm();
        if (!(l > 0.0)) {
            if (degenerate) *degenerate = true;
            return 0.0;
        }
        best = std::min(best, e1.dot(e2.cross(e3)) / l);
    }
    return std::clamp(best / (std::sqrt(2.0) / 2.0), -1.0, 1.0);
}

double radius_edge(const Vec3 &a, const Vec3 &b, const Vec3 &c, const Vec3 &d) {
    const double inf = std::numeric_limits<double>::infinity();
    Mat3 A;
    A.row(0) = (b - a).transpose();
    A.row(1) = (c - a).transpose();
    A.row(2) = (d - a).transpose();
    const Vec3 rhs(0.5 * (b - a).squaredNorm(), 0.5 * (c - a).squaredNorm(), 0.5 * (d - a).squaredNorm());
    double shortest = 1e300, longest = 0.0;
    const Vec3 *p[4] = {&a, &b, &c, &d};
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j) {
            const double l = (*p[i] - *p[j]).norm();
            shortest = std::min(shortest, l);
            longest = std::max(longest, l);
        }
    if (!(shortest > 0.0)) return inf;
    const double det = A.determinant();
    if (!(std::abs(det) > 1e-12 * longest * longest * longest)) return inf;
    const Vec3 x = A.fullPivLu().solve(rhs);
    return x.norm() / shortest;
}

QualityReport assess(const TetMesh &mesh) {
    QualityReport r;
    const std::size_t n = mesh.tets.size();
    r.scaled_jacobian.resize(n);
    r.radius_edge.resize(n);
    r.volume.resize(n);
    if (n == 0) return r;
    r.min_sj = 1e300;
    int good = 0, finite_re = 0;
    for (std::size_t t = 0; t < n; ++t) {
        const Tet &k = mesh.tets[t];
        const Vec3 &a = mesh.vertices[k[0]], &b = mesh.vertices[k[1]], &c = mesh.vertices[k[2]],
                   &d = mesh.vertices[k[3]];
        const double sj = scaled_jacobian(a, b, c, d);
        const double re = radius_edge(a, b, c, d);
        const double v = tet_volume(a, b, c, d);
        r.scaled_jacobian[t] = sj;
        r.radius_edge[t] = re;
        r.volume[t] = v;
        r.min_sj = std::min(r.min_sj, sj);
        r.mean_sj += sj;
        if (sj >= 0.2) ++good;
        if (sj <= 0.0) ++r.non_positive;
        r.max_volume = std::max(r.max_volume, v);
        r.total_volume += v;
        r.max_radius_edge = std::max(r.max_radius_edge, re);
        if (std::isfinite(re)) {
            r.mean_radius_edge += re;
            ++finite_re;
        }
    }
    r.mean_sj /= double(n);
    r.mean_radius_edge = finite_re ? r.mean_radius_edge / finite_re : std::numeric_limits<double>::infinity();
    r.fraction_acceptable = double(good) / double(n);
    r.valid = r.non_positive == 0;
    return r;
}

TetMeshCheck check_tetmesh(const TetMesh &mesh) {
    TetMeshCheck c;
    const int nv = int(mesh.vertices.size());
    for (const Tet &t : mesh.tets)
        for (int v : t)
            if (v < 0 || v >= nv) return c;
    c.positive_volumes = !mesh.tets.empty();
    for (std::size_t t = 0; t < mesh.tets.size(); ++t)
        if (!(tet_volume(mesh, t) > 0.0)) c.positive_volumes = false;

    SurfaceMesh b;
    b.vertices = mesh.vertices;
    b.triangles = boundary_faces(mesh);
    const SurfaceCheck sc = check_surface(b);
    c.boundary_watertight = sc.watertight && sc.consistently_oriented;

    std::set<int> on_boundary;
    for (const Tri &f : b.triangles)
        for (int v : f) on_boundary.insert(v);
    std::set<int> mapped;
    bool in_range = true;
    for (int v : mesh.boundary_map) {
        if (v < 0 || v >= nv) in_range = false;
        mapped.insert(v);
    }
    c.boundary_map_bijective = in_range && mapped.size() == mesh.boundary_map.size() && mapped == on_boundary;
    return c;
}

SurfaceMesh boundary_surface(const TetMesh &mesh) {
    std::vector<int> surf_of(mesh.vertices.size(), -1);
    SurfaceMesh s;
    s.frame_id = mesh.frame_id;
    s.vertices.resize(mesh.boundary_map.size());
    for (std::size_t i = 0; i < mesh.boundary_map.size(); ++i) {
        surf_of[std::size_t(mesh.boundary_map[i])] = int(i);
        s.vertices[i] = mesh.vertices[std::size_t(mesh.boundary_map[i])];
    }
    for (const Tri &f : boundary_faces(mesh)) {
        const Tri t{surf_of[std::size_t(f[0])], surf_of[std::size_t(f[1])], surf_of[std::size_t(f[2])]};
        require(t[0] >= 0 && t[1] >= 0 && t[2] >= 0, "boundary surface: boundary vertex missing from boundary_map");
        s.triangles.push_back(t);
    }
    return s;
}

PropagatedVolume propagate_volume(const TetMesh &mesh, const DisplacementField &field, int frame_id) {
    field.validate();
    PropagatedVolume r;
    r.mesh = mesh;
    r.mesh.frame_id = frame_id;
    for (Vec3 &v : r.mesh.vertices) {
        bool clamped = false;
        v += field.sample(v, clamped);
        if (clamped) ++r.clamped_vertices;
    }
    r.quality = assess(r.mesh);
    return r;
}

} // namespace lvmesh
