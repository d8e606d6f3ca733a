#include "lvmesh/isosurface.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <unordered_map>

#include <Eigen/Dense>

namespace lvmesh {

IsoPolicy parse_iso_policy(const std::string &s) {
    if (s == "binary") return IsoPolicy::binary;
    if (s == "box") return IsoPolicy::box;
    throw Error("unknown iso policy '" + s + "' (expected binary or box)");
}

const char *to_string(IsoPolicy p) { return p == IsoPolicy::binary ? "binary" : "box"; }

namespace {

// Corner c of a cube sits at offset (c & 1, (c >> 1) & 1, (c >> 2) & 1).
struct CubeTables {
    int edge_corner[12][2];
    int edge_axis[12];
    int face_corner[6][4]; // cyclic
    int face_edge[6][4];   // face_edge[f][i] joins face_corner[f][i] and [i+1]
    int face_side[6];

    CubeTables() {
        int e = 0;
        for (int axis = 0; axis < 3; ++axis)
            for (int c = 0; c < 8; ++c)
                if (!(c & (1 << axis))) {
                    edge_corner[e][0] = c;
                    edge_corner[e][1] = c | (1 << axis);
                    edge_axis[e] = axis;
                    ++e;
                }
        for (int a = 0; a < 3; ++a)
            for (int s = 0; s < 2; ++s) {
                const int f = 2 * a + s;
                const int b = (a + 1) % 3, c = (a + 2) % 3;
                const int uv[4][2] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
                for (int i = 0; i < 4; ++i) face_corner[f][i] = (s << a) | (uv[i][0] << b) | (uv[i][1] << c);
                face_side[f] = s;
                for (int i = 0; i < 4; ++i) {
                    const int p = face_corner[f][i], q = face_corner[f][(i + 1) % 4];
                    for (int k = 0; k < 12; ++k)
                        if ((edge_corner[k][0] == p && edge_corner[k][1] == q) ||
                            (edge_corner[k][0] == q && edge_corner[k][1] == p))
                            face_edge[f][i] = k;
                }
            }
    }
};

const CubeTables &tables() {
    static const CubeTables t;
    return t;
}

// Scalar samples on a zero-padded lattice.
struct Lattice {
    std::array<int, 3> n{};
    Vec3 origin = Vec3::Zero();
    Vec3 spacing = Vec3::Ones();
    std::vector<double> v;
    double at(int i, int j, int k) const { return v[(std::size_t(k) * n[1] + j) * n[0] + i]; }
};

SurfaceMesh polygonize(const Lattice &L, double iso) {
    const CubeTables &T = tables();
    SurfaceMesh mesh;
    std::unordered_map<std::uint64_t, int> vertex_of_edge;

    auto edge_vertex = [&](int i, int j, int k, int e, const double *f) {
        const int c0 = T.edge_corner[e][0];
        const int gi = i + (c0 & 1), gj = j + ((c0 >> 1) & 1), gk = k + ((c0 >> 2) & 1);
        const std::uint64_t key =
            ((std::uint64_t(gk) * std::uint64_t(L.n[1]) + std::uint64_t(gj)) * std::uint64_t(L.n[0]) + std::uint64_t(gi)) * 3 +
            std::uint64_t(T.edge_axis[e]);
        auto [it, fresh] = vertex_of_edge.try_emplace(key, int(mesh.vertices.size()));
        if (fresh) {
            const double f0 = f[c0], f1 = f[T.edge_corner[e][1]];
            const double t = std::clamp((iso - f0) / (f1 - f0), 1e-6, 1.0 - 1e-6);
            Vec3 p(gi, gj, gk);
            p[T.edge_axis[e]] += t;
            mesh.vertices.push_back(L.origin + p.cwiseProduct(L.spacing));
        }
        return it->second;
    };

    for (int k = 0; k + 1 < L.n[2]; ++k)
        for (int j = 0; j + 1 < L.n[1]; ++j)
            for (int i = 0; i + 1 < L.n[0]; ++i) {
                double f[8];
                int mask = 0;
                for (int c = 0; c < 8; ++c) {
                    f[c] = L.at(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1));
                    if (f[c] > iso) mask |= 1 << c;
                }
                if (mask == 0 || mask == 255) continue;

                // Face segments, directed so the loops come out outward-facing.
                int next[12];
                std::fill(std::begin(next), std::end(next), -1);
                auto link = [&](int exit_edge, int entry_edge, int side) {
                    if (side == 0) next[exit_edge] = entry_edge;
                    else next[entry_edge] = exit_edge;
                };
                for (int fc = 0; fc < 6; ++fc) {
                    bool in[4];
                    double fv[4];
                    for (int q = 0; q < 4; ++q) {
                        in[q] = (mask >> T.face_corner[fc][q]) & 1;
                        fv[q] = f[T.face_corner[fc][q]];
                    }
                    int exits[2], entries[2], ne = 0, nn = 0;
                    for (int q = 0; q < 4; ++q) {
                        const bool a = in[q], b = in[(q + 1) % 4];
                        if (a && !b) exits[ne++] = q;
                        if (!a && b) entries[nn++] = q;
                    }
                    const int side = T.face_side[fc];
                    if (ne == 1) {
                        link(T.face_edge[fc][exits[0]], T.face_edge[fc][entries[0]], side);
                    } else if (ne == 2) {
                        // Alternating corners: the bilinear saddle decides whether
                        // the inside corners connect across the face.
                        const double denom = fv[0] + fv[2] - fv[1] - fv[3];
                        const double saddle = (fv[0] * fv[2] - fv[1] * fv[3]) / denom;
                        const bool connected = saddle > iso;
                        for (int x = 0; x < 2; ++x) {
                            const int q = exits[x]; // edge (q, q+1), q inside
                            // Separated: the entry edge ending at corner q, i.e. (q-1, q).
                            // Connected: the entry edge leaving corner q+1, i.e. (q+1, q+2).
                            const int entry = connected ? (q + 1) % 4 : (q + 3) % 4;
                            link(T.face_edge[fc][q], T.face_edge[fc][entry], side);
                        }
                    }
                }

                bool done[12] = {};
                for (int e0 = 0; e0 < 12; ++e0) {
                    if (next[e0] < 0 || done[e0]) continue;
                    std::vector<int> loop;
                    int e = e0;
                    while (!done[e]) {
                        done[e] = true;
                        loop.push_back(edge_vertex(i, j, k, e, f));
                        e = next[e];
                        if (e < 0) throw Error("marching cubes: open face-segment chain");
                    }
                    if (loop.size() == 3) {
                        mesh.triangles.push_back({loop[0], loop[1], loop[2]});
                    } else {
                        Vec3 c = Vec3::Zero();
                        for (int v : loop) c += mesh.vertices[std::size_t(v)];
                        const int ci = int(mesh.vertices.size());
                        mesh.vertices.push_back(c / double(loop.size()));
                        for (std::size_t q = 0; q < loop.size(); ++q)
                            mesh.triangles.push_back({loop[q], loop[(q + 1) % loop.size()], ci});
                    }
                }
            }
    return mesh;
}

} // namespace

SurfaceMesh marching_cubes(const LabelVolume &labels, std::uint8_t label, IsoPolicy policy) {
    labels.validate();
    const Grid &g = labels.grid;
    require(labels.count(label) > 0, "marching cubes: label " + std::to_string(int(label)) + " is absent");
    const int pad = policy == IsoPolicy::box ? 2 : 1;
    Lattice L;
    for (int a = 0; a < 3; ++a) L.n[a] = g.dims[a] + 2 * pad;
    L.spacing = g.spacing;
    L.origin = g.origin - double(pad) * g.spacing;
    L.v.assign(std::size_t(L.n[0]) * L.n[1] * L.n[2], 0.0);
    auto indicator = [&](int i, int j, int k) {
        return g.contains_voxel(i, j, k) && labels.at(i, j, k) == label ? 1.0 : 0.0;
    };
    for (int k = 0; k < L.n[2]; ++k)
        for (int j = 0; j < L.n[1]; ++j)
            for (int i = 0; i < L.n[0]; ++i) {
                const int x = i - pad, y = j - pad, z = k - pad;
                double v;
                if (policy == IsoPolicy::binary) {
                    v = indicator(x, y, z);
                } else {
                    v = 0.0;
                    for (int dz = -1; dz <= 1; ++dz)
                        for (int dy = -1; dy <= 1; ++dy)
                            for (int dx = -1; dx <= 1; ++dx) v += indicator(x + dx, y + dy, z + dz);
                    v /= 27.0;
                }
                L.v[(std::size_t(k) * L.n[1] + j) * L.n[0] + i] = v;
            }
    SurfaceMesh m = polygonize(L, 0.5);
    require(!m.triangles.empty(), "marching cubes: no surface at isovalue 0.5");
    return m;
}

SurfaceMesh marching_cubes(const ImageVolume &scalar, double iso) {
    scalar.validate();
    const Grid &g = scalar.grid;
    Lattice L;
    for (int a = 0; a < 3; ++a) L.n[a] = g.dims[a] + 2;
    L.spacing = g.spacing;
    L.origin = g.origin - g.spacing;
    // Padding sits below the isovalue so the surface closes at the border.
    const double below = std::min(iso - 1.0, double(*std::min_element(scalar.data.begin(), scalar.data.end())));
    L.v.assign(std::size_t(L.n[0]) * L.n[1] * L.n[2], below);
    for (int k = 0; k < g.dims[2]; ++k)
        for (int j = 0; j < g.dims[1]; ++j)
            for (int i = 0; i < g.dims[0]; ++i)
                L.v[(std::size_t(k + 1) * L.n[1] + j + 1) * L.n[0] + i + 1] = scalar.at(i, j, k);
    SurfaceMesh m = polygonize(L, iso);
    require(!m.triangles.empty(), "marching cubes: no surface at the requested isovalue");
    return m;
}

// -------------------------------------------------------------------------
// Quadric-error edge collapse.

namespace {

using Mat4 = Eigen::Matrix4d;

struct Collapser {
    std::vector<Vec3> pos;
    std::vector<Tri> tris;
    std::vector<char> tri_alive, vert_alive;
    std::vector<std::vector<int>> vtris; // incident triangles (may hold dead ids)
    std::vector<Mat4> quadric;
    std::vector<unsigned> stamp;
    int alive_vertices = 0;

    struct Candidate {
        double cost;
        int u, v;
        unsigned su, sv;
        Vec3 x;
        bool operator<(const Candidate &o) const {
            if (cost != o.cost) return cost > o.cost; // min-heap
            if (u != o.u) return u > o.u;
            return v > o.v;
        }
    };
    std::priority_queue<Candidate> heap;

    explicit Collapser(const SurfaceMesh &m) : pos(m.vertices), tris(m.triangles) {
        const std::size_t nv = pos.size();
        tri_alive.assign(tris.size(), 1);
        vert_alive.assign(nv, 0);
        vtris.assign(nv, {});
        quadric.assign(nv, Mat4::Zero());
        stamp.assign(nv, 0);
        for (std::size_t t = 0; t < tris.size(); ++t)
            for (int v : tris[t]) {
                vtris[std::size_t(v)].push_back(int(t));
                vert_alive[std::size_t(v)] = 1;
            }
        for (char a : vert_alive) alive_vertices += a;
        for (std::size_t t = 0; t < tris.size(); ++t) {
            const Vec3 &a = pos[tris[t][0]], &b = pos[tris[t][1]], &c = pos[tris[t][2]];
            const Vec3 n2 = (b - a).cross(c - a);
            const double area = 0.5 * n2.norm();
            if (!(area > 0.0)) continue;
            const Vec3 n = n2.normalized();
            Eigen::Vector4d p(n.x(), n.y(), n.z(), -n.dot(a));
            const Mat4 K = area * p * p.transpose();
            for (int v : tris[t]) quadric[std::size_t(v)] += K;
        }
    }

    std::vector<int> neighbours(int u) const {
        std::vector<int> out;
        for (int t : vtris[std::size_t(u)]) {
            if (!tri_alive[std::size_t(t)]) continue;
            for (int w : tris[std::size_t(t)])
                if (w != u) out.push_back(w);
        }
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

    Candidate evaluate(int u, int v) const {
        if (u > v) std::swap(u, v);
        const Mat4 Q = quadric[std::size_t(u)] + quadric[std::size_t(v)];
        auto cost = [&](const Vec3 &x) {
            Eigen::Vector4d h(x.x(), x.y(), x.z(), 1.0);
            return std::max(0.0, double(h.transpose() * Q * h));
        };
        const Vec3 &pu = pos[std::size_t(u)], &pv = pos[std::size_t(v)];
        const double len = (pv - pu).norm();
        Vec3 best = 0.5 * (pu + pv);
        double bc = cost(best);
        for (const Vec3 &c : {pu, pv}) {
            const double cc = cost(c);
            if (cc < bc) {
                bc = cc;
                best = c;
            }
        }
        const Mat3 A = Q.topLeftCorner<3, 3>();
        const Vec3 b = Q.topRightCorner<3, 1>();
        Eigen::FullPivLU<Mat3> lu(A);
        lu.setThreshold(1e-8);
        if (lu.isInvertible()) {
            const Vec3 x = lu.solve(-b);
            // Keep the optimum only when it stays near the edge.
            const Vec3 mid = 0.5 * (pu + pv);
            if ((x - mid).norm() <= len) {
                const double cx = cost(x);
                if (cx < bc) {
                    bc = cx;
                    best = x;
                }
            }
        }
        return {bc, u, v, stamp[std::size_t(u)], stamp[std::size_t(v)], best};
    }

    bool legal(int u, int v, const Vec3 &x, const DecimateOptions &o) const {
        // Link condition.
        std::vector<int> shared;
        for (int t : vtris[std::size_t(u)]) {
            if (!tri_alive[std::size_t(t)]) continue;
            const Tri &tr = tris[std::size_t(t)];
            if (std::find(tr.begin(), tr.end(), v) == tr.end()) continue;
            for (int w : tr)
                if (w != u && w != v) shared.push_back(w);
        }
        if (shared.size() != 2) return false;
        std::sort(shared.begin(), shared.end());
        const auto nu = neighbours(u), nv = neighbours(v);
        std::vector<int> common;
        std::set_intersection(nu.begin(), nu.end(), nv.begin(), nv.end(), std::back_inserter(common));
        if (common != shared) return false;
        if (nu.size() <= 3 && nv.size() <= 3) return false; // would flatten a tetrahedron
        if (alive_vertices <= 4) return false;

        // Moved triangles must keep their orientation and shape.
        for (int w : {u, v})
            for (int t : vtris[std::size_t(w)]) {
                if (!tri_alive[std::size_t(t)]) continue;
                const Tri &tr = tris[std::size_t(t)];
                const bool has_u = std::find(tr.begin(), tr.end(), u) != tr.end();
                const bool has_v = std::find(tr.begin(), tr.end(), v) != tr.end();
                if (has_u && has_v) continue;
                Vec3 p[3], q[3];
                for (int a = 0; a < 3; ++a) {
                    p[a] = pos[std::size_t(tr[a])];
                    q[a] = (tr[a] == u || tr[a] == v) ? x : p[a];
                }
                const Vec3 n_old = (p[1] - p[0]).cross(p[2] - p[0]);
                const Vec3 n_new = (q[1] - q[0]).cross(q[2] - q[0]);
                const double a_new = 0.5 * n_new.norm();
                if (!(a_new > 1e-9)) return false;
                if (n_old.normalized().dot(n_new.normalized()) < o.min_normal_cos) return false;
                const double e2 = (q[1] - q[0]).squaredNorm() + (q[2] - q[1]).squaredNorm() + (q[0] - q[2]).squaredNorm();
                if (4.0 * std::sqrt(3.0) * a_new / e2 < o.min_triangle_quality) return false;
            }
        return true;
    }

    void collapse(int u, int v, const Vec3 &x) {
        for (int t : vtris[std::size_t(v)]) {
            if (!tri_alive[std::size_t(t)]) continue;
            Tri &tr = tris[std::size_t(t)];
            if (std::find(tr.begin(), tr.end(), u) != tr.end()) {
                tri_alive[std::size_t(t)] = 0;
                continue;
            }
            for (int &w : tr)
                if (w == v) w = u;
            vtris[std::size_t(u)].push_back(t);
        }
        vtris[std::size_t(v)].clear();
        auto &vt = vtris[std::size_t(u)];
        vt.erase(std::remove_if(vt.begin(), vt.end(), [&](int t) { return !tri_alive[std::size_t(t)]; }), vt.end());
        pos[std::size_t(u)] = x;
        quadric[std::size_t(u)] += quadric[std::size_t(v)];
        vert_alive[std::size_t(v)] = 0;
        --alive_vertices;
        ++stamp[std::size_t(u)];
        ++stamp[std::size_t(v)];
        const auto ring = neighbours(u);
        for (int w : ring) ++stamp[std::size_t(w)];
        push_vertex_edges(u);
        for (int w : ring) push_vertex_edges(w);
    }

    void push_vertex_edges(int u) {
        for (int w : neighbours(u)) heap.push(evaluate(u, w));
    }
};

} // namespace

SurfaceMesh decimate(const SurfaceMesh &mesh, const DecimateOptions &opts) {
    require(opts.target_vertices >= 4, "decimate: target vertex count must be at least 4");
    const SurfaceCheck chk = check_surface(mesh);
    require(chk.watertight && chk.consistently_oriented, "decimate: input surface must be watertight and oriented");

    Collapser C(mesh);
    if (C.alive_vertices <= opts.target_vertices) return mesh;
    for (int u = 0; u < int(C.pos.size()); ++u)
        if (C.vert_alive[std::size_t(u)])
            for (int w : C.neighbours(u))
                if (u < w) C.heap.push(C.evaluate(u, w));

    while (C.alive_vertices > opts.target_vertices && !C.heap.empty()) {
        const auto cand = C.heap.top();
        C.heap.pop();
        if (!C.vert_alive[std::size_t(cand.u)] || !C.vert_alive[std::size_t(cand.v)]) continue;
        if (cand.su != C.stamp[std::size_t(cand.u)] || cand.sv != C.stamp[std::size_t(cand.v)]) continue;
        if (!C.legal(cand.u, cand.v, cand.x, opts)) continue;
        C.collapse(cand.u, cand.v, cand.x);
    }

    SurfaceMesh out;
    out.frame_id = mesh.frame_id;
    std::vector<int> remap(C.pos.size(), -1);
    for (std::size_t v = 0; v < C.pos.size(); ++v)
        if (C.vert_alive[v]) {
            remap[v] = int(out.vertices.size());
            out.vertices.push_back(C.pos[v]);
        }
    for (std::size_t t = 0; t < C.tris.size(); ++t)
        if (C.tri_alive[t]) out.triangles.push_back({remap[C.tris[t][0]], remap[C.tris[t][1]], remap[C.tris[t][2]]});
    return out;
}

// -------------------------------------------------------------------------

PropagatedSurface propagate_surface(const SurfaceMesh &mesh, const DisplacementField &field, int frame_id) {
    field.validate();
    PropagatedSurface r;
    r.mesh = mesh;
    r.mesh.frame_id = frame_id;
    for (Vec3 &v : r.mesh.vertices) {
        bool clamped = false;
        v += field.sample(v, clamped);
        if (clamped) ++r.clamped_vertices;
    }
    return r;
}

} // namespace lvmesh
