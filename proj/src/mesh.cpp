#include "lvmesh/mesh.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <unordered_map>

#include <Eigen/Dense>

namespace lvmesh {

double triangle_area(const Vec3 &a, const Vec3 &b, const Vec3 &c) { return 0.5 * (b - a).cross(c - a).norm(); }

double surface_area(const SurfaceMesh &m) {
    double s = 0.0;
    for (const Tri &t : m.triangles) s += triangle_area(m.vertices[t[0]], m.vertices[t[1]], m.vertices[t[2]]);
    return s;
}

double enclosed_volume(const SurfaceMesh &m) {
    double s = 0.0;
    for (const Tri &t : m.triangles) s += m.vertices[t[0]].dot(m.vertices[t[1]].cross(m.vertices[t[2]]));
    return s / 6.0;
}

double tet_volume(const Vec3 &a, const Vec3 &b, const Vec3 &c, const Vec3 &d) {
    return (b - a).dot((c - a).cross(d - a)) / 6.0;
}

double tet_volume(const TetMesh &m, std::size_t t) {
    const Tet &k = m.tets[t];
    return tet_volume(m.vertices[k[0]], m.vertices[k[1]], m.vertices[k[2]], m.vertices[k[3]]);
}

namespace {

std::uint64_t edge_key(int a, int b) {
    if (a > b) std::swap(a, b);
    return (std::uint64_t(std::uint32_t(a)) << 32) | std::uint32_t(b);
}

std::uint64_t directed_key(int a, int b) { return (std::uint64_t(std::uint32_t(a)) << 32) | std::uint32_t(b); }

struct DisjointSets {
    std::vector<int> parent;
    explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    void join(int a, int b) { parent[find(a)] = find(b); }
};

} // namespace

SurfaceCheck check_surface(const SurfaceMesh &m) {
    SurfaceCheck r;
    const int nv = int(m.vertices.size());
    std::unordered_map<std::uint64_t, int> undirected, directed;
    undirected.reserve(m.triangles.size() * 3);
    directed.reserve(m.triangles.size() * 3);
    std::vector<char> used(static_cast<std::size_t>(nv), 0);
    r.min_area = m.triangles.empty() ? 0.0 : 1e300;
    bool indices_ok = true;
    for (const Tri &t : m.triangles) {
        for (int a = 0; a < 3; ++a)
            if (t[a] < 0 || t[a] >= nv) indices_ok = false;
        if (!indices_ok) break;
        if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) r.min_area = 0.0;
        for (int a = 0; a < 3; ++a) {
            used[std::size_t(t[a])] = 1;
            ++undirected[edge_key(t[a], t[(a + 1) % 3])];
            ++directed[directed_key(t[a], t[(a + 1) % 3])];
        }
        r.min_area = std::min(r.min_area, triangle_area(m.vertices[t[0]], m.vertices[t[1]], m.vertices[t[2]]));
    }
    if (!indices_ok || m.triangles.empty()) return r;

    r.watertight = std::all_of(undirected.begin(), undirected.end(), [](const auto &e) { return e.second == 2; });
    r.consistently_oriented = true;
    for (const auto &[k, n] : directed) {
        const int a = int(k >> 32), b = int(k & 0xffffffffu);
        if (n != 1 || !directed.count(directed_key(b, a))) {
            r.consistently_oriented = false;
            break;
        }
    }

    // Vertex fans: the link edges of each vertex must form a single cycle.
    std::vector<std::vector<std::array<int, 2>>> link(static_cast<std::size_t>(nv));
    for (const Tri &t : m.triangles)
        for (int a = 0; a < 3; ++a) link[std::size_t(t[a])].push_back({t[(a + 1) % 3], t[(a + 2) % 3]});
    r.vertex_manifold = true;
    for (int v = 0; v < nv && r.vertex_manifold; ++v) {
        const auto &L = link[std::size_t(v)];
        if (L.empty()) continue;
        std::map<int, int> next;
        for (const auto &e : L) {
            if (next.count(e[0])) {
                r.vertex_manifold = false;
                break;
            }
            next[e[0]] = e[1];
        }
        if (!r.vertex_manifold) break;
        int cur = L.front()[0], steps = 0;
        do {
            auto it = next.find(cur);
            if (it == next.end()) {
                r.vertex_manifold = false;
                break;
            }
            cur = it->second;
            ++steps;
        } while (cur != L.front()[0] && steps <= int(L.size()));
        if (steps != int(L.size())) r.vertex_manifold = false;
    }

    DisjointSets ds(static_cast<std::size_t>(nv));
    for (const Tri &t : m.triangles) {
        ds.join(t[0], t[1]);
        ds.join(t[1], t[2]);
    }
    int used_count = 0;
    for (int v = 0; v < nv; ++v) {
        if (!used[std::size_t(v)]) {
            ++r.unused_vertices;
            continue;
        }
        ++used_count;
        if (ds.find(v) == v) ++r.components;
    }
    r.euler = used_count - int(undirected.size()) + int(m.triangles.size());
    r.genus = (2 * r.components - r.euler) / 2;
    r.signed_volume = enclosed_volume(m);
    return r;
}

std::vector<Tri> boundary_faces(const TetMesh &m) {
    static constexpr int kFaces[4][3] = {{0, 2, 1}, {0, 1, 3}, {0, 3, 2}, {1, 2, 3}};
    std::map<std::array<int, 3>, std::pair<Tri, int>> faces;
    for (const Tet &t : m.tets)
        for (const auto &f : kFaces) {
            Tri tri{t[f[0]], t[f[1]], t[f[2]]};
            std::array<int, 3> key = tri;
            std::sort(key.begin(), key.end());
            auto [it, fresh] = faces.try_emplace(key, tri, 0);
            ++it->second.second;
        }
    std::vector<Tri> out;
    for (const auto &[key, v] : faces)
        if (v.second == 1) out.push_back(v.first);
    return out;
}

std::vector<std::array<int, 2>> tet_edges(const TetMesh &m) {
    std::vector<std::array<int, 2>> e;
    e.reserve(m.tets.size() * 6);
    for (const Tet &t : m.tets)
        for (int a = 0; a < 4; ++a)
            for (int b = a + 1; b < 4; ++b) e.push_back({std::min(t[a], t[b]), std::max(t[a], t[b])});
    std::sort(e.begin(), e.end());
    e.erase(std::unique(e.begin(), e.end()), e.end());
    return e;
}

} // namespace lvmesh
