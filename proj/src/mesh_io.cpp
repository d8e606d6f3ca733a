#include "lvmesh/mesh_io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

namespace lvmesh {

namespace {

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::ofstream open_out(const std::filesystem::path &path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    require(bool(out), "cannot write " + path.string());
    return out;
}

void write_points(std::ostream &out, const std::vector<Vec3> &v) {
    out << "POINTS " << v.size() << " double\n";
    for (const Vec3 &p : v) out << num(p.x()) << ' ' << num(p.y()) << ' ' << num(p.z()) << '\n';
}

class Reader {
  public:
    explicit Reader(const std::filesystem::path &path) : path_(path) {
        std::ifstream in(path, std::ios::binary);
        require(bool(in), "cannot read " + path.string());
        std::getline(in, version_);
        std::getline(in, title_);
        std::stringstream ss;
        ss << in.rdbuf();
        body_.str(ss.str());
        require(version_.rfind("# vtk DataFile", 0) == 0, path.string() + ": not a legacy VTK file");
    }
    const std::string &title() const { return title_; }
    std::string word() {
        std::string w;
        if (!(body_ >> w)) fail("unexpected end of file");
        return w;
    }
    bool next(std::string &w) { return bool(body_ >> w); }
    long integer() {
        const std::string w = word();
        try {
            std::size_t used = 0;
            const long v = std::stol(w, &used);
            if (used == w.size()) return v;
        } catch (const std::exception &) {
        }
        fail("expected an integer, got '" + w + "'");
        return 0;
    }
    double real() {
        const std::string w = word();
        try {
            std::size_t used = 0;
            const double v = std::stod(w, &used);
            if (used == w.size()) return v;
        } catch (const std::exception &) {
        }
        fail("expected a number, got '" + w + "'");
        return 0.0;
    }
    void expect(const std::string &w) {
        const std::string got = word();
        if (got != w) fail("expected '" + w + "', got '" + got + "'");
    }
    [[noreturn]] void fail(const std::string &msg) const { throw Error(path_.string() + ": " + msg); }

    std::vector<Vec3> points() {
        const long n = integer();
        if (n < 0) fail("negative point count");
        word(); // float or double
        std::vector<Vec3> v(static_cast<std::size_t>(n));
        for (Vec3 &p : v) {
            const double x = real(), y = real();
            p = Vec3(x, y, real());
        }
        return v;
    }

  private:
    std::filesystem::path path_;
    std::string version_, title_;
    std::istringstream body_;
};

int frame_from_title(const std::string &title) {
    const auto pos = title.find("frame ");
    if (pos == std::string::npos) return 0;
    try {
        return std::stoi(title.substr(pos + 6));
    } catch (const std::exception &) {
        return 0;
    }
}

} // namespace

void write_vtk(const SurfaceMesh &mesh, const std::filesystem::path &path) {
    std::ofstream out = open_out(path);
    out << "# vtk DataFile Version 3.0\n";
    out << "lvmesh surface frame " << mesh.frame_id << "\n";
    out << "ASCII\nDATASET POLYDATA\n";
    write_points(out, mesh.vertices);
    out << "POLYGONS " << mesh.triangles.size() << ' ' << mesh.triangles.size() * 4 << '\n';
    for (const Tri &t : mesh.triangles) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
    require(bool(out), "write failed: " + path.string());
}

SurfaceMesh read_vtk_surface(const std::filesystem::path &path) {
    Reader r(path);
    SurfaceMesh m;
    m.frame_id = frame_from_title(r.title());
    r.expect("ASCII");
    r.expect("DATASET");
    r.expect("POLYDATA");
    std::string w;
    while (r.next(w)) {
        if (w == "POINTS") {
            m.vertices = r.points();
        } else if (w == "POLYGONS") {
            const long n = r.integer();
            r.integer();
            for (long i = 0; i < n; ++i) {
                if (r.integer() != 3) r.fail("only triangles are supported");
                Tri t{};
                for (int &v : t) {
                    v = int(r.integer());
                    if (v < 0 || std::size_t(v) >= m.vertices.size()) r.fail("vertex index out of range");
                }
                m.triangles.push_back(t);
            }
        } else {
            break; // attribute sections are not needed
        }
    }
    if (m.vertices.empty()) r.fail("no POINTS section");
    return m;
}

void write_vtk(const TetMesh &mesh, const std::filesystem::path &path) {
    std::ofstream out = open_out(path);
    out << "# vtk DataFile Version 3.0\n";
    out << "lvmesh tetmesh frame " << mesh.frame_id << "\n";
    out << "ASCII\nDATASET UNSTRUCTURED_GRID\n";
    write_points(out, mesh.vertices);
    out << "CELLS " << mesh.tets.size() << ' ' << mesh.tets.size() * 5 << '\n';
    for (const Tet &t : mesh.tets) out << "4 " << t[0] << ' ' << t[1] << ' ' << t[2] << ' ' << t[3] << '\n';
    out << "CELL_TYPES " << mesh.tets.size() << '\n';
    for (std::size_t i = 0; i < mesh.tets.size(); ++i) out << "10\n";
    out << "CELL_DATA " << mesh.tets.size() << '\n';
    out << "SCALARS scaled_jacobian double 1\nLOOKUP_TABLE default\n";
    for (std::size_t t = 0; t < mesh.tets.size(); ++t) {
        const Tet &k = mesh.tets[t];
        out << num(scaled_jacobian(mesh.vertices[std::size_t(k[0])], mesh.vertices[std::size_t(k[1])],
                                   mesh.vertices[std::size_t(k[2])], mesh.vertices[std::size_t(k[3])]))
            << '\n';
    }
    std::vector<int> sid(mesh.vertices.size(), -1);
    for (std::size_t s = 0; s < mesh.boundary_map.size(); ++s) sid[std::size_t(mesh.boundary_map[s])] = int(s);
    out << "POINT_DATA " << mesh.vertices.size() << '\n';
    out << "SCALARS surface_vertex_id int 1\nLOOKUP_TABLE default\n";
    for (int s : sid) out << s << '\n';
    require(bool(out), "write failed: " + path.string());
}

TetMesh read_vtk_tetmesh(const std::filesystem::path &path) {
    Reader r(path);
    TetMesh m;
    m.frame_id = frame_from_title(r.title());
    r.expect("ASCII");
    r.expect("DATASET");
    r.expect("UNSTRUCTURED_GRID");
    std::vector<int> sid;
    std::string w;
    while (r.next(w)) {
        if (w == "POINTS") {
            m.vertices = r.points();
        } else if (w == "CELLS") {
            const long n = r.integer();
            r.integer();
            for (long i = 0; i < n; ++i) {
                if (r.integer() != 4) r.fail("only tetrahedra are supported");
                Tet t{};
                for (int &v : t) {
                    v = int(r.integer());
                    if (v < 0 || std::size_t(v) >= m.vertices.size()) r.fail("vertex index out of range");
                }
                m.tets.push_back(t);
            }
        } else if (w == "CELL_TYPES") {
            const long n = r.integer();
            for (long i = 0; i < n; ++i)
                if (r.integer() != 10) r.fail("cell type other than tetrahedron (10)");
        } else if (w == "CELL_DATA" || w == "POINT_DATA") {
            r.integer();
        } else if (w == "SCALARS") {
            const std::string name = r.word();
            r.word();
            std::string t = r.word();
            if (t != "LOOKUP_TABLE") {
                r.expect("LOOKUP_TABLE");
            }
            r.word();
            if (name == "surface_vertex_id") {
                sid.resize(m.vertices.size());
                for (int &s : sid) s = int(r.integer());
            } else if (name == "scaled_jacobian") {
                for (std::size_t i = 0; i < m.tets.size(); ++i) r.real();
            } else {
                r.fail("unknown data array '" + name + "'");
            }
        } else {
            r.fail("unexpected keyword '" + w + "'");
        }
    }
    if (m.vertices.empty()) r.fail("no POINTS section");
    int ns = 0;
    for (int s : sid) ns = std::max(ns, s + 1);
    m.boundary_map.assign(std::size_t(ns), -1);
    for (std::size_t v = 0; v < sid.size(); ++v)
        if (sid[v] >= 0) {
            if (m.boundary_map[std::size_t(sid[v])] != -1) r.fail("duplicate surface_vertex_id");
            m.boundary_map[std::size_t(sid[v])] = int(v);
        }
    for (int v : m.boundary_map)
        if (v < 0) r.fail("surface_vertex_id values are not contiguous");
    return m;
}

void write_ply(const SurfaceMesh &mesh, const std::filesystem::path &path) {
    std::ofstream out = open_out(path);
    out << "ply\nformat ascii 1.0\n";
    out << "element vertex " << mesh.vertices.size() << "\nproperty double x\nproperty double y\nproperty double z\n";
    out << "element face " << mesh.triangles.size() << "\nproperty list uchar int vertex_indices\nend_header\n";
    for (const Vec3 &p : mesh.vertices) out << num(p.x()) << ' ' << num(p.y()) << ' ' << num(p.z()) << '\n';
    for (const Tri &t : mesh.triangles) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
    require(bool(out), "write failed: " + path.string());
}

} // namespace lvmesh
