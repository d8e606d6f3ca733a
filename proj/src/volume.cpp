#include "lvmesh/volume.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace lvmesh {

Vec3 Grid::point(std::size_t idx) const {
    const std::size_t nx = std::size_t(dims[0]);
    const std::size_t ny = std::size_t(dims[1]);
    const int i = int(idx % nx);
    const int j = int((idx / nx) % ny);
    const int k = int(idx / (nx * ny));
    return point(i, j, k);
}

void Grid::validate() const {
    for (int a = 0; a < 3; ++a) {
        require(dims[a] > 0, "grid: dimensions must be positive");
        require(spacing[a] > 0.0 && std::isfinite(spacing[a]), "grid: spacing must be positive");
        require(std::isfinite(origin[a]), "grid: origin must be finite");
    }
}

const char *to_string(ElementKind k) {
    switch (k) {
    case ElementKind::u8: return "u8";
    case ElementKind::i16: return "i16";
    case ElementKind::f32: return "f32";
    }
    return "?";
}

void ImageVolume::validate() const {
    grid.validate();
    require(data.size() == grid.voxel_count(), "image: data length does not match dims");
}

std::size_t LabelVolume::count(std::uint8_t label) const {
    return std::size_t(std::count(data.begin(), data.end(), label));
}

void LabelVolume::validate() const {
    grid.validate();
    require(data.size() == grid.voxel_count(), "labels: data length does not match dims");
    for (auto v : data) require(v <= kLvPool, "labels: value outside {0,1,2,3}");
}

void FrameSequence::validate() const {
    require(frames.size() >= 2, "frame sequence: need at least two frames");
    for (const auto &f : frames) {
        f.validate();
        require(f.grid == frames.front().grid, "frame sequence: frames do not share one grid");
    }
}

// -------------------------------------------------------------------------

namespace {

struct Stencil {
    int i0, i1;
    double f;     // weight of i1
    double dfdc;  // 1 inside the valid range, 0 when clamped
};

Stencil axis_stencil(double c, int n) {
    if (n == 1) return {0, 0, 0.0, 0.0};
    double d = 1.0;
    if (c <= 0.0) {
        c = 0.0;
        d = 0.0;
    } else if (c >= n - 1) {
        c = n - 1;
        d = 0.0;
    }
    int i0 = std::min(int(std::floor(c)), n - 2);
    return {i0, i0 + 1, c - i0, d};
}

} // namespace

double sample_trilinear(const ImageVolume &vol, const Vec3 &p, Vec3 &grad) {
    const Grid &g = vol.grid;
    const Vec3 c = g.to_voxel(p);
    const Stencil sx = axis_stencil(c.x(), g.dims[0]);
    const Stencil sy = axis_stencil(c.y(), g.dims[1]);
    const Stencil sz = axis_stencil(c.z(), g.dims[2]);

    const double v000 = vol.at(sx.i0, sy.i0, sz.i0), v100 = vol.at(sx.i1, sy.i0, sz.i0);
    const double v010 = vol.at(sx.i0, sy.i1, sz.i0), v110 = vol.at(sx.i1, sy.i1, sz.i0);
    const double v001 = vol.at(sx.i0, sy.i0, sz.i1), v101 = vol.at(sx.i1, sy.i0, sz.i1);
    const double v011 = vol.at(sx.i0, sy.i1, sz.i1), v111 = vol.at(sx.i1, sy.i1, sz.i1);

    const double fx = sx.f, fy = sy.f, fz = sz.f;
    const double c00 = v000 + fx * (v100 - v000), c10 = v010 + fx * (v110 - v010);
    const double c01 = v001 + fx * (v101 - v001), c11 = v011 + fx * (v111 - v011);
    const double c0 = c00 + fy * (c10 - c00), c1 = c01 + fy * (c11 - c01);
    const double val = c0 + fz * (c1 - c0);

    const double dx0 = (v100 - v000) + fy * ((v110 - v010) - (v100 - v000));
    const double dx1 = (v101 - v001) + fy * ((v111 - v011) - (v101 - v001));
    const double ddx = dx0 + fz * (dx1 - dx0);
    const double ddy = (c10 - c00) + fz * ((c11 - c01) - (c10 - c00));
    const double ddz = c1 - c0;
    grad = Vec3(ddx * sx.dfdc / g.spacing.x(), ddy * sy.dfdc / g.spacing.y(), ddz * sz.dfdc / g.spacing.z());
    return val;
}

double sample_trilinear(const ImageVolume &vol, const Vec3 &p) {
    Vec3 unused;
    return sample_trilinear(vol, p, unused);
}

// -------------------------------------------------------------------------

namespace {

Grid resampled_grid(const Grid &g, double new_sz, int &nz_out) {
    require(new_sz > 0.0 && std::isfinite(new_sz), "resample_z: slice thickness must be positive");
    const int nz = int(std::lround(g.dims[2] * g.spacing.z() / new_sz));
    require(nz >= 2, "resample_z: degenerate result (fewer than two slices)");
    Grid out = g;
    out.dims[2] = nz;
    out.spacing.z() = new_sz;
    // Keep the slab's outer faces where they were.
    out.origin.z() = g.origin.z() - 0.5 * g.spacing.z() + 0.5 * new_sz;
    nz_out = nz;
    return out;
}

} // namespace

ImageVolume resample_z(const ImageVolume &vol, double new_sz) {
    int nz = 0;
    const Grid og = resampled_grid(vol.grid, new_sz, nz);
    if (og == vol.grid) return vol;
    ImageVolume out(og, vol.kind);
    const int nx = og.dims[0], ny = og.dims[1], nz_in = vol.grid.dims[2];
    for (int k = 0; k < nz; ++k) {
        const double cz = (og.origin.z() + k * new_sz - vol.grid.origin.z()) / vol.grid.spacing.z();
        const Stencil s = axis_stencil(cz, nz_in);
        for (int j = 0; j < ny; ++j) {
            for (int i = 0; i < nx; ++i) {
                double v = vol.at(i, j, s.i0) + s.f * (vol.at(i, j, s.i1) - vol.at(i, j, s.i0));
                if (vol.kind != ElementKind::f32) v = std::round(v);
                out.at(i, j, k) = float(v);
            }
        }
    }
    return out;
}

LabelVolume resample_z(const LabelVolume &vol, double new_sz) {
    int nz = 0;
    const Grid og = resampled_grid(vol.grid, new_sz, nz);
    if (og == vol.grid) return vol;
    LabelVolume out(og);
    const int nx = og.dims[0], ny = og.dims[1], nz_in = vol.grid.dims[2];
    for (int k = 0; k < nz; ++k) {
        const double cz = (og.origin.z() + k * new_sz - vol.grid.origin.z()) / vol.grid.spacing.z();
        const int ks = std::clamp(int(std::floor(cz + 0.5)), 0, nz_in - 1);
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) out.at(i, j, k) = vol.at(i, j, ks);
    }
    return out;
}

ImageVolume downsample2(const ImageVolume &vol, int min_dim) {
    const Grid &g = vol.grid;
    Grid og = g;
    std::array<int, 3> factor{1, 1, 1};
    for (int a = 0; a < 3; ++a) {
        if (g.dims[a] > min_dim) {
            factor[a] = 2;
            og.dims[a] = (g.dims[a] + 1) / 2;
            og.spacing[a] = 2.0 * g.spacing[a];
            og.origin[a] = g.origin[a] + 0.5 * g.spacing[a];
        }
    }
    ImageVolume out(og, ElementKind::f32);
    for (int k = 0; k < og.dims[2]; ++k)
        for (int j = 0; j < og.dims[1]; ++j)
            for (int i = 0; i < og.dims[0]; ++i) {
                double acc = 0.0;
                int n = 0;
                for (int dk = 0; dk < factor[2]; ++dk)
                    for (int dj = 0; dj < factor[1]; ++dj)
                        for (int di = 0; di < factor[0]; ++di) {
                            const int si = std::min(i * factor[0] + di, g.dims[0] - 1);
                            const int sj = std::min(j * factor[1] + dj, g.dims[1] - 1);
                            const int sk = std::min(k * factor[2] + dk, g.dims[2] - 1);
                            acc += vol.at(si, sj, sk);
                            ++n;
                        }
                out.at(i, j, k) = float(acc / n);
            }
    return out;
}

ImageVolume gaussian_smooth(const ImageVolume &vol, double sigma) {
    if (sigma <= 0.0) return vol;
    const int radius = int(std::ceil(3.0 * sigma));
    std::vector<double> kernel(2 * radius + 1);
    double ksum = 0.0;
    for (int r = -radius; r <= radius; ++r) ksum += kernel[r + radius] = std::exp(-0.5 * r * r / (sigma * sigma));
    for (auto &w : kernel) w /= ksum;

    const Grid &g = vol.grid;
    std::vector<double> cur(vol.data.begin(), vol.data.end()), next(cur.size());
    const std::array<std::size_t, 3> stride{1, std::size_t(g.dims[0]), std::size_t(g.dims[0]) * g.dims[1]};
    for (int a = 0; a < 3; ++a) {
        for (int k = 0; k < g.dims[2]; ++k)
            for (int j = 0; j < g.dims[1]; ++j)
                for (int i = 0; i < g.dims[0]; ++i) {
                    const std::array<int, 3> ijk{i, j, k};
                    const std::size_t base = g.index(i, j, k) - std::size_t(ijk[a]) * stride[a];
                    double acc = 0.0;
                    for (int r = -radius; r <= radius; ++r) {
                        const int s = std::clamp(ijk[a] + r, 0, g.dims[a] - 1);
                        acc += kernel[r + radius] * cur[base + std::size_t(s) * stride[a]];
                    }
                    next[g.index(i, j, k)] = acc;
                }
        std::swap(cur, next);
    }
    ImageVolume out(g, ElementKind::f32);
    std::transform(cur.begin(), cur.end(), out.data.begin(), [](double v) { return float(v); });
    return out;
}

// -------------------------------------------------------------------------
// MetaImage

namespace {

std::string trim(const std::string &s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<double> parse_numbers(const std::string &key, const std::string &val, std::size_t expected) {
    std::istringstream is(val);
    std::vector<double> out;
    double v;
    while (is >> v) out.push_back(v);
    if (out.size() != expected || !is.eof())
        throw Error("mhd: key '" + key + "' expects " + std::to_string(expected) + " numbers, got '" + val + "'");
    return out;
}

std::size_t element_bytes(ElementKind k) {
    switch (k) {
    case ElementKind::u8: return 1;
    case ElementKind::i16: return 2;
    case ElementKind::f32: return 4;
    }
    return 0;
}

const char *met_name(ElementKind k) {
    switch (k) {
    case ElementKind::u8: return "MET_UCHAR";
    case ElementKind::i16: return "MET_SHORT";
    case ElementKind::f32: return "MET_FLOAT";
    }
    return "";
}

template <typename T> T from_le(const unsigned char *p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
        auto *b = reinterpret_cast<unsigned char *>(&v);
        std::reverse(b, b + sizeof(T));
    }
    return v;
}

template <typename T> void to_le(T v, unsigned char *p) {
    std::memcpy(p, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) std::reverse(p, p + sizeof(T));
}

std::string fmt_vec(const Vec3 &v) {
    std::ostringstream os;
    os.precision(17);
    os << v.x() << ' ' << v.y() << ' ' << v.z();
    return os.str();
}

} // namespace

MetaImage read_meta(const std::filesystem::path &header) {
    std::ifstream in(header);
    if (!in) throw Error("mhd: cannot open '" + header.string() + "'");
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = trim(line.substr(0, eq));
        kv[key] = trim(line.substr(eq + 1));
        if (key == "ElementDataFile") break;
    }
    auto need = [&](const char *k) -> const std::string & {
        auto it = kv.find(k);
        if (it == kv.end()) throw Error(std::string("mhd: missing key '") + k + "' in " + header.string());
        return it->second;
    };

    MetaImage img;
    if (auto it = kv.find("NDims"); it != kv.end() && trim(it->second) != "3")
        throw Error("mhd: only NDims = 3 is supported");
    const auto dims = parse_numbers("DimSize", need("DimSize"), 3);
    for (int a = 0; a < 3; ++a) {
        require(dims[a] >= 1 && dims[a] == std::floor(dims[a]), "mhd: DimSize entries must be positive integers");
        img.grid.dims[a] = int(dims[a]);
    }
    if (auto it = kv.find("ElementSpacing"); it != kv.end()) {
        const auto s = parse_numbers("ElementSpacing", it->second, 3);
        img.grid.spacing = Vec3(s[0], s[1], s[2]);
    }
    if (auto it = kv.find("Offset"); it != kv.end()) {
        const auto o = parse_numbers("Offset", it->second, 3);
        img.grid.origin = Vec3(o[0], o[1], o[2]);
    }
    img.grid.validate();
    if (auto it = kv.find("ElementNumberOfChannels"); it != kv.end()) {
        img.channels = int(parse_numbers("ElementNumberOfChannels", it->second, 1)[0]);
        require(img.channels >= 1, "mhd: ElementNumberOfChannels must be >= 1");
    }
    if (auto it = kv.find("BinaryDataByteOrderMSB"); it != kv.end() && it->second == "True")
        throw Error("mhd: big-endian payloads are not supported");
    if (auto it = kv.find("CompressedData"); it != kv.end() && it->second == "True")
        throw Error("mhd: compressed payloads are not supported");

    const std::string &et = need("ElementType");
    if (et == "MET_UCHAR")
        img.kind = ElementKind::u8;
    else if (et == "MET_SHORT")
        img.kind = ElementKind::i16;
    else if (et == "MET_FLOAT")
        img.kind = ElementKind::f32;
    else
        throw Error("mhd: unsupported element type '" + et + "'");

    const std::string &df = need("ElementDataFile");
    if (df == "LOCAL" || df == "LIST") throw Error("mhd: ElementDataFile = " + df + " is not supported");
    const std::filesystem::path raw = header.parent_path() / df;
    std::ifstream rin(raw, std::ios::binary);
    if (!rin) throw Error("mhd: cannot open payload '" + raw.string() + "'");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(rin)), std::istreambuf_iterator<char>());

    const std::size_t n = img.grid.voxel_count() * std::size_t(img.channels);
    const std::size_t eb = element_bytes(img.kind);
    if (bytes.size() != n * eb)
        throw Error("mhd: payload size mismatch: header declares " + std::to_string(n * eb) + " bytes, file has " +
                    std::to_string(bytes.size()));
    img.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const unsigned char *p = bytes.data() + i * eb;
        switch (img.kind) {
        case ElementKind::u8: img.values[i] = float(p[0]); break;
        case ElementKind::i16: img.values[i] = float(from_le<std::int16_t>(p)); break;
        case ElementKind::f32: img.values[i] = from_le<float>(p); break;
        }
    }
    return img;
}

void write_meta(const MetaImage &img, const std::filesystem::path &header) {
    img.grid.validate();
    const std::size_t n = img.grid.voxel_count() * std::size_t(img.channels);
    require(img.values.size() == n, "mhd: value count does not match grid and channels");

    std::filesystem::path raw = header;
    raw.replace_extension(".raw");
    {
        std::ofstream out(header);
        if (!out) throw Error("mhd: cannot write '" + header.string() + "'");
        out << "ObjectType = Image\n"
            << "NDims = 3\n"
            << "BinaryData = True\n"
            << "BinaryDataByteOrderMSB = False\n"
            << "CompressedData = False\n"
            << "DimSize = " << img.grid.dims[0] << ' ' << img.grid.dims[1] << ' ' << img.grid.dims[2] << '\n'
            << "ElementSpacing = " << fmt_vec(img.grid.spacing) << '\n'
            << "Offset = " << fmt_vec(img.grid.origin) << '\n';
        if (img.channels != 1) out << "ElementNumberOfChannels = " << img.channels << '\n';
        out << "ElementType = " << met_name(img.kind) << '\n' << "ElementDataFile = " << raw.filename().string() << '\n';
        if (!out) throw Error("mhd: write failed for '" + header.string() + "'");
    }
    const std::size_t eb = element_bytes(img.kind);
    std::vector<unsigned char> bytes(n * eb);
    for (std::size_t i = 0; i < n; ++i) {
        unsigned char *p = bytes.data() + i * eb;
        switch (img.kind) {
        case ElementKind::u8: p[0] = static_cast<unsigned char>(img.values[i]); break;
        case ElementKind::i16: to_le(static_cast<std::int16_t>(img.values[i]), p); break;
        case ElementKind::f32: to_le(img.values[i], p); break;
        }
    }
    std::ofstream out(raw, std::ios::binary);
    if (!out) throw Error("mhd: cannot write '" + raw.string() + "'");
    out.write(reinterpret_cast<const char *>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) throw Error("mhd: write failed for '" + raw.string() + "'");
}

ImageVolume read_mhd(const std::filesystem::path &header) {
    MetaImage m = read_meta(header);
    require(m.channels == 1, "mhd: expected a scalar image, got " + std::to_string(m.channels) + " channels");
    ImageVolume v;
    v.grid = m.grid;
    v.kind = m.kind;
    v.data = std::move(m.values);
    return v;
}

LabelVolume read_labels_mhd(const std::filesystem::path &header) {
    MetaImage m = read_meta(header);
    require(m.channels == 1, "mhd: label volumes must have one channel");
    require(m.kind != ElementKind::f32, "mhd: label volumes must use an integer element type");
    LabelVolume v(m.grid);
    for (std::size_t i = 0; i < m.values.size(); ++i) {
        const float x = m.values[i];
        require(x >= 0.0f && x <= float(kLvPool), "mhd: label value outside {0,1,2,3}");
        v.data[i] = static_cast<std::uint8_t>(x);
    }
    return v;
}

void write_mhd(const ImageVolume &vol, const std::filesystem::path &header) {
    vol.validate();
    MetaImage m;
    m.grid = vol.grid;
    m.kind = vol.kind;
    m.values = vol.data;
    if (vol.kind != ElementKind::f32) {
        const float lo = vol.kind == ElementKind::u8 ? 0.0f : -32768.0f;
        const float hi = vol.kind == ElementKind::u8 ? 255.0f : 32767.0f;
        for (float v : m.values)
            require(v >= lo && v <= hi && v == std::floor(v),
                    std::string("mhd: value not representable as ") + to_string(vol.kind));
    }
    write_meta(m, header);
}

void write_mhd(const LabelVolume &vol, const std::filesystem::path &header) {
    vol.validate();
    MetaImage m;
    m.grid = vol.grid;
    m.kind = ElementKind::u8;
    m.values.assign(vol.data.begin(), vol.data.end());
    write_meta(m, header);
}

} // namespace lvmesh
