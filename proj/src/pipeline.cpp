#include "lvmesh/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>
#include <openssl/evp.h>

#include "lvmesh/align.hpp"
#include "lvmesh/lbwarp.hpp"
#include "lvmesh/mesh_io.hpp"
#include "lvmesh/metrics.hpp"
#include "lvmesh/tetmesh.hpp"

namespace lvmesh::pipeline {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// config schema

class Section {
  public:
    Section(const json &j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail(path_, "must be an object");
    }

    [[noreturn]] static void fail(const std::string &path, const std::string &msg) {
        throw Error("config " + (path.empty() ? std::string("<root>") : path) + ": " + msg);
    }

    bool has(const std::string &key) {
        seen_.insert(key);
        return j_.contains(key) && !j_.at(key).is_null();
    }
    std::string at(const std::string &key) const { return path_.empty() ? key : path_ + "." + key; }
    const json &raw(const std::string &key) {
        seen_.insert(key);
        return j_.at(key);
    }

    double number(const std::string &key, double def, double lo, double hi, bool lo_open = false) {
        if (!has(key)) return def;
        const json &v = j_.at(key);
        if (!v.is_number()) fail(at(key), "must be a number");
        const double x = v.get<double>();
        if (!(lo_open ? x > lo : x >= lo) || !(x <= hi)) {
            std::ostringstream s;
            s << "must be in " << (lo_open ? "(" : "[") << lo << ", " << hi << "], got " << x;
            fail(at(key), s.str());
        }
        return x;
    }
    long integer(const std::string &key, long def, long lo, long hi) {
        if (!has(key)) return def;
        const json &v = j_.at(key);
        if (!v.is_number_integer()) fail(at(key), "must be an integer");
        const long x = v.get<long>();
        if (x < lo || x > hi)
            fail(at(key), "must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "], got " + std::to_string(x));
        return x;
    }
    bool boolean(const std::string &key, bool def) {
        if (!has(key)) return def;
        const json &v = j_.at(key);
        if (!v.is_boolean()) fail(at(key), "must be true or false");
        return v.get<bool>();
    }
    std::string string(const std::string &key, const std::string &def) {
        if (!has(key)) return def;
        const json &v = j_.at(key);
        if (!v.is_string()) fail(at(key), "must be a string");
        return v.get<std::string>();
    }
    Vec3 vec3(const std::string &key, const Vec3 &def, bool positive) {
        if (!has(key)) return def;
        const json &v = j_.at(key);
        if (!v.is_array() || v.size() != 3) fail(at(key), "must be an array of three numbers");
        Vec3 r;
        for (int a = 0; a < 3; ++a) {
            if (!v[std::size_t(a)].is_number()) fail(at(key), "must be an array of three numbers");
            r[a] = v[std::size_t(a)].get<double>();
            if (positive && !(r[a] > 0.0)) fail(at(key), "entries must be positive");
        }
        return r;
    }
    std::vector<std::string> strings(const std::string &key) {
        const json &v = raw(key);
        if (!v.is_array()) fail(at(key), "must be an array of strings");
        std::vector<std::string> out;
        for (const json &e : v) {
            if (!e.is_string()) fail(at(key), "must be an array of strings");
            out.push_back(e.get<std::string>());
        }
        return out;
    }
    // Rejects keys that were never asked for.
    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) fail(at(it.key()), "unknown key");
    }

  private:
    const json &j_;
    std::string path_;
    std::set<std::string> seen_;
};

json vec_json(const Vec3 &v) { return json::array({v.x(), v.y(), v.z()}); }

// ---------------------------------------------------------------------------
// output helpers

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string frame_name(const std::string &stem, int t, const std::string &ext) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "_%02d", t);
    return stem + buf + ext;
}

struct Artifacts {
    fs::path root;
    std::vector<std::pair<std::string, std::string>> files; // relative path, kind

    fs::path add(const std::string &rel, const std::string &kind) {
        files.emplace_back(rel, kind);
        const fs::path p = root / rel;
        fs::create_directories(p.parent_path());
        return p;
    }
    void text(const std::string &rel, const std::string &kind, const std::string &content) {
        std::ofstream out(add(rel, kind), std::ios::binary);
        out << content;
        require(bool(out), "cannot write " + (root / rel).string());
    }
};

template <typename F> auto stage(const std::string &name, int frame, F &&f) -> decltype(f()) {
    try {
        return f();
    } catch (const Error &e) {
        std::string where = "stage " + name;
        if (frame >= 0) where += ", frame " + std::to_string(frame);
        throw Error(where + ": " + e.what());
    }
}

std::string backend_tag(reg::Backend b) {
    std::string s = reg::to_string(b);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return char(std::toupper(c)); });
    return s;
}

std::vector<std::string> split(const std::string &line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream s(line);
    while (std::getline(s, cur, sep)) out.push_back(cur);
    return out;
}

} // namespace

// ---------------------------------------------------------------------------

std::uint64_t stage_seed(std::uint64_t root, const std::string &stage) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : stage) {
        h ^= c;
        h *= 1099511628211ull;
    }
    std::uint64_t z = root + 0x9e3779b97f4a7c15ull * (h | 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

std::string sha256_file(const fs::path &path) {
    std::ifstream in(path, std::ios::binary);
    require(bool(in), "cannot read " + path.string());
    EVP_MD_CTX *ctx = EVP_MD_CTX_new();
    require(ctx != nullptr, "sha256: context allocation failed");
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), std::streamsize(buf.size()));
        if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), std::size_t(in.gcount()));
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    static const char *hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

// ---------------------------------------------------------------------------

Config parse_config(const std::string &json_text, const fs::path &base_dir) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error &e) {
        throw Error(std::string("config: invalid JSON: ") + e.what());
    }
    Config c;
    Section root(j, "");
    if (!root.has("output_dir")) Section::fail("output_dir", "is required");
    c.output_dir = root.string("output_dir", "");
    if (c.output_dir.empty()) Section::fail("output_dir", "must not be empty");
    if (c.output_dir.is_relative() && !base_dir.empty()) c.output_dir = base_dir / c.output_dir;
    c.seed = std::uint64_t(root.integer("seed", 1, 0, std::numeric_limits<long>::max()));

    if (!root.has("input")) Section::fail("input", "is required (\"phantom\" or \"images\" + \"masks\")");
    {
        Section in(root.raw("input"), "input");
        const bool ph = in.has("phantom"), im = in.has("images");
        if (ph == im) Section::fail("input", "give exactly one of \"phantom\" or \"images\"");
        if (ph) {
            Section p(in.raw("phantom"), "input.phantom");
            PhantomSpec s;
            if (p.has("dims")) {
                const json &d = p.raw("dims");
                if (!d.is_array() || d.size() != 3) Section::fail("input.phantom.dims", "must be three integers");
                for (int a = 0; a < 3; ++a) {
                    if (!d[std::size_t(a)].is_number_integer() || d[std::size_t(a)].get<long>() < 8 ||
                        d[std::size_t(a)].get<long>() > 512)
                        Section::fail("input.phantom.dims", "entries must be integers in [8, 512]");
                    s.dims[std::size_t(a)] = int(d[std::size_t(a)].get<long>());
                }
            }
            s.spacing = p.vec3("spacing", s.spacing, true);
            s.endo_semi_axes = p.vec3("endo_semi_axes", s.endo_semi_axes, true);
            s.epi_semi_axes = p.vec3("epi_semi_axes", s.epi_semi_axes, true);
            s.base_z = p.number("base_z", s.base_z, -1e3, 1e3);
            s.n_frames = int(p.integer("n_frames", s.n_frames, 2, 100));
            s.radial_contraction = p.number("radial_contraction", s.radial_contraction, 0.0, 0.9);
            s.longitudinal_shortening = p.number("longitudinal_shortening", s.longitudinal_shortening, 0.0, 0.9);
            s.noise_sigma = p.number("noise_sigma", s.noise_sigma, 0.0, 1e3);
            s.misalignment_mm = p.number("misalignment_mm", s.misalignment_mm, 0.0, 50.0);
            p.finish();
            try {
                s.validate();
            } catch (const Error &e) {
                Section::fail("input.phantom", e.what());
            }
            c.phantom = s;
        } else {
            if (!in.has("masks")) Section::fail("input.masks", "is required with \"images\"");
            for (const std::string &s : in.strings("images")) c.images.push_back(base_dir / s);
            for (const std::string &s : in.strings("masks")) c.masks.push_back(base_dir / s);
            if (c.images.size() < 2) Section::fail("input.images", "needs at least two frames");
            if (c.images.size() != c.masks.size())
                Section::fail("input.masks", "needs one mask per image (" + std::to_string(c.images.size()) + ")");
        }
        in.finish();
    }

    if (root.has("align")) {
        Section a(root.raw("align"), "align");
        c.align = a.boolean("enabled", true);
        a.finish();
    }

    if (root.has("registration")) {
        Section r(root.raw("registration"), "registration");
        reg::RegistrationConfig &rc = c.registration;
        if (r.has("backends")) {
            c.backends.clear();
            for (const std::string &s : r.strings("backends")) {
                try {
                    c.backends.push_back(reg::parse_backend(s));
                } catch (const Error &) {
                    Section::fail("registration.backends", "unknown backend '" + s + "' (dense, ffd)");
                }
            }
            if (c.backends.empty()) Section::fail("registration.backends", "must name at least one backend");
        }
        if (r.has("pairings")) {
            c.pairings.clear();
            for (const std::string &s : r.strings("pairings")) {
                try {
                    c.pairings.push_back(reg::parse_pairing(s));
                } catch (const Error &) {
                    Section::fail("registration.pairings", "unknown pairing '" + s + "' (fixed_reference, sequential)");
                }
            }
            if (c.pairings.empty()) Section::fail("registration.pairings", "must name at least one pairing");
        }
        rc.lambda = r.number("lambda", rc.lambda, 0.0, 1e6);
        rc.levels = int(r.integer("levels", rc.levels, 1, 8));
        rc.dense_iterations = int(r.integer("dense_iterations", rc.dense_iterations, 1, 100000));
        rc.learning_rate = r.number("learning_rate", rc.learning_rate, 0.0, 10.0, true);
        rc.gradient_smoothing_mm = r.number("gradient_smoothing_mm", rc.gradient_smoothing_mm, 0.0, 1e3);
        rc.image_smoothing_vox = r.number("image_smoothing_vox", rc.image_smoothing_vox, 0.0, 100.0);
        rc.ffd_iterations = int(r.integer("ffd_iterations", rc.ffd_iterations, 1, 100000));
        rc.ffd_samples = int(r.integer("ffd_samples", rc.ffd_samples, 16, 10000000));
        rc.ffd_control_spacing_vox = r.number("ffd_control_spacing_vox", rc.ffd_control_spacing_vox, 1.0, 1e3);
        r.finish();
        try {
            rc.validate();
        } catch (const Error &e) {
            Section::fail("registration", e.what());
        }
    }

    if (root.has("surface")) {
        Section s(root.raw("surface"), "surface");
        const std::string pol = s.string("policy", to_string(c.iso_policy));
        try {
            c.iso_policy = parse_iso_policy(pol);
        } catch (const Error &) {
            Section::fail("surface.policy", "unknown policy '" + pol + "' (binary, box)");
        }
        c.resample_z_mm = s.number("resample_z_mm", 0.0, 0.0, 100.0);
        c.target_vertices = int(s.integer("target_vertices", c.target_vertices, 4, 10000000));
        s.finish();
    }
    if (root.has("tetmesh")) {
        Section t(root.raw("tetmesh"), "tetmesh");
        c.max_volume = t.number("max_volume", c.max_volume, 0.0, 1e9, true);
        t.finish();
    }
    if (root.has("lbwarp")) {
        Section l(root.raw("lbwarp"), "lbwarp");
        c.lbwarp_tolerance = l.number("tolerance", c.lbwarp_tolerance, 0.0, 1e-2, true);
        c.lbwarp_max_iterations = int(l.integer("max_iterations", c.lbwarp_max_iterations, 1, 100000000));
        l.finish();
    }
    root.finish();
    return c;
}

Config load_config(const fs::path &path) {
    std::ifstream in(path, std::ios::binary);
    require(bool(in), "cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.parent_path());
}

std::string Config::canonical_json() const {
    json j;
    j["seed"] = seed;
    if (phantom) {
        const PhantomSpec &s = *phantom;
        j["input"]["phantom"] = {{"dims", {s.dims[0], s.dims[1], s.dims[2]}},
                                 {"spacing", vec_json(s.spacing)},
                                 {"endo_semi_axes", vec_json(s.endo_semi_axes)},
                                 {"epi_semi_axes", vec_json(s.epi_semi_axes)},
                                 {"base_z", s.base_z},
                                 {"n_frames", s.n_frames},
                                 {"radial_contraction", s.radial_contraction},
                                 {"longitudinal_shortening", s.longitudinal_shortening},
                                 {"noise_sigma", s.noise_sigma},
                                 {"misalignment_mm", s.misalignment_mm}};
    } else {
        json im = json::array(), ma = json::array();
        for (const auto &p : images) im.push_back(p.filename().string());
        for (const auto &p : masks) ma.push_back(p.filename().string());
        j["input"] = {{"images", im}, {"masks", ma}};
    }
    j["align"] = {{"enabled", align}};
    json b = json::array(), p = json::array();
    for (auto x : backends) b.push_back(reg::to_string(x));
    for (auto x : pairings) p.push_back(reg::to_string(x));
    const reg::RegistrationConfig &r = registration;
    j["registration"] = {{"backends", b},
                         {"pairings", p},
                         {"lambda", r.lambda},
                         {"levels", r.levels},
                         {"dense_iterations", r.dense_iterations},
                         {"learning_rate", r.learning_rate},
                         {"gradient_smoothing_mm", r.gradient_smoothing_mm},
                         {"image_smoothing_vox", r.image_smoothing_vox},
                         {"ffd_iterations", r.ffd_iterations},
                         {"ffd_samples", r.ffd_samples},
                         {"ffd_control_spacing_vox", r.ffd_control_spacing_vox}};
    j["surface"] = {{"policy", to_string(iso_policy)}, {"resample_z_mm", resample_z_mm}, {"target_vertices", target_vertices}};
    j["tetmesh"] = {{"max_volume", max_volume}};
    j["lbwarp"] = {{"tolerance", lbwarp_tolerance}, {"max_iterations", lbwarp_max_iterations}};
    return j.dump(2);
}

// ---------------------------------------------------------------------------

fs::path write_phantom(const PhantomSpec &spec, const fs::path &dir, double misalignment_mm,
                       std::uint64_t misalignment_seed) {
    const Phantom ph = generate(spec);
    FrameSequence frames = ph.frames;
    std::vector<LabelVolume> labels = ph.labels;
    std::vector<SliceOffset> shifts;
    if (misalignment_mm > 0.0) {
        Misaligned m = inject_misalignment(labels, frames, misalignment_mm, misalignment_seed);
        frames = std::move(m.frames);
        labels = std::move(m.labels);
        shifts = std::move(m.shifts);
    }
    fs::create_directories(dir);
    json files = json::array();
    for (int t = 0; t < spec.n_frames; ++t) {
        const std::string img = frame_name("frame", t, ".mhd"), msk = frame_name("mask", t, ".mhd"),
                          fld = frame_name("field", t, ".mhd");
        write_mhd(frames.frames[std::size_t(t)], dir / img);
        write_mhd(labels[std::size_t(t)], dir / msk);
        write_field_mhd(ph.fields[std::size_t(t)], dir / fld);
        files.push_back({{"frame", t}, {"image", img}, {"mask", msk}, {"field", fld}});
    }
    json sj = json::array();
    for (std::size_t k = 0; k < shifts.size(); ++k) sj.push_back({{"slice", k}, {"dx_vox", shifts[k].dx}, {"dy_vox", shifts[k].dy}});
    json j;
    j["spec"] = {{"dims", {spec.dims[0], spec.dims[1], spec.dims[2]}},
                 {"spacing", vec_json(spec.spacing)},
                 {"endo_semi_axes", vec_json(spec.endo_semi_axes)},
                 {"epi_semi_axes", vec_json(spec.epi_semi_axes)},
                 {"base_z", spec.base_z},
                 {"n_frames", spec.n_frames},
                 {"radial_contraction", spec.radial_contraction},
                 {"longitudinal_shortening", spec.longitudinal_shortening},
                 {"noise_sigma", spec.noise_sigma},
                 {"seed", spec.seed}};
    j["misalignment_mm"] = misalignment_mm;
    j["shifts"] = sj;
    j["frames"] = files;
    const fs::path man = dir / "phantom.json";
    std::ofstream out(man, std::ios::binary);
    out << j.dump(2) << '\n';
    require(bool(out), "cannot write " + man.string());
    return man;
}

// ---------------------------------------------------------------------------

RunResult run(const Config &cfg, std::ostream &log) {
    RunResult res;
    Artifacts art;
    art.root = cfg.output_dir;
    fs::create_directories(art.root);

    // input
    FrameSequence frames;
    std::vector<LabelVolume> masks;
    std::vector<DisplacementField> truth;
    stage("input", -1, [&] {
        if (cfg.phantom) {
            PhantomSpec spec = *cfg.phantom;
            spec.seed = stage_seed(cfg.seed, "phantom");
            Phantom ph = generate(spec);
            frames = std::move(ph.frames);
            masks = std::move(ph.labels);
            truth = std::move(ph.fields);
            if (spec.misalignment_mm > 0.0) {
                Misaligned m = inject_misalignment(masks, frames, spec.misalignment_mm,
                                                   stage_seed(cfg.seed, "misalignment"));
                frames = std::move(m.frames);
                masks = std::move(m.labels);
                std::string csv = "slice,dx_vox,dy_vox\n";
                for (std::size_t k = 0; k < m.shifts.size(); ++k)
                    csv += std::to_string(k) + "," + std::to_string(m.shifts[k].dx) + "," +
                           std::to_string(m.shifts[k].dy) + "\n";
                art.text("input/injected_shifts.csv", "shifts", csv);
            }
            for (std::size_t t = 0; t < truth.size(); ++t)
                write_field_mhd(truth[t], art.add(frame_name("truth/field", int(t), ".mhd"), "field"));
        } else {
            for (const auto &p : cfg.images) frames.frames.push_back(read_mhd(p));
            for (const auto &p : cfg.masks) masks.push_back(read_labels_mhd(p));
        }
        frames.validate();
        for (std::size_t t = 0; t < masks.size(); ++t)
            require(masks[t].grid == frames.grid(), "mask " + std::to_string(t) + " is not on the image grid");
        for (std::size_t t = 0; t < masks.size(); ++t) {
            write_mhd(frames.frames[t], art.add(frame_name("input/frame", int(t), ".mhd"), "image"));
            write_mhd(masks[t], art.add(frame_name("input/mask", int(t), ".mhd"), "mask"));
        }
    });
    const int nt = int(frames.n_frames());
    res.frames = nt;
    log << "input: " << nt << " frames, grid " << frames.grid().dims[0] << "x" << frames.grid().dims[1] << "x"
        << frames.grid().dims[2] << "\n";

    if (cfg.align) {
        stage("align", -1, [&] {
            align::Corrected c = align::correct(frames, masks);
            frames = std::move(c.frames);
            masks = std::move(c.masks);
            std::string csv = "frame,slice,dx_vox,dy_vox\n";
            for (const auto &s : c.shifts)
                csv += std::to_string(s.frame) + "," + std::to_string(s.slice) + "," + std::to_string(s.offset.dx) +
                       "," + std::to_string(s.offset.dy) + "\n";
            art.text("align/shifts.csv", "shifts", csv);
            for (int t = 0; t < nt; ++t) {
                write_mhd(frames.frames[std::size_t(t)], art.add(frame_name("align/frame", t, ".mhd"), "image"));
                write_mhd(masks[std::size_t(t)], art.add(frame_name("align/mask", t, ".mhd"), "mask"));
            }
        });
        log << "align: done\n";
    }

    // registration: fields[b] holds ED -> t for t = 1..N-1 (index t-1)
    std::vector<std::vector<DisplacementField>> fields(cfg.backends.size());
    std::string reg_csv = "backend,pairing,frame,zero_loss,final_loss,endpoint_error_mm\n";
    for (std::size_t bi = 0; bi < cfg.backends.size(); ++bi) {
        const reg::Backend b = cfg.backends[bi];
        for (const reg::Pairing p : cfg.pairings) {
            const std::string tag = std::string(reg::to_string(b)) + "_" + reg::to_string(p);
            stage("register " + tag, -1, [&] {
                reg::RegistrationConfig rc = cfg.registration;
                rc.backend = b;
                rc.seed = stage_seed(cfg.seed, "register/" + tag);
                std::vector<reg::RegistrationLog> logs;
                std::vector<DisplacementField> f = reg::register_sequence(
                    frames, rc, p, &logs, [&](int t) { log << "register " << tag << ": pair " << t << "/" << nt - 1 << "\n"; });
                if (p == reg::Pairing::sequential) f = reg::accumulate_sequential(f);
                for (int t = 1; t < nt; ++t) {
                    const DisplacementField &u = f[std::size_t(t - 1)];
                    write_field_mhd(u, art.add("fields/" + frame_name(tag, t, ".mhd"), "field"));
                    const reg::RegistrationLog &lg = logs[std::size_t(t - 1)];
                    const double final_loss = lg.level_final.empty() ? lg.zero_field.total : lg.level_final.back().total;
                    reg_csv += std::string(reg::to_string(b)) + "," + reg::to_string(p) + "," + std::to_string(t) +
                               "," + fmt(lg.zero_field.total) + "," + fmt(final_loss) + ",";
                    if (!truth.empty())
                        reg_csv += fmt(reg::mean_endpoint_error(u, truth[std::size_t(t)], masks[0], kMyocardium));
                    reg_csv += "\n";
                }
                if (fields[bi].empty() || p == reg::Pairing::fixed_reference) fields[bi] = std::move(f);
            });
        }
    }
    art.text("registration.csv", "registration", reg_csv);

    // ED surface and tet mesh
    auto mask_for_surface = [&](int t) {
        return cfg.resample_z_mm > 0.0 ? resample_z(masks[std::size_t(t)], cfg.resample_z_mm) : masks[std::size_t(t)];
    };
    SurfaceMesh ed = stage("isosurface", 0, [&] {
        SurfaceMesh full = marching_cubes(mask_for_surface(0), kMyocardium, cfg.iso_policy);
        SurfaceMesh d = decimate(full, cfg.target_vertices);
        d.frame_id = 0;
        return d;
    });
    if (!check_surface(ed).valid()) res.violations.push_back("ED surface is not a valid closed surface");
    write_vtk(ed, art.add("surfaces/ed_surface.vtk", "surface"));
    log << "surface: " << ed.vertices.size() << " vertices, " << ed.triangles.size() << " triangles\n";

    std::vector<SurfaceMesh> seg(static_cast<std::size_t>(nt));
    for (int t = 0; t < nt; ++t) {
        seg[std::size_t(t)] = stage("isosurface", t, [&] { return marching_cubes(mask_for_surface(t), kMyocardium, cfg.iso_policy); });
        seg[std::size_t(t)].frame_id = t;
        write_vtk(seg[std::size_t(t)], art.add("surfaces/" + frame_name("seg", t, ".vtk"), "surface"));
    }

    TetMeshStats tstats;
    const TetMesh tet = stage("tetmesh", 0, [&] {
        TetMeshOptions o;
        o.max_volume = cfg.max_volume;
        o.seed = stage_seed(cfg.seed, "tetmesh");
        return tetrahedralize(ed, o, &tstats);
    });
    if (!check_tetmesh(tet).ok()) res.violations.push_back("ED tet mesh fails its invariants");
    write_vtk(tet, art.add("tets/ed_tetmesh.vtk", "tetmesh"));
    const InteriorWeights weights = stage("lbwarp weights", 0, [&] { return compute_weights(tet); });
    log << "tetmesh: " << tet.tets.size() << " tets, " << tet.vertices.size() << " vertices\n";

    // per-frame propagation
    const Grid &grid = frames.grid();
    std::vector<std::vector<SurfaceMesh>> prop(cfg.backends.size(), std::vector<SurfaceMesh>(static_cast<std::size_t>(nt)));
    std::vector<TetMesh> direct(static_cast<std::size_t>(nt)), warped(static_cast<std::size_t>(nt));
    std::string quality_csv =
        "frame,route,min_sj,mean_sj,fraction_acceptable,non_positive,max_volume,total_volume,max_radius_edge\n";
    std::string solver_csv = "frame,solver,iterations,residual\n";
    auto quality_row = [&](int t, const std::string &route, const QualityReport &q) {
        quality_csv += std::to_string(t) + "," + route + "," + fmt(q.min_sj) + "," + fmt(q.mean_sj) + "," +
                       fmt(q.fraction_acceptable) + "," + std::to_string(q.non_positive) + "," + fmt(q.max_volume) +
                       "," + fmt(q.total_volume) + "," + fmt(q.max_radius_edge) + "\n";
    };
    for (int t = 0; t < nt; ++t) {
        for (std::size_t bi = 0; bi < cfg.backends.size(); ++bi) {
            const DisplacementField u = t == 0 ? DisplacementField(grid) : fields[bi][std::size_t(t - 1)];
            SurfaceMesh s = stage("propagate-surface", t, [&] { return propagate_surface(ed, u, t).mesh; });
            write_vtk(s, art.add("surfaces/" + frame_name(reg::to_string(cfg.backends[bi]), t, ".vtk"), "surface"));
            prop[bi][std::size_t(t)] = std::move(s);
        }
        const DisplacementField u0 = t == 0 ? DisplacementField(grid) : fields[0][std::size_t(t - 1)];
        PropagatedVolume pv = stage("propagate-volume", t, [&] { return propagate_volume(tet, u0, t); });
        WarpResult wr = stage("lbwarp", t, [&] {
            WarpOptions o;
            o.tolerance = cfg.lbwarp_tolerance;
            o.max_iterations = cfg.lbwarp_max_iterations;
            return warp(tet, weights, prop[0][std::size_t(t)], o);
        });
        for (std::size_t s = 0; s < tet.boundary_map.size(); ++s)
            if (wr.mesh.vertices[std::size_t(tet.boundary_map[s])] != prop[0][std::size_t(t)].vertices[s]) {
                res.violations.push_back("frame " + std::to_string(t) + ": warped boundary vertex " + std::to_string(s) +
                                         " is not at its target");
                break;
            }
        if (wr.mesh.tets != tet.tets) res.violations.push_back("frame " + std::to_string(t) + ": warp changed connectivity");
        quality_row(t, "direct", pv.quality);
        quality_row(t, "lbwarp", wr.quality);
        solver_csv += std::to_string(t) + "," + wr.solver + "," + std::to_string(wr.iterations) + "," +
                      fmt(wr.residual) + "\n";
        write_vtk(pv.mesh, art.add("tets/" + frame_name("direct", t, ".vtk"), "tetmesh"));
        write_vtk(wr.mesh, art.add("tets/" + frame_name("lbwarp", t, ".vtk"), "tetmesh"));
        direct[std::size_t(t)] = std::move(pv.mesh);
        warped[std::size_t(t)] = std::move(wr.mesh);
        log << "frame " << t << ": propagated\n";
    }
    art.text("quality.csv", "quality", quality_csv);
    art.text("lbwarp_solver.csv", "solver", solver_csv);

    // metrics, t = 1..N-1
    struct Series {
        std::string pair;
        std::vector<double> dice, mad, hausdorff, node_mean, node_max;
    };
    std::vector<Series> series;
    for (std::size_t bi = 0; bi < cfg.backends.size(); ++bi) series.push_back({backend_tag(cfg.backends[bi]) + "-SEG", {}, {}, {}, {}, {}});
    if (cfg.backends.size() >= 2)
        series.push_back({backend_tag(cfg.backends[1]) + "-" + backend_tag(cfg.backends[0]), {}, {}, {}, {}, {}});
    series.push_back({"LBWARP-DIRECT", {}, {}, {}, {}, {}});

    std::string metrics_csv = "pair,frame,metric,value\n";
    for (int t = 1; t < nt; ++t) {
        stage("metrics", t, [&] {
            const LabelVolume &m = masks[std::size_t(t)];
            std::vector<LabelVolume> vox;
            for (std::size_t bi = 0; bi < cfg.backends.size(); ++bi) {
                const SurfaceMesh &s = prop[bi][std::size_t(t)];
                vox.push_back(voxelize(s, m.grid, kMyocardium));
                Series &r = series[bi];
                r.dice.push_back(dice(vox.back(), m, kMyocardium));
                r.mad.push_back(mad(s, seg[std::size_t(t)]));
                r.hausdorff.push_back(hausdorff(s, seg[std::size_t(t)]));
            }
            if (cfg.backends.size() >= 2) {
                Series &r = series[cfg.backends.size()];
                r.dice.push_back(dice(vox[1], vox[0], kMyocardium));
                r.mad.push_back(mad(prop[1][std::size_t(t)], prop[0][std::size_t(t)]));
                r.hausdorff.push_back(hausdorff(prop[1][std::size_t(t)], prop[0][std::size_t(t)]));
                const NodeDistance nd = node_distance(prop[1][std::size_t(t)], prop[0][std::size_t(t)]);
                r.node_mean.push_back(nd.mean);
                r.node_max.push_back(nd.max);
            }
            const NodeDistance nd = node_distance(warped[std::size_t(t)], direct[std::size_t(t)]);
            series.back().node_mean.push_back(nd.mean);
            series.back().node_max.push_back(nd.max);
        });
    }
    for (const Series &s : series) {
        const std::pair<const char *, const std::vector<double> *> cols[] = {
            {"dice", &s.dice}, {"mad_mm", &s.mad}, {"hausdorff_mm", &s.hausdorff}, {"node_mean_mm", &s.node_mean},
            {"node_max_mm", &s.node_max}};
        for (int t = 1; t < nt; ++t)
            for (const auto &[name, v] : cols)
                if (!v->empty()) metrics_csv += s.pair + "," + std::to_string(t) + "," + name + "," + fmt((*v)[std::size_t(t - 1)]) + "\n";
    }
    art.text("metrics.csv", "metrics", metrics_csv);

    json summary;
    for (const Series &s : series) {
        json e;
        auto add = [&](const char *name, const std::vector<double> &v) {
            if (v.empty()) return;
            const MeanStd ms = mean_std(v);
            e[name] = {{"mean", ms.mean}, {"std", ms.std}};
        };
        add("dice", s.dice);
        add("mad_mm", s.mad);
        add("hausdorff_mm", s.hausdorff);
        add("node_mean_mm", s.node_mean);
        add("node_max_mm", s.node_max);
        summary["pairs"][s.pair] = e;
    }
    if (cfg.backends.size() >= 2 && nt >= 3) {
        for (const char *metric : {"dice", "mad_mm"}) {
            const bool is_dice = std::string(metric) == "dice";
            const TTest tt = ttest(is_dice ? series[0].dice : series[0].mad, is_dice ? series[1].dice : series[1].mad);
            summary["ttest"][metric] = {{"a", series[0].pair}, {"b", series[1].pair}, {"t", tt.t},
                                        {"df", tt.df},         {"p", tt.p},           {"tier", to_string(tt.tier)}};
        }
    }
    summary["tetmesh"] = {{"tets", tet.tets.size()},
                          {"vertices", tet.vertices.size()},
                          {"surface_vertices", ed.vertices.size()},
                          {"outside_kept", tstats.outside_kept},
                          {"refinement_points", tstats.refinement_points}};
    summary["violations"] = res.violations;
    art.text("summary.json", "summary", summary.dump(2) + "\n");

    // manifest
    json files = json::array();
    std::sort(art.files.begin(), art.files.end());
    for (const auto &[rel, kind] : art.files) {
        const fs::path p = art.root / rel;
        files.push_back({{"path", rel}, {"kind", kind}, {"bytes", fs::file_size(p)}, {"sha256", sha256_file(p)}});
    }
    json man;
    man["format"] = "lvmesh-manifest";
    man["version"] = 1;
    man["config"] = json::parse(cfg.canonical_json());
    man["frames"] = nt;
    json bk = json::array();
    for (auto b : cfg.backends) bk.push_back(reg::to_string(b));
    man["backends"] = bk;
    man["files"] = files;
    man["violations"] = res.violations;
    res.manifest = art.root / "manifest.json";
    std::ofstream out(res.manifest, std::ios::binary);
    out << man.dump(2) << '\n';
    require(bool(out), "cannot write " + res.manifest.string());
    log << "manifest: " << res.manifest.string() << " (" << files.size() << " files)\n";
    return res;
}

// ---------------------------------------------------------------------------

Report report(const fs::path &manifest) {
    std::ifstream in(manifest, std::ios::binary);
    require(bool(in), "cannot read manifest " + manifest.string());
    json man;
    try {
        in >> man;
    } catch (const json::exception &e) {
        throw Error("manifest " + manifest.string() + ": " + e.what());
    }
    require(man.value("format", "") == "lvmesh-manifest", "manifest " + manifest.string() + ": unknown format");
    const fs::path root = manifest.parent_path();
    fs::path metrics_path;
    for (const json &f : man.at("files")) {
        const std::string rel = f.at("path").get<std::string>();
        const fs::path p = root / rel;
        if (!fs::exists(p)) throw Error("missing artifact: " + rel);
        if (sha256_file(p) != f.at("sha256").get<std::string>()) throw Error("checksum mismatch: " + rel);
        if (f.at("kind") == "metrics") metrics_path = p;
    }
    require(!metrics_path.empty(), "manifest lists no metrics file");

    // pair -> metric -> frame -> value
    std::map<std::string, std::map<std::string, std::map<int, double>>> table;
    std::vector<std::string> order;
    {
        std::ifstream m(metrics_path);
        std::string line;
        std::getline(m, line);
        while (std::getline(m, line)) {
            if (line.empty()) continue;
            const auto f = split(line, ',');
            require(f.size() == 4, "metrics.csv: malformed row '" + line + "'");
            if (!table.count(f[0])) order.push_back(f[0]);
            table[f[0]][f[2]][std::stoi(f[1])] = std::stod(f[3]);
        }
    }

    Report r;
    std::ostringstream txt, csv;
    char buf[256];
    txt << "Surface agreement (mean +- std over frames 1..N-1)\n";
    std::snprintf(buf, sizeof buf, "%-16s %-20s %-20s\n", "Pair", "Dice (%)", "MAD (mm)");
    txt << buf;
    csv << "pair,frame,dice,mad\n";
    for (const std::string &pair : order) {
        const auto &mt = table[pair];
        if (!mt.count("dice") || !mt.count("mad_mm")) continue;
        std::vector<double> d, m;
        for (const auto &[t, v] : mt.at("dice")) {
            d.push_back(100.0 * v);
            csv << pair << "," << t << "," << fmt(v) << "," << fmt(mt.at("mad_mm").at(t)) << "\n";
        }
        for (const auto &[t, v] : mt.at("mad_mm")) m.push_back(v);
        const MeanStd ds = mean_std(d), ms = mean_std(m);
        char a[64], b[64];
        std::snprintf(a, sizeof a, "%.2f +- %.2f", ds.mean, ds.std);
        std::snprintf(b, sizeof b, "%.3f +- %.3f", ms.mean, ms.std);
        std::snprintf(buf, sizeof buf, "%-16s %-20s %-20s\n", pair.c_str(), a, b);
        txt << buf;
    }
    if (man.contains("config")) {
        std::ifstream s(root / "summary.json");
        json sj;
        if (s && (s >> sj, sj.contains("ttest")))
            for (const auto &[metric, tt] : sj["ttest"].items()) {
                std::snprintf(buf, sizeof buf, "t-test %s vs %s (%s): t = %.4g, p = %.4g, %s\n",
                              tt["a"].get<std::string>().c_str(), tt["b"].get<std::string>().c_str(), metric.c_str(),
                              tt["t"].get<double>(), tt["p"].get<double>(), tt["tier"].get<std::string>().c_str());
                txt << buf;
            }
    }

    txt << "\nPer-frame series\n";
    std::snprintf(buf, sizeof buf, "%-16s %-14s", "Pair", "Metric");
    txt << buf;
    int nt = man.value("frames", 0);
    for (int t = 1; t < nt; ++t) {
        std::snprintf(buf, sizeof buf, " %10s", ("t=" + std::to_string(t)).c_str());
        txt << buf;
    }
    txt << "\n";
    for (const std::string &pair : order)
        for (const auto &[metric, vals] : table[pair]) {
            if (metric == "hausdorff_mm" || metric == "node_max_mm") continue;
            std::snprintf(buf, sizeof buf, "%-16s %-14s", pair.c_str(), metric.c_str());
            txt << buf;
            for (const auto &[t, v] : vals) {
                std::snprintf(buf, sizeof buf, " %10.4f", v);
                txt << buf;
            }
            txt << "\n";
        }
    r.text = txt.str();
    r.csv = csv.str();
    return r;
}

} // namespace lvmesh::pipeline
