// lvmesh command-line driver.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "lvmesh/align.hpp"
#include "lvmesh/isosurface.hpp"
#include "lvmesh/lbwarp.hpp"
#include "lvmesh/mesh_io.hpp"
#include "lvmesh/metrics.hpp"
#include "lvmesh/phantom.hpp"
#include "lvmesh/pipeline.hpp"
#include "lvmesh/registration.hpp"
#include "lvmesh/tetmesh.hpp"

namespace fs = std::filesystem;
using namespace lvmesh;

namespace {

std::string num(double v) {
    char b[40];
    std::snprintf(b, sizeof b, "%.10g", v);
    return b;
}

std::string indexed(const std::string &stem, int t, const std::string &ext) {
    char b[16];
    std::snprintf(b, sizeof b, "_%02d", t);
    return stem + b + ext;
}

void write_text(const fs::path &p, const std::string &s) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    out << s;
    require(bool(out), "cannot write " + p.string());
}

// Writes to `path`, or stdout when it is empty.
void emit(const std::string &path, const std::string &s) {
    if (path.empty())
        std::cout << s;
    else
        write_text(path, s);
}

std::string quality_header() {
    return "file,frame,tets,min_sj,mean_sj,fraction_acceptable,non_positive,max_volume,total_volume,max_radius_edge\n";
}

std::string quality_row(const std::string &name, int frame, std::size_t tets, const QualityReport &q) {
    return name + "," + std::to_string(frame) + "," + std::to_string(tets) + "," + num(q.min_sj) + "," + num(q.mean_sj) +
           "," + num(q.fraction_acceptable) + "," + std::to_string(q.non_positive) + "," + num(q.max_volume) + "," +
           num(q.total_volume) + "," + num(q.max_radius_edge) + "\n";
}

struct PhantomArgs {
    std::string out;
    int size = 64;
    int frames = 6;
    double spacing = 1.0;
    double noise = 8.0;
    double misalign = 0.0;
    std::uint64_t seed = 1;
};

struct AlignArgs {
    std::vector<std::string> images, masks;
    std::string out;
};

struct RegisterArgs {
    std::vector<std::string> images;
    std::string out, backend = "dense", pairing = "fixed_reference";
    double lambda = 1e-3;
    int iterations = 0, levels = 3;
    std::uint64_t seed = 42;
    bool raw = false;
};

struct IsoArgs {
    std::string mask, out, ply, policy = "box";
    int label = kMyocardium;
    double resample_z = 0.0;
};

struct DecimateArgs {
    std::string in, out, ply;
    int target = 2500;
};

struct TetArgs {
    std::string surface, out;
    double max_volume = 9.0;
    std::uint64_t seed = 1;
};

struct PropArgs {
    std::string mesh, field, out;
    int frame = 0;
};

struct WarpArgs {
    std::string tetmesh, out, quality;
    std::vector<std::string> targets;
    double tolerance = 1e-10;
    int max_iterations = 10000;
};

struct QualityArgs {
    std::vector<std::string> meshes;
    std::string out;
};

struct MetricsArgs {
    std::vector<std::string> a, b, masks;
    std::string pair = "A-B", out, summary;
    bool tets = false;
    int first_frame = 1;
};

struct ReportArgs {
    std::string manifest, csv;
};

int cmd_phantom(const PhantomArgs &a) {
    PhantomSpec s;
    s.dims = {a.size, a.size, a.size};
    s.spacing = Vec3::Constant(a.spacing);
    s.n_frames = a.frames;
    s.noise_sigma = a.noise;
    s.seed = pipeline::stage_seed(a.seed, "phantom");
    s.validate();
    const fs::path man = pipeline::write_phantom(s, a.out, a.misalign, pipeline::stage_seed(a.seed, "misalignment"));
    std::cout << "wrote " << man.string() << "\n";
    return 0;
}

int cmd_align(const AlignArgs &a) {
    require(a.images.size() == a.masks.size(), "align: need one mask per image");
    FrameSequence frames;
    std::vector<LabelVolume> masks;
    for (const auto &p : a.images) frames.frames.push_back(read_mhd(p));
    for (const auto &p : a.masks) masks.push_back(read_labels_mhd(p));
    frames.validate();
    const align::Corrected c = align::correct(frames, masks);
    fs::create_directories(a.out);
    for (std::size_t t = 0; t < masks.size(); ++t) {
        write_mhd(c.frames.frames[t], fs::path(a.out) / indexed("frame", int(t), ".mhd"));
        write_mhd(c.masks[t], fs::path(a.out) / indexed("mask", int(t), ".mhd"));
    }
    std::string csv = "frame,slice,dx_vox,dy_vox\n";
    for (const auto &s : c.shifts)
        csv += std::to_string(s.frame) + "," + std::to_string(s.slice) + "," + std::to_string(s.offset.dx) + "," +
               std::to_string(s.offset.dy) + "\n";
    write_text(fs::path(a.out) / "shifts.csv", csv);
    return 0;
}

int cmd_register(const RegisterArgs &a) {
    require(a.images.size() >= 2, "register: need at least two frames");
    FrameSequence frames;
    for (const auto &p : a.images) frames.frames.push_back(read_mhd(p));
    frames.validate();
    reg::RegistrationConfig cfg;
    cfg.backend = reg::parse_backend(a.backend);
    cfg.lambda = a.lambda;
    cfg.levels = a.levels;
    cfg.seed = a.seed;
    if (a.iterations > 0) (cfg.backend == reg::Backend::dense ? cfg.dense_iterations : cfg.ffd_iterations) = a.iterations;
    cfg.validate();
    const reg::Pairing pairing = reg::parse_pairing(a.pairing);
    std::vector<reg::RegistrationLog> logs;
    std::vector<DisplacementField> f = reg::register_sequence(
        frames, cfg, pairing, &logs, [](int t) { std::cerr << "registering pair " << t << "\n"; });
    if (pairing == reg::Pairing::sequential && !a.raw) f = reg::accumulate_sequential(f);
    fs::create_directories(a.out);
    for (std::size_t t = 0; t < f.size(); ++t) write_field_mhd(f[t], fs::path(a.out) / indexed("field", int(t + 1), ".mhd"));
    std::string csv = "pair,level,iteration,total,similarity,smooth\n";
    for (std::size_t t = 0; t < logs.size(); ++t)
        for (const auto &r : logs[t].iterations)
            csv += std::to_string(t + 1) + "," + std::to_string(r.level) + "," + std::to_string(r.iteration) + "," +
                   num(r.total) + "," + num(r.similarity) + "," + num(r.smooth) + "\n";
    write_text(fs::path(a.out) / "loss.csv", csv);
    return 0;
}

int cmd_isosurface(const IsoArgs &a) {
    LabelVolume m = read_labels_mhd(a.mask);
    if (a.resample_z > 0.0) m = resample_z(m, a.resample_z);
    const SurfaceMesh s = marching_cubes(m, std::uint8_t(a.label), parse_iso_policy(a.policy));
    write_vtk(s, a.out);
    if (!a.ply.empty()) write_ply(s, a.ply);
    std::cout << s.vertices.size() << " vertices, " << s.triangles.size() << " triangles\n";
    return 0;
}

int cmd_decimate(const DecimateArgs &a) {
    const SurfaceMesh s = decimate(read_vtk_surface(a.in), a.target);
    write_vtk(s, a.out);
    if (!a.ply.empty()) write_ply(s, a.ply);
    std::cout << s.vertices.size() << " vertices, " << s.triangles.size() << " triangles\n";
    return 0;
}

int cmd_tetmesh(const TetArgs &a) {
    TetMeshOptions o;
    o.max_volume = a.max_volume;
    o.seed = a.seed;
    TetMeshStats st;
    const TetMesh m = tetrahedralize(read_vtk_surface(a.surface), o, &st);
    write_vtk(m, a.out);
    const QualityReport q = assess(m);
    std::cout << m.tets.size() << " tets, " << m.vertices.size() << " vertices (" << st.steiner_points << " lattice, "
              << st.refinement_points << " refinement), min scaled Jacobian " << q.min_sj << "\n";
    return 0;
}

int cmd_propagate_surface(const PropArgs &a) {
    const PropagatedSurface p = propagate_surface(read_vtk_surface(a.mesh), read_field_mhd(a.field), a.frame);
    write_vtk(p.mesh, a.out);
    if (p.clamped_vertices > 0) std::cerr << p.clamped_vertices << " vertices outside the field grid\n";
    return 0;
}

int cmd_propagate_volume(const PropArgs &a) {
    const PropagatedVolume p = propagate_volume(read_vtk_tetmesh(a.mesh), read_field_mhd(a.field), a.frame);
    write_vtk(p.mesh, a.out);
    std::cout << "min scaled Jacobian " << p.quality.min_sj << ", " << p.quality.non_positive << " non-positive\n";
    return 0;
}

int cmd_lbwarp(const WarpArgs &a) {
    const TetMesh ed = read_vtk_tetmesh(a.tetmesh);
    const InteriorWeights w = compute_weights(ed);
    WarpOptions o;
    o.tolerance = a.tolerance;
    o.max_iterations = a.max_iterations;
    fs::create_directories(a.out);
    std::string csv = "target,frame,solver,iterations,residual,min_sj,mean_sj,fraction_acceptable,non_positive\n";
    for (const auto &tp : a.targets) {
        const SurfaceMesh target = read_vtk_surface(tp);
        const WarpResult r = warp(ed, w, target, o);
        const fs::path out = fs::path(a.out) / indexed("lbwarp", target.frame_id, ".vtk");
        write_vtk(r.mesh, out);
        csv += fs::path(tp).filename().string() + "," + std::to_string(target.frame_id) + "," + r.solver + "," +
               std::to_string(r.iterations) + "," + num(r.residual) + "," + num(r.quality.min_sj) + "," +
               num(r.quality.mean_sj) + "," + num(r.quality.fraction_acceptable) + "," +
               std::to_string(r.quality.non_positive) + "\n";
    }
    write_text(a.quality.empty() ? fs::path(a.out) / "quality.csv" : fs::path(a.quality), csv);
    return 0;
}

int cmd_quality(const QualityArgs &a) {
    std::string csv = quality_header();
    for (const auto &p : a.meshes) {
        const TetMesh m = read_vtk_tetmesh(p);
        csv += quality_row(fs::path(p).filename().string(), m.frame_id, m.tets.size(), assess(m));
    }
    emit(a.out, csv);
    return 0;
}

int cmd_metrics(const MetricsArgs &a) {
    require(a.a.size() == a.b.size(), "metrics: --a and --b need the same number of meshes");
    require(a.masks.empty() || a.masks.size() == a.a.size(), "metrics: need one mask per mesh");
    std::string csv = "pair,frame,metric,value\n";
    std::map<std::string, std::vector<double>> cols;
    auto put = [&](int t, const std::string &m, double v) {
        csv += a.pair + "," + std::to_string(t) + "," + m + "," + num(v) + "\n";
        cols[m].push_back(v);
    };
    for (std::size_t i = 0; i < a.a.size(); ++i) {
        const int t = a.first_frame + int(i);
        if (a.tets) {
            const NodeDistance nd = node_distance(read_vtk_tetmesh(a.a[i]), read_vtk_tetmesh(a.b[i]));
            put(t, "node_mean_mm", nd.mean);
            put(t, "node_max_mm", nd.max);
            continue;
        }
        const SurfaceMesh sa = read_vtk_surface(a.a[i]), sb = read_vtk_surface(a.b[i]);
        if (!a.masks.empty()) {
            const LabelVolume m = read_labels_mhd(a.masks[i]);
            put(t, "dice", dice(voxelize(sa, m.grid, kMyocardium), m, kMyocardium));
        }
        put(t, "mad_mm", mad(sa, sb));
        put(t, "hausdorff_mm", hausdorff(sa, sb));
        if (sa.vertices.size() == sb.vertices.size() && sa.triangles == sb.triangles) {
            const NodeDistance nd = node_distance(sa, sb);
            put(t, "node_mean_mm", nd.mean);
            put(t, "node_max_mm", nd.max);
        }
    }
    emit(a.out, csv);
    if (!a.summary.empty()) {
        nlohmann::json j;
        j["pair"] = a.pair;
        for (const auto &[m, v] : cols) {
            const MeanStd ms = mean_std(v);
            j["metrics"][m] = {{"mean", ms.mean}, {"std", ms.std}, {"n", v.size()}};
        }
        write_text(a.summary, j.dump(2) + "\n");
    }
    return 0;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Dynamic left-ventricle mesh construction"};
    app.require_subcommand(1);
    int rc = 0;

    PhantomArgs ph;
    auto *c = app.add_subcommand("phantom", "Generate a synthetic beating-LV phantom");
    c->add_option("-o,--out", ph.out, "Output directory")->required();
    c->add_option("--size", ph.size, "Grid size per axis (voxels)")->check(CLI::Range(16, 512));
    c->add_option("--frames", ph.frames, "Number of frames")->check(CLI::Range(2, 100));
    c->add_option("--spacing", ph.spacing, "Voxel spacing (mm)")->check(CLI::PositiveNumber);
    c->add_option("--noise", ph.noise, "Gaussian noise sigma (intensity units)")->check(CLI::NonNegativeNumber);
    c->add_option("--misalign", ph.misalign, "Per-slice shift amplitude (mm)")->check(CLI::NonNegativeNumber);
    c->add_option("--seed", ph.seed, "Root seed");
    c->callback([&] { rc = cmd_phantom(ph); });

    AlignArgs al;
    c = app.add_subcommand("align", "Correct slice misalignment");
    c->add_option("--images", al.images, "Frame volumes (.mhd), ED first")->required()->check(CLI::ExistingFile);
    c->add_option("--masks", al.masks, "Label volumes (.mhd)")->required()->check(CLI::ExistingFile);
    c->add_option("-o,--out", al.out, "Output directory")->required();
    c->callback([&] { rc = cmd_align(al); });

    RegisterArgs rg;
    c = app.add_subcommand("register", "Register every frame against ED");
    c->add_option("--images", rg.images, "Frame volumes (.mhd), ED first")->required()->check(CLI::ExistingFile);
    c->add_option("-o,--out", rg.out, "Output directory")->required();
    c->add_option("--backend", rg.backend, "dense or ffd")->check(CLI::IsMember({"dense", "ffd"}));
    c->add_option("--pairing", rg.pairing, "fixed_reference or sequential")
        ->check(CLI::IsMember({"fixed_reference", "sequential"}));
    c->add_option("--lambda", rg.lambda, "Regularization weight")->check(CLI::NonNegativeNumber);
    c->add_option("--iterations", rg.iterations, "Iterations per pyramid level (0 = backend default)")
        ->check(CLI::NonNegativeNumber);
    c->add_option("--levels", rg.levels, "Pyramid levels")->check(CLI::Range(1, 8));
    c->add_option("--seed", rg.seed, "Sampling seed (ffd)");
    c->add_flag("--raw", rg.raw, "Keep sequential fields pairwise instead of composing them to ED");
    c->callback([&] { rc = cmd_register(rg); });

    IsoArgs iso;
    c = app.add_subcommand("isosurface", "Extract a labeled isosurface with marching cubes");
    c->add_option("--mask", iso.mask, "Label volume (.mhd)")->required()->check(CLI::ExistingFile);
    c->add_option("-o,--out", iso.out, "Output VTK surface")->required();
    c->add_option("--ply", iso.ply, "Also write PLY");
    c->add_option("--label", iso.label, "Label value")->check(CLI::Range(1, 255));
    c->add_option("--policy", iso.policy, "binary or box")->check(CLI::IsMember({"binary", "box"}));
    c->add_option("--resample-z", iso.resample_z, "Resample slices to this spacing first (mm)")
        ->check(CLI::NonNegativeNumber);
    c->callback([&] { rc = cmd_isosurface(iso); });

    DecimateArgs dc;
    c = app.add_subcommand("decimate", "Quadric edge-collapse decimation");
    c->add_option("--in", dc.in, "Input VTK surface")->required()->check(CLI::ExistingFile);
    c->add_option("-o,--out", dc.out, "Output VTK surface")->required();
    c->add_option("--ply", dc.ply, "Also write PLY");
    c->add_option("--target", dc.target, "Target vertex count")->check(CLI::Range(4, 100000000));
    c->callback([&] { rc = cmd_decimate(dc); });

    TetArgs tm;
    c = app.add_subcommand("tetmesh", "Tetrahedralize a closed surface");
    c->add_option("--surface", tm.surface, "Input VTK surface")->required()->check(CLI::ExistingFile);
    c->add_option("-o,--out", tm.out, "Output VTK tet mesh")->required();
    c->add_option("--max-volume", tm.max_volume, "Target maximum element volume (mm^3)")->check(CLI::PositiveNumber);
    c->add_option("--seed", tm.seed, "Seed");
    c->callback([&] { rc = cmd_tetmesh(tm); });

    PropArgs ps;
    c = app.add_subcommand("propagate-surface", "Move surface vertices along a displacement field");
    c->add_option("--surface", ps.mesh, "Input VTK surface")->required()->check(CLI::ExistingFile);
    c->add_option("--field", ps.field, "Displacement field (.mhd)")->required()->check(CLI::ExistingFile);
    c->add_option("--frame", ps.frame, "Frame id recorded in the output");
    c->add_option("-o,--out", ps.out, "Output VTK surface")->required();
    c->callback([&] { rc = cmd_propagate_surface(ps); });

    PropArgs pv;
    c = app.add_subcommand("propagate-volume", "Move tet-mesh vertices along a displacement field");
    c->add_option("--tetmesh", pv.mesh, "Input VTK tet mesh")->required()->check(CLI::ExistingFile);
    c->add_option("--field", pv.field, "Displacement field (.mhd)")->required()->check(CLI::ExistingFile);
    c->add_option("--frame", pv.frame, "Frame id recorded in the output");
    c->add_option("-o,--out", pv.out, "Output VTK tet mesh")->required();
    c->callback([&] { rc = cmd_propagate_volume(pv); });

    WarpArgs lw;
    c = app.add_subcommand("lbwarp", "Warp the ED tet mesh onto per-frame target surfaces");
    c->add_option("--tetmesh", lw.tetmesh, "ED VTK tet mesh")->required()->check(CLI::ExistingFile);
    c->add_option("--targets", lw.targets, "Target VTK surfaces")->required()->check(CLI::ExistingFile);
    c->add_option("-o,--out", lw.out, "Output directory")->required();
    c->add_option("--quality", lw.quality, "Quality CSV (default <out>/quality.csv)");
    c->add_option("--tolerance", lw.tolerance, "Relative residual")->check(CLI::PositiveNumber);
    c->add_option("--max-iterations", lw.max_iterations, "Iteration cap")->check(CLI::PositiveNumber);
    c->callback([&] { rc = cmd_lbwarp(lw); });

    QualityArgs qa;
    c = app.add_subcommand("quality", "Element quality of tet meshes");
    c->add_option("meshes", qa.meshes, "VTK tet meshes")->required()->check(CLI::ExistingFile);
    c->add_option("-o,--out", qa.out, "CSV output (default stdout)");
    c->callback([&] { rc = cmd_quality(qa); });

    MetricsArgs mt;
    c = app.add_subcommand("metrics", "Compare two mesh series frame by frame");
    c->add_option("--a", mt.a, "First series (VTK)")->required()->check(CLI::ExistingFile);
    c->add_option("--b", mt.b, "Second series (VTK)")->required()->check(CLI::ExistingFile);
    c->add_option("--masks", mt.masks, "Reference masks for Dice against --a")->check(CLI::ExistingFile);
    c->add_option("--pair", mt.pair, "Pair name in the CSV");
    c->add_option("--first-frame", mt.first_frame, "Frame id of the first entry");
    c->add_flag("--tets", mt.tets, "Inputs are tet meshes (node distance only)");
    c->add_option("-o,--out", mt.out, "CSV output (default stdout)");
    c->add_option("--summary", mt.summary, "JSON summary output");
    c->callback([&] { rc = cmd_metrics(mt); });

    std::string config;
    c = app.add_subcommand("pipeline", "Run the full workflow from a JSON config");
    c->add_option("--config", config, "Config file")->required()->check(CLI::ExistingFile);
    c->callback([&] {
        const pipeline::RunResult r = pipeline::run(pipeline::load_config(config), std::cerr);
        for (const auto &v : r.violations) std::cerr << "invariant violated: " << v << "\n";
        rc = r.violations.empty() ? 0 : 2;
    });

    ReportArgs rp;
    c = app.add_subcommand("report", "Verify a run manifest and print summary tables");
    c->add_option("--manifest", rp.manifest, "manifest.json from a pipeline run")->required();
    c->add_option("--csv", rp.csv, "Also write the per-frame CSV");
    c->callback([&] {
        const pipeline::Report r = pipeline::report(rp.manifest);
        std::cout << r.text;
        if (!rp.csv.empty()) write_text(rp.csv, r.csv);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        return app.exit(e);
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return rc;
}
