#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "lvmesh/pipeline.hpp"
#include "support.hpp"

using namespace lvtest;
namespace pl = lvmesh::pipeline;
using nlohmann::json;

namespace {

std::string slurp(const std::filesystem::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string error_of(const std::string &cfg) {
    try {
        pl::parse_config(cfg);
    } catch (const Error &e) {
        return e.what();
    }
    return "";
}

std::string tiny_config(const std::filesystem::path &out) {
    json j = {{"output_dir", out.string()},
              {"seed", 7},
              {"input",
               {{"phantom",
                 {{"dims", {28, 28, 28}},
                  {"endo_semi_axes", {4, 5, 7}},
                  {"epi_semi_axes", {8, 9, 11}},
                  {"base_z", 3},
                  {"n_frames", 3},
                  {"misalignment_mm", 1.0}}}}},
              {"registration",
               {{"levels", 1}, {"dense_iterations", 15}, {"ffd_iterations", 15}, {"ffd_samples", 2000}}},
              {"surface", {{"target_vertices", 300}}},
              {"tetmesh", {{"max_volume", 9.0}}}};
    return j.dump();
}

std::vector<std::vector<std::string>> csv_rows(const std::string &text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::istringstream ls(line);
        std::string c;
        while (std::getline(ls, c, ',')) cells.push_back(c);
        rows.push_back(cells);
    }
    return rows;
}

// One pipeline run shared by the end-to-end checks.
class PipelineRun : public ::testing::Test {
  protected:
    static void SetUpTestSuite() {
        root_ = std::filesystem::temp_directory_path() / "lvmesh_pipeline_run";
        std::filesystem::remove_all(root_);
        std::ostringstream log;
        result_ = pl::run(pl::parse_config(tiny_config(root_ / "a")), log);
        log_ = log.str();
    }
    static void TearDownTestSuite() { std::filesystem::remove_all(root_); }

    static std::filesystem::path root_;
    static pl::RunResult result_;
    static std::string log_;
};

std::filesystem::path PipelineRun::root_;
pl::RunResult PipelineRun::result_;
std::string PipelineRun::log_;

} // namespace

TEST(Pipeline, Sha256KnownVectors) {
    TempDir dir;
    std::ofstream(dir / "abc") << "abc";
    std::ofstream(dir / "empty");
    EXPECT_EQ(pl::sha256_file(dir / "abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    EXPECT_EQ(pl::sha256_file(dir / "empty"), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    EXPECT_THROW(pl::sha256_file(dir / "missing"), Error);
}

TEST(Pipeline, StageSeedsAreStableAndDistinct) {
    EXPECT_EQ(pl::stage_seed(1, "phantom"), pl::stage_seed(1, "phantom"));
    std::set<std::uint64_t> seen;
    for (std::uint64_t root : {0ull, 1ull, 2ull, 12345ull})
        for (const char *s : {"phantom", "align", "register", "tetmesh", "ffd"}) seen.insert(pl::stage_seed(root, s));
    EXPECT_EQ(seen.size(), 20u);
}

TEST(Pipeline, ConfigErrorsNameTheKey) {
    const std::string base = R"({"output_dir": "o", "input": {"phantom": {}})";
    EXPECT_EQ(error_of(base + "}"), "");
    const std::string neg = error_of(base + R"(, "registration": {"lambda": -1}})");
    EXPECT_NE(neg.find("registration.lambda"), std::string::npos) << neg;
    const std::string unknown = error_of(base + R"(, "surface": {"polcy": "box"}})");
    EXPECT_NE(unknown.find("surface.polcy"), std::string::npos) << unknown;
    const std::string dims = error_of(R"({"output_dir": "o", "input": {"phantom": {"dims": [4, 4]}}})");
    EXPECT_NE(dims.find("input.phantom.dims"), std::string::npos) << dims;
    EXPECT_NE(error_of(R"({"input": {"phantom": {}}})").find("output_dir"), std::string::npos);
    EXPECT_NE(error_of(R"({"output_dir": "o", "input": {}})").find("input"), std::string::npos);
    EXPECT_NE(error_of(R"({"output_dir": "o", "input": {"images": ["a.mhd", "b.mhd"]}})").find("input.masks"),
              std::string::npos);
    EXPECT_NE(error_of(base + R"(, "registration": {"backends": ["bspline"]}})").find("registration.backends"),
              std::string::npos);
    EXPECT_NE(error_of("{not json").find("invalid JSON"), std::string::npos);
}

TEST(Pipeline, ConfigDefaultsAndRelativePaths) {
    const pl::Config c = pl::parse_config(R"({"output_dir": "out", "input": {"phantom": {}}})", "/data/study");
    EXPECT_EQ(c.output_dir, std::filesystem::path("/data/study/out"));
    EXPECT_EQ(c.seed, 1u);
    ASSERT_TRUE(c.phantom.has_value());
    EXPECT_EQ(c.phantom->dims, (std::array<int, 3>{64, 64, 64}));
    EXPECT_EQ(c.backends.size(), 2u);
    EXPECT_EQ(c.pairings.size(), 2u);
    EXPECT_EQ(c.max_volume, 9.0);
    EXPECT_EQ(c.iso_policy, IsoPolicy::box);
    // The echo leaves out the output directory and otherwise parses back to
    // the same configuration.
    json echo = json::parse(c.canonical_json());
    EXPECT_FALSE(echo.contains("output_dir"));
    const json again = echo;
    echo["output_dir"] = "elsewhere";
    EXPECT_EQ(json::parse(pl::parse_config(echo.dump(), "/data/study").canonical_json()), again);
}

TEST_F(PipelineRun, FinishesWithoutViolations) {
    EXPECT_TRUE(result_.violations.empty()) << log_;
    EXPECT_EQ(result_.frames, 3);
    EXPECT_TRUE(std::filesystem::exists(result_.manifest));
}

TEST_F(PipelineRun, ManifestListsEveryArtifactWithChecksums) {
    const json m = json::parse(slurp(result_.manifest));
    EXPECT_EQ(m.at("format"), "lvmesh-manifest");
    const std::filesystem::path dir = result_.manifest.parent_path();
    std::set<std::string> paths;
    std::string prev;
    for (const json &f : m.at("files")) {
        const std::string rel = f.at("path");
        EXPECT_LT(prev, rel);
        prev = rel;
        paths.insert(rel);
        EXPECT_EQ(f.at("sha256"), pl::sha256_file(dir / rel)) << rel;
        EXPECT_EQ(f.at("bytes").get<std::uintmax_t>(), std::filesystem::file_size(dir / rel)) << rel;
    }
    for (const char *need : {"metrics.csv", "summary.json", "registration.csv", "quality.csv", "surfaces/ed_surface.vtk",
                             "tets/ed_tetmesh.vtk", "tets/lbwarp_02.vtk", "tets/direct_02.vtk"})
        EXPECT_EQ(paths.count(need), 1u) << need;
    std::size_t fields = 0;
    for (const std::string &p : paths) fields += p.rfind("fields/", 0) == 0 && p.ends_with(".mhd");
    // Two backends, two pairings, frames 1 and 2.
    EXPECT_EQ(fields, 8u);
}

TEST_F(PipelineRun, ReportHasOneRowPerPairAndFrame) {
    const pl::Report r = pl::report(result_.manifest);
    const auto rows = csv_rows(r.csv);
    ASSERT_FALSE(rows.empty());
    EXPECT_EQ(rows[0], (std::vector<std::string>{"pair", "frame", "dice", "mad"}));
    std::map<std::string, std::set<int>> frames;
    for (std::size_t i = 1; i < rows.size(); ++i) frames[rows[i].at(0)].insert(std::stoi(rows[i].at(1)));
    for (const char *pair : {"DENSE-SEG", "FFD-SEG", "FFD-DENSE"}) {
        ASSERT_EQ(frames.count(pair), 1u) << pair;
        EXPECT_EQ(frames[pair], (std::set<int>{1, 2})) << pair;
    }
    EXPECT_NE(r.text.find("DENSE-SEG"), std::string::npos);
}

TEST_F(PipelineRun, MetricsAreInRange) {
    const auto rows = csv_rows(slurp(result_.manifest.parent_path() / "metrics.csv"));
    ASSERT_GT(rows.size(), 1u);
    EXPECT_EQ(rows[0], (std::vector<std::string>{"pair", "frame", "metric", "value"}));
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const double v = std::stod(rows[i].at(3));
        EXPECT_GE(v, 0.0);
        if (rows[i][2] == "dice") EXPECT_LE(v, 1.0);
    }
}

TEST_F(PipelineRun, RerunIsByteIdentical) {
    std::ostringstream log;
    const pl::RunResult again = pl::run(pl::parse_config(tiny_config(root_ / "b")), log);
    const std::filesystem::path a = result_.manifest.parent_path(), b = again.manifest.parent_path();
    for (const char *f : {"metrics.csv", "registration.csv", "quality.csv", "summary.json", "tets/lbwarp_02.vtk"})
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
}

TEST_F(PipelineRun, ReportDetectsTampering) {
    const std::filesystem::path copy = root_ / "tampered";
    std::filesystem::copy(result_.manifest.parent_path(), copy, std::filesystem::copy_options::recursive);
    const std::filesystem::path manifest = copy / result_.manifest.filename();
    EXPECT_NO_THROW(pl::report(manifest));
    const std::string quality = slurp(copy / "quality.csv");
    { std::ofstream(copy / "quality.csv", std::ios::app) << "x\n"; }
    try {
        pl::report(manifest);
        ADD_FAILURE() << "expected a checksum error";
    } catch (const Error &e) {
        EXPECT_NE(std::string(e.what()).find("checksum mismatch: quality.csv"), std::string::npos) << e.what();
    }
    { std::ofstream(copy / "quality.csv", std::ios::binary) << quality; }
    EXPECT_NO_THROW(pl::report(manifest));
    std::filesystem::remove(copy / "tets/lbwarp_02.vtk");
    try {
        pl::report(manifest);
        ADD_FAILURE() << "expected a missing-artifact error";
    } catch (const Error &e) {
        EXPECT_NE(std::string(e.what()).find("missing artifact: tets/lbwarp_02.vtk"), std::string::npos) << e.what();
    }
}
