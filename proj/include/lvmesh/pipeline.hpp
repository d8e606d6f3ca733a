#pragma once

// End-to-end driver: input (phantom or MetaImage files) -> slice alignment ->
// registration -> ED surface and tet mesh -> per-frame propagation and
// warping -> metrics, with a checksummed manifest of every emitted file.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lvmesh/isosurface.hpp"
#include "lvmesh/phantom.hpp"
#include "lvmesh/registration.hpp"

namespace lvmesh::pipeline {

struct Config {
    std::filesystem::path output_dir;
    std::uint64_t seed = 1;

    // Exactly one input kind.
    std::optional<PhantomSpec> phantom;
    std::vector<std::filesystem::path> images;
    std::vector<std::filesystem::path> masks;

    bool align = true;

    std::vector<reg::Backend> backends{reg::Backend::dense, reg::Backend::ffd};
    std::vector<reg::Pairing> pairings{reg::Pairing::fixed_reference, reg::Pairing::sequential};
    reg::RegistrationConfig registration;

    IsoPolicy iso_policy = IsoPolicy::box;
    double resample_z_mm = 0.0; // 0 keeps the native slice spacing
    int target_vertices = 2500;
    double max_volume = 9.0;
    double lbwarp_tolerance = 1e-10;
    int lbwarp_max_iterations = 10000;

    // Configuration as parsed, normalized with defaults (echoed in the manifest).
    std::string canonical_json() const;
};

// Parses and validates; every problem is reported with its JSON path.
Config parse_config(const std::string &json_text, const std::filesystem::path &base_dir = {});
Config load_config(const std::filesystem::path &path);

// Derived per-stage seed (FNV-1a of the stage name mixed with the root).
std::uint64_t stage_seed(std::uint64_t root, const std::string &stage);

std::string sha256_file(const std::filesystem::path &path);

struct RunResult {
    std::filesystem::path manifest;
    int frames = 0;
    std::vector<std::string> violations; // invariant failures (non-empty -> non-zero exit)
};

// Runs every stage; progress goes to `log`.
RunResult run(const Config &cfg, std::ostream &log);

// Writes the phantom volumes, masks, ground-truth fields and a manifest.
std::filesystem::path write_phantom(const PhantomSpec &spec, const std::filesystem::path &dir, double misalignment_mm,
                                    std::uint64_t misalignment_seed);

struct Report {
    std::string text; // human-readable tables
    std::string csv;  // pair,frame,dice,mad
};

// Verifies every manifest entry (existence and checksum) and renders tables.
Report report(const std::filesystem::path &manifest);

} // namespace lvmesh::pipeline
