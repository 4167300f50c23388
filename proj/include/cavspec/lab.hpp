#pragma once

#include "cavspec/spectra.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace cavspec::lab {

struct ConfigIssue {
    std::string pointer; // JSON pointer of the offending field
    std::string message;
};

struct ConfigError : std::runtime_error {
    ConfigError(std::vector<ConfigIssue> issues_)
        : std::runtime_error(issues_.empty() ? "invalid config"
                                             : issues_.front().pointer + ": " +
                                                   issues_.front().message),
          issues(std::move(issues_)) {}
    std::vector<ConfigIssue> issues;
};

enum class ExperimentKind { Validate, Spectrum, DerivativeCheck, Branches, Split, Genericity, Lipschitz };

const char* kind_name(ExperimentKind k);

/// Fully resolved experiment description.  `resolved_json` is the complete
/// config with all defaults materialized; reports embed it so every table is
/// reproducible from the report alone.
struct ExperimentConfig {
    std::array<double, 3> extent{};
    geometry::Index3 subdivisions{};
    int quadrature_degree = 5;
    material::PermittivityField permittivity;
    std::string permittivity_name;
    double tau = 1.0;
    int eigen_count = 8;
    spectra::SpectrumTols tols;
    ExperimentKind kind = ExperimentKind::Spectrum;
    std::uint64_t seed = 0;
    bool plots = false;

    // kind-specific parameters
    int directions = 3;             // derivative-check
    double direction_norm = 0.05;   // derivative-check
    int max_targets = 5;            // derivative-check
    double t_max = 0.05;            // branches / split
    int t_points = 9;               // branches
    double window_lo = 0.0;         // branches
    double window_hi = 0.0;         // branches (0: auto around lowest cluster)
    int cluster_index = 0;          // split
    int first_n = 5;                // genericity
    double delta = 0.1;             // genericity
    int budget = 8;                 // genericity
    int pairs = 50;                 // lipschitz
    double ball_radius = 0.1;       // lipschitz
    std::vector<double> shrink_distances{1e-1, 1e-2, 1e-3, 1e-4}; // lipschitz
    int shrink_directions = 3;      // lipschitz
    int eigen_index = 1;            // lipschitz (1-based)

    std::string resolved_json;
};

/// Schema validation; empty result means the document is well-formed.
std::vector<ConfigIssue> validate_config(const std::string& json_text);

/// Parse + validate + resolve defaults.  Throws ConfigError.
ExperimentConfig parse_config(const std::string& json_text);

struct Report {
    std::string json;                                 // report.json content
    std::map<std::string, std::string> files;         // extra files by name
};

/// Executes the configured experiment.  Pure computation; writing is done
/// by write_report.
Report run(const ExperimentConfig& config);

/// Atomic write (temp file + rename) of report.json and companion files.
void write_report(const Report& report, const std::filesystem::path& out_dir);

struct PresetInfo {
    std::string name;
    std::string description;
};

std::vector<PresetInfo> domain_presets();
std::vector<PresetInfo> permittivity_presets();

/// git-style SHA-1 blob hash of a string, hex-encoded.
std::string content_hash(const std::string& content);

/// Shortest round-trip decimal rendering (<= 17 significant digits).
std::string format_double(double v);

} // namespace cavspec::lab
