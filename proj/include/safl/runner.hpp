#pragma once

// Experiment runner behind the `safl` command line: config files, seed sweeps,
// per-run metrics CSV, aggregate summaries, comparison tables and probes.
//
// Config files hold one `key = value` per line; `#` starts a comment. Values
// are bare or double-quoted strings, numbers, true/false, or bracketed lists
// such as `trigger_indices = [8, 9]`. `task` and `defense` are required.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "safl/numkit.hpp"
#include "safl/orchestrator.hpp"

namespace safl {

/// Raised for malformed or invalid configuration; the message starts with the
/// offending key.
class ConfigError : public Error {
public:
    using Error::Error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitRunFailure = 1;
inline constexpr int kExitConfigError = 2;

/// Environment variable naming the default output root for `run`.
inline constexpr const char* kOutputRootEnv = "SAFL_OUT";

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config(const std::filesystem::path& path);

/// Every key, one per line, in a fixed order; parse_config_text inverts it.
std::string serialize_config(const ExperimentConfig& cfg);

/// 16 hex digits identifying the configuration with the seed left out.
std::string config_hash(const ExperimentConfig& cfg);

/// Header `round,<columns...>`; absent optionals become empty cells. Values
/// are written in shortest round-trip form.
void write_metrics_csv(std::ostream& os, const MetricsLog& log);
MetricsLog read_metrics_csv(std::istream& is, std::size_t tau_max = 0);

enum class RunStatus { pending, done, failed };
std::string to_string(RunStatus s);

struct RunManifest {
    std::string config_hash;
    std::vector<std::uint64_t> seeds;
    std::filesystem::path output_dir;  // <root>/<config hash>
    std::vector<RunStatus> status;     // parallel to seeds
    std::vector<std::string> errors;   // parallel to seeds; empty when fine

    static RunManifest make(const ExperimentConfig& cfg, std::vector<std::uint64_t> seeds,
                            const std::filesystem::path& root);
    std::filesystem::path run_dir(std::size_t k) const;
};

struct SweepOptions {
    std::size_t jobs = 1;
    bool force = false;
};

/// Runs every seed of the manifest, writing <dir>/config.toml,
/// <dir>/seed_<s>/metrics.csv, <dir>/summary.json and <dir>/manifest.json.
/// Returns kExitOk when every run completed, kExitRunFailure otherwise.
/// Throws ConfigError if the output directory exists and force is false.
int run_sweep(const ExperimentConfig& cfg, RunManifest& manifest, const SweepOptions& opts, std::ostream& log);

/// Final-round mean (and population std) per metric over seeds.
struct MetricSummary {
    double mean = 0.0;
    double std = 0.0;
    std::size_t count = 0;
};

/// Comparison grid: rows are defenses, columns attacks. Each dir is a sweep
/// output holding summary.json. For metric "ter", targeted-attack cells read
/// "TER/ASR".
std::string compare_table(const std::vector<std::filesystem::path>& dirs, const std::string& metric);

/// Runs theory_probe on every metrics.csv below dir (a sweep or single run)
/// and writes dir/theory.json. Returns the JSON text.
std::string probe_directory(const std::filesystem::path& dir);

std::vector<std::uint64_t> parse_seed_list(const std::string& text);

}  // namespace safl
