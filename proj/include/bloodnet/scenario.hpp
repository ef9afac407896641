#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "bloodnet/aoi.hpp"
#include "bloodnet/markov.hpp"
#include "bloodnet/vascular.hpp"

namespace bloodnet {

/// Flat key-value configuration with dotted section prefixes. One `key =
/// value` pair per line; '#' starts a comment. Physical quantities carry a
/// unit suffix in the key name (_s, _m, _hz, _bpm).
struct KeyValueConfig {
    std::filesystem::path origin;  // for resolving relative paths
    std::map<std::string, std::string> values;

    static KeyValueConfig load(const std::filesystem::path& path);
    static KeyValueConfig parse(const std::string& text,
                                const std::filesystem::path& origin = "<string>");

    bool has(const std::string& key) const;
    const std::string& get(const std::string& key) const;  // throws on absence
    std::string get_or(const std::string& key, const std::string& fallback) const;
    double number(const std::string& key) const;
    double number_or(const std::string& key, double fallback) const;
    /// Path value resolved against the config file's directory.
    std::filesystem::path resolve_path(const std::string& key) const;
};

enum class ChannelKind { FixedLoss, Ultrasonic, Terahertz };

/// Fully resolved scenario. See `scenarios/` for the documented key set.
struct Scenario {
    std::filesystem::path catalog_path;
    std::string infection_id;
    std::string gateway_id;
    std::string heart_state = "S3";
    std::size_t n_sensors = 1000;
    double f_heart_bpm = 75.0;
    std::uint64_t seed = 1;

    ChannelKind channel = ChannelKind::FixedLoss;
    double fixed_p_loss = 0.0;
    double packet_bits = 65536.0;
    double eb_n0_db = 10.0;                 // ultrasonic
    std::filesystem::path stack_path;       // terahertz
    double bandwidth_hz = 5e9;              // terahertz

    std::filesystem::path matrix_path;      // optional frozen transition matrix
    int settle_cycles = 60;                 // circuit settling when deriving
    int average_cycles = 5;

    bool run_oracle = true;
    double horizon_s = 4000.0;
    std::size_t min_peaks = 100;

    std::string sweep_parameter;
    std::vector<double> sweep_grid;

    std::string name;      // report label, defaults to the config stem
    KeyValueConfig raw;    // for sweep overrides
};

struct Diagnostic {
    std::string key;
    std::string message;
};

/// Non-throwing validation: one diagnostic per missing or inconsistent field.
std::vector<Diagnostic> validate_scenario(const KeyValueConfig& config);

/// Strict resolution; throws ParseError naming the offending key.
Scenario resolve_scenario(const KeyValueConfig& config);

/// FNV-1a 64-bit content hash of a file, for fixture manifests and the
/// transition-matrix cache key.
std::uint64_t content_hash(const std::filesystem::path& path);

struct StageTiming {
    std::string stage;
    double seconds = 0.0;
};

struct RunResult {
    PaoiReport report;
    double channel_ber = 0.0;
    std::vector<StageTiming> timings;
    std::vector<std::filesystem::path> outputs;
};

/// Transition matrix for the scenario: the frozen fixture when one is
/// referenced, otherwise derived from the transient circuit (forward-flux
/// split ratios) and cached under `cache_dir` by content hash.
TransitionMatrix scenario_matrix(const Scenario& scenario, const VesselCatalog& catalog,
                                 const std::filesystem::path& cache_dir);

/// Packet loss probability of the configured channel (PER of one report).
double scenario_p_loss(const Scenario& scenario, double* ber_out = nullptr);

/// Full pipeline: catalog -> transition matrix -> stationary/loops -> channel
/// -> PAoI closed form and oracle. Writes pi.csv, stationary.csv, loops.csv,
/// paoi_report.csv, sawtooth.csv (oracle runs only), and manifest.json under
/// out_dir; all writes are atomic.
RunResult run_scenario(const Scenario& scenario, const std::filesystem::path& out_dir);

struct SweepPoint {
    double value = 0.0;
    PaoiReport report;
    double channel_ber = 0.0;
};

/// One pipeline run per grid value of the configured sweep parameter (the
/// oracle stage is skipped for speed); points run in parallel over `jobs`
/// threads. Writes sweep.csv with a leading sweep_value column.
std::vector<SweepPoint> run_sweep(const Scenario& scenario,
                                  const std::filesystem::path& out_dir, int jobs = 1);

void save_sweep(const std::vector<SweepPoint>& points, const std::filesystem::path& path);

}  // namespace bloodnet
