#include "bloodnet/scenario.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "bloodnet/circuit.hpp"
#include "bloodnet/common.hpp"
#include "bloodnet/csv.hpp"
#include "bloodnet/terahertz.hpp"
#include "bloodnet/ultrasonic.hpp"

namespace bloodnet {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

bool parse_number(const std::string& text, double& out) {
    try {
        std::size_t used = 0;
        out = std::stod(text, &used);
        return used == text.size();
    } catch (const std::exception&) {
        return false;
    }
}

}  // namespace

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse(buffer.str(), path);
}

KeyValueConfig KeyValueConfig::parse(const std::string& text,
                                     const std::filesystem::path& origin) {
    KeyValueConfig config;
    config.origin = origin;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ParseError(origin.string() + ":" + std::to_string(line_no) +
                             ": expected key = value");
        }
        const auto key = trim(line.substr(0, eq));
        if (key.empty()) {
            throw ParseError(origin.string() + ":" + std::to_string(line_no) + ": empty key");
        }
        config.values[key] = trim(line.substr(eq + 1));
    }
    return config;
}

bool KeyValueConfig::has(const std::string& key) const { return values.count(key) != 0; }

const std::string& KeyValueConfig::get(const std::string& key) const {
    const auto it = values.find(key);
    if (it == values.end()) throw ParseError("missing config key: " + key);
    return it->second;
}

std::string KeyValueConfig::get_or(const std::string& key, const std::string& fallback) const {
    const auto it = values.find(key);
    return it == values.end() ? fallback : it->second;
}

double KeyValueConfig::number(const std::string& key) const {
    double out = 0.0;
    if (!parse_number(get(key), out)) {
        throw ParseError("config key " + key + " is not numeric: " + get(key));
    }
    return out;
}

double KeyValueConfig::number_or(const std::string& key, double fallback) const {
    return has(key) ? number(key) : fallback;
}

std::filesystem::path KeyValueConfig::resolve_path(const std::string& key) const {
    std::filesystem::path p = get(key);
    if (p.is_relative() && origin.has_parent_path()) p = origin.parent_path() / p;
    return p;
}

std::vector<Diagnostic> validate_scenario(const KeyValueConfig& config) {
    std::vector<Diagnostic> out;
    const auto fail = [&](const std::string& key, const std::string& msg) {
        out.push_back({key, msg});
    };
    const auto require_number = [&](const std::string& key, double lo, double hi,
                                    bool required, double fallback) {
        if (!config.has(key)) {
            if (required) fail(key, "required key is missing");
            return fallback;
        }
        double v = 0.0;
        if (!parse_number(config.get(key), v)) {
            fail(key, "not numeric: " + config.get(key));
            return fallback;
        }
        if (v < lo || v > hi) {
            fail(key, "outside [" + csv::format_double(lo) + ", " + csv::format_double(hi) +
                          "]: " + config.get(key));
        }
        return v;
    };

    for (const char* key : {"catalog", "infection", "gateway", "seed", "channel.kind"}) {
        if (!config.has(key)) fail(key, "required key is missing");
    }
    require_number("seed", 0.0, 1.8e19, false, 0.0);
    require_number("n_sensors", 1.0, 1e12, false, 1000.0);
    require_number("f_heart_bpm", 1.0, 600.0, false, 75.0);
    require_number("aoi.horizon_s", 1e-9, 1e12, false, 4000.0);
    require_number("aoi.min_peaks", 1.0, 1e9, false, 100.0);
    require_number("circuit.settle_cycles", 1.0, 1e6, false, 60.0);
    require_number("circuit.average_cycles", 1.0, 1e6, false, 5.0);

    // placement checks need the catalog
    if (config.has("catalog")) {
        const auto path = config.resolve_path("catalog");
        if (!std::filesystem::exists(path)) {
            fail("catalog", "file not found: " + path.string());
        } else {
            try {
                const auto catalog = load_catalog(path);
                const std::string heart = config.get_or("heart_state", "S3");
                for (const char* key : {"infection", "gateway"}) {
                    if (config.has(key) && !catalog.has(config.get(key))) {
                        fail(key, "state not in catalog: " + config.get(key));
                    }
                }
                if (config.has("infection") && catalog.has(config.get("infection")) &&
                    catalog.at(config.get("infection")).kind != VesselKind::Capillary) {
                    fail("infection", "infection site must be a capillary");
                }
                if (config.has("gateway") && catalog.has(config.get("gateway")) &&
                    config.get("gateway") != heart &&
                    catalog.at(config.get("gateway")).kind != VesselKind::Capillary) {
                    fail("gateway", "gateway must sit at a capillary or at the heart");
                }
            } catch (const Error& e) {
                fail("catalog", e.what());
            }
        }
    }
    if (config.has("infection") && config.has("gateway") &&
        config.get("infection") == config.get("gateway")) {
        fail("gateway", "infection and gateway must differ");
    }

    const std::string kind = config.get_or("channel.kind", "");
    if (kind == "fixed-p-loss") {
        require_number("channel.p_loss", 0.0, 0.999999999, true, 0.0);
    } else if (kind == "ultrasonic") {
        require_number("channel.eb_n0_db", -100.0, 100.0, false, 10.0);
        require_number("channel.packet_bits", 1.0, 1e12, false, 65536.0);
    } else if (kind == "terahertz") {
        require_number("channel.bandwidth_hz", 1.0, 1e15, false, 5e9);
        if (!config.has("channel.stack")) {
            fail("channel.stack", "required for the terahertz channel");
        } else if (!std::filesystem::exists(config.resolve_path("channel.stack"))) {
            fail("channel.stack",
                 "file not found: " + config.resolve_path("channel.stack").string());
        }
    } else if (!kind.empty()) {
        fail("channel.kind",
             "unknown channel (expected fixed-p-loss, ultrasonic, or terahertz): " + kind);
    }

    if (config.has("markov.matrix") &&
        !std::filesystem::exists(config.resolve_path("markov.matrix"))) {
        fail("markov.matrix",
             "file not found: " + config.resolve_path("markov.matrix").string());
    }

    if (config.has("sweep.parameter") != config.has("sweep.grid")) {
        fail("sweep.grid", "sweep.parameter and sweep.grid must be given together");
    }
    if (config.has("sweep.parameter")) {
        const auto& parameter = config.get("sweep.parameter");
        double probe = 0.0;
        if (!config.has(parameter)) {
            fail("sweep.parameter", "not a config key: " + parameter);
        } else if (!parse_number(config.get(parameter), probe)) {
            fail("sweep.parameter", "config key is not numeric: " + parameter);
        }
    }
    if (config.has("sweep.grid")) {
        std::istringstream grid(config.get("sweep.grid"));
        std::string field;
        int n = 0;
        while (std::getline(grid, field, ';')) {
            double v = 0.0;
            if (!parse_number(trim(field), v)) {
                fail("sweep.grid", "not numeric: " + field);
            }
            ++n;
        }
        if (n == 0) fail("sweep.grid", "empty grid");
    }
    return out;
}

Scenario resolve_scenario(const KeyValueConfig& config) {
    const auto diagnostics = validate_scenario(config);
    if (!diagnostics.empty()) {
        std::string msg = "invalid scenario:";
        for (const auto& d : diagnostics) msg += "\n  " + d.key + ": " + d.message;
        throw ParseError(msg);
    }

    Scenario s;
    s.raw = config;
    s.catalog_path = config.resolve_path("catalog");
    s.infection_id = config.get("infection");
    s.gateway_id = config.get("gateway");
    s.heart_state = config.get_or("heart_state", "S3");
    s.n_sensors = static_cast<std::size_t>(config.number_or("n_sensors", 1000.0));
    s.f_heart_bpm = config.number_or("f_heart_bpm", 75.0);
    s.seed = static_cast<std::uint64_t>(config.number("seed"));

    const std::string kind = config.get("channel.kind");
    if (kind == "fixed-p-loss") {
        s.channel = ChannelKind::FixedLoss;
        s.fixed_p_loss = config.number("channel.p_loss");
    } else if (kind == "ultrasonic") {
        s.channel = ChannelKind::Ultrasonic;
        s.eb_n0_db = config.number_or("channel.eb_n0_db", 10.0);
        s.packet_bits = config.number_or("channel.packet_bits", 65536.0);
    } else {
        s.channel = ChannelKind::Terahertz;
        s.stack_path = config.resolve_path("channel.stack");
        s.bandwidth_hz = config.number_or("channel.bandwidth_hz", 5e9);
        s.packet_bits = config.number_or("channel.packet_bits", 65536.0);
    }

    if (config.has("markov.matrix")) s.matrix_path = config.resolve_path("markov.matrix");
    s.settle_cycles = static_cast<int>(config.number_or("circuit.settle_cycles", 60.0));
    s.average_cycles = static_cast<int>(config.number_or("circuit.average_cycles", 5.0));

    s.run_oracle = config.get_or("aoi.oracle", "true") == "true";
    s.horizon_s = config.number_or("aoi.horizon_s", 4000.0);
    s.min_peaks = static_cast<std::size_t>(config.number_or("aoi.min_peaks", 100.0));

    if (config.has("sweep.parameter")) {
        s.sweep_parameter = config.get("sweep.parameter");
        std::istringstream grid(config.get("sweep.grid"));
        std::string field;
        while (std::getline(grid, field, ';')) {
            s.sweep_grid.push_back(std::stod(trim(field)));
        }
    }
    s.name = config.get_or("name", config.origin.stem().string());
    return s;
}

std::uint64_t content_hash(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot hash missing file " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char chunk[4096];
    while (in.read(chunk, sizeof(chunk)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(chunk[i]);
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

namespace {

std::uint64_t hash_string(const std::string& text, std::uint64_t h) {
    for (const char c : text) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::mutex g_matrix_cache_mutex;

}  // namespace

TransitionMatrix scenario_matrix(const Scenario& scenario, const VesselCatalog& catalog,
                                 const std::filesystem::path& cache_dir) {
    if (!scenario.matrix_path.empty()) return load_matrix(scenario.matrix_path);

    HeartParameters heart;
    heart.f_heart_bpm = scenario.f_heart_bpm;
    TransientConfig config;
    const double period = 1.0 / heart.f_heart_hz();
    config.dt_s = period / 2000.0;
    config.settle_cycles = scenario.settle_cycles;
    config.duration_s = (scenario.settle_cycles + scenario.average_cycles) * period;

    // cache by the catalog bytes and every solver knob that shapes the flows
    std::ostringstream knobs;
    knobs << heart.f_heart_bpm << ';' << heart.p_atrial_pa << ';' << heart.c_min << ';'
          << heart.c_max << ';' << heart.c_ca << ';' << config.dt_s << ';'
          << config.settle_cycles << ';' << scenario.average_cycles << ";forward-flux";
    const auto key = hash_string(knobs.str(), content_hash(scenario.catalog_path));
    const auto cache_file = cache_dir / ("pi_" + hex64(key) + ".csv");

    std::lock_guard<std::mutex> lock(g_matrix_cache_mutex);
    if (std::filesystem::exists(cache_file)) return load_matrix(cache_file);

    const auto network = assemble_network(catalog, heart);
    const auto trace = simulate_transient(network, config);
    const auto flows = mean_flow(trace, heart.f_heart_hz(), scenario.settle_cycles,
                                 FlowStatistic::ForwardFlux);
    const auto matrix = build_transition_matrix(bifurcation_ratios(flows, catalog), catalog);
    std::filesystem::create_directories(cache_dir);
    save_matrix(matrix, cache_file);
    return matrix;
}

double scenario_p_loss(const Scenario& scenario, double* ber_out) {
    double ber = 0.0;
    double p_loss = 0.0;
    switch (scenario.channel) {
        case ChannelKind::FixedLoss:
            p_loss = scenario.fixed_p_loss;
            break;
        case ChannelKind::Ultrasonic: {
            ber = rotated_bpsk_ber(std::pow(10.0, scenario.eb_n0_db / 10.0), 0.0);
            p_loss = packet_error_rate(ber, scenario.packet_bits);
            break;
        }
        case ChannelKind::Terahertz: {
            ThzLinkConfig link;
            link.bandwidth_hz = scenario.bandwidth_hz;
            link.packet_bits = scenario.packet_bits;
            const auto stack = load_tissue_stack(scenario.stack_path);
            const auto sweep = ber_vs_bandwidth(link, stack, {scenario.bandwidth_hz});
            ber = sweep.front().ber;
            p_loss = sweep.front().per;
            break;
        }
    }
    if (ber_out != nullptr) *ber_out = ber;
    return p_loss;
}

namespace {

template <typename F>
auto timed(std::vector<StageTiming>& timings, const std::string& stage, F&& fn) {
    const auto start = std::chrono::steady_clock::now();
    try {
        auto result = fn();
        timings.push_back(
            {stage, std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                        .count()});
        return result;
    } catch (const std::exception& e) {
        throw Error("stage " + stage + ": " + e.what());
    }
}

PaoiReport evaluate_point(const Scenario& scenario, const VesselCatalog& catalog,
                          const TransitionMatrix& matrix, bool with_oracle,
                          double* ber_out) {
    const auto nu = stationary_distribution(matrix);
    const auto generation =
        generation_expectation(occupancy(nu, catalog, scenario.infection_id),
                               static_cast<double>(scenario.n_sensors),
                               segment_travel_time(catalog.at(scenario.infection_id)));
    const auto delay = build_delay_model(matrix, catalog, scenario.infection_id,
                                         scenario.gateway_id, scenario.heart_state);
    const double e_td = expected_delay(delay);
    const double p_loss = scenario_p_loss(scenario, ber_out);

    PaoiReport report;
    report.scenario = scenario.name;
    report.e_tg_s = generation.e_tg_s;
    report.e_td_s = e_td;
    report.p_loss = p_loss;
    report.seed = scenario.seed;
    // PER of one means no update is ever delivered: the age diverges
    report.paoi_closed_s = p_loss < 1.0 ? average_paoi(generation.e_tg_s, e_td, p_loss)
                                        : std::numeric_limits<double>::infinity();
    if (with_oracle && p_loss < 1.0) {
        AoiConfig oracle;
        oracle.infection_id = scenario.infection_id;
        oracle.gateway_id = scenario.gateway_id;
        oracle.p_loss = p_loss;
        oracle.n_sensors = scenario.n_sensors;
        oracle.horizon_s = scenario.horizon_s;
        oracle.min_peaks = scenario.min_peaks;
        oracle.seed = scenario.seed;
        const auto run = simulate_aoi(matrix, catalog, oracle);
        report.paoi_oracle_mean_s = run.mean_peak_s;
        report.paoi_oracle_ci95_s = run.ci95_s;
        report.n_peaks = run.peaks_s.size();
    }
    return report;
}

void write_manifest(const Scenario& scenario, const RunResult& result,
                    const std::filesystem::path& out_dir) {
    nlohmann::json manifest;
    for (const auto& [key, value] : scenario.raw.values) manifest["config"][key] = value;
    manifest["seed"] = scenario.seed;
    manifest["fixtures"]["catalog"] = "fnv1a64:" + hex64(content_hash(scenario.catalog_path));
    if (!scenario.matrix_path.empty()) {
        manifest["fixtures"]["matrix"] = "fnv1a64:" + hex64(content_hash(scenario.matrix_path));
    }
    if (!scenario.stack_path.empty()) {
        manifest["fixtures"]["stack"] = "fnv1a64:" + hex64(content_hash(scenario.stack_path));
    }
    for (const auto& t : result.timings) {
        manifest["timings"].push_back({{"stage", t.stage}, {"seconds", t.seconds}});
    }
    for (const auto& p : result.outputs) manifest["outputs"].push_back(p.filename().string());

    const auto path = out_dir / "manifest.json";
    const auto tmp = out_dir / "manifest.json.tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw Error("cannot write " + tmp.string());
        out << manifest.dump(2) << '\n';
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace

RunResult run_scenario(const Scenario& scenario, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    RunResult result;

    const auto catalog = timed(result.timings, "catalog",
                               [&] { return load_catalog(scenario.catalog_path); });
    const auto matrix = timed(result.timings, "transition-matrix", [&] {
        return scenario_matrix(scenario, catalog, out_dir / "cache");
    });
    result.report = timed(result.timings, "paoi", [&] {
        return evaluate_point(scenario, catalog, matrix, scenario.run_oracle,
                              &result.channel_ber);
    });

    timed(result.timings, "artifacts", [&] {
        save_matrix(matrix, out_dir / "pi.csv");
        result.outputs.push_back(out_dir / "pi.csv");
        save_stationary(stationary_distribution(matrix), out_dir / "stationary.csv");
        result.outputs.push_back(out_dir / "stationary.csv");
        save_loops(enumerate_loops(matrix, catalog, scenario.heart_state),
                   out_dir / "loops.csv");
        result.outputs.push_back(out_dir / "loops.csv");
        save_paoi_reports({result.report}, out_dir / "paoi_report.csv");
        result.outputs.push_back(out_dir / "paoi_report.csv");
        if (scenario.run_oracle && result.report.n_peaks > 0) {
            AoiConfig oracle;
            oracle.infection_id = scenario.infection_id;
            oracle.gateway_id = scenario.gateway_id;
            oracle.p_loss = result.report.p_loss;
            oracle.n_sensors = scenario.n_sensors;
            oracle.horizon_s = scenario.horizon_s;
            oracle.min_peaks = scenario.min_peaks;
            oracle.seed = scenario.seed;
            save_sawtooth(simulate_aoi(matrix, catalog, oracle), out_dir / "sawtooth.csv");
            result.outputs.push_back(out_dir / "sawtooth.csv");
        }
        return 0;
    });
    write_manifest(scenario, result, out_dir);
    result.outputs.push_back(out_dir / "manifest.json");
    return result;
}

std::vector<SweepPoint> run_sweep(const Scenario& scenario,
                                  const std::filesystem::path& out_dir, int jobs) {
    if (scenario.sweep_parameter.empty() || scenario.sweep_grid.empty()) {
        throw Error("scenario has no sweep parameter or an empty grid");
    }
    std::filesystem::create_directories(out_dir);
    const auto catalog = load_catalog(scenario.catalog_path);

    std::vector<SweepPoint> points(scenario.sweep_grid.size());
    std::atomic<std::size_t> next{0};
    std::vector<std::string> failures(scenario.sweep_grid.size());

    const auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < points.size(); i = next.fetch_add(1)) {
            try {
                KeyValueConfig overridden = scenario.raw;
                overridden.values[scenario.sweep_parameter] =
                    csv::format_double(scenario.sweep_grid[i]);
                Scenario point = resolve_scenario(overridden);
                point.name = scenario.name;
                const auto matrix = scenario_matrix(point, catalog, out_dir / "cache");
                points[i].value = scenario.sweep_grid[i];
                points[i].report = evaluate_point(point, catalog, matrix,
                                                  /*with_oracle=*/false,
                                                  &points[i].channel_ber);
            } catch (const std::exception& e) {
                failures[i] = e.what();
            }
        }
    };

    const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(points.size())));
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    for (std::size_t i = 0; i < failures.size(); ++i) {
        if (!failures[i].empty()) {
            throw Error("sweep point " + csv::format_double(scenario.sweep_grid[i]) + ": " +
                        failures[i]);
        }
    }
    save_sweep(points, out_dir / "sweep.csv");
    return points;
}

void save_sweep(const std::vector<SweepPoint>& points, const std::filesystem::path& path) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& p : points) {
        const auto& r = p.report;
        rows.push_back({csv::format_double(p.value), r.scenario, csv::format_double(r.e_tg_s),
                        csv::format_double(r.e_td_s), csv::format_double(r.p_loss),
                        csv::format_double(r.paoi_closed_s),
                        csv::format_double(r.paoi_oracle_mean_s),
                        csv::format_double(r.paoi_oracle_ci95_s), std::to_string(r.n_peaks),
                        std::to_string(r.seed), csv::format_double(p.channel_ber)});
    }
    csv::write_file(path,
                    {"sweep_value", "scenario", "E_Tg", "E_Td", "p_loss", "paoi_closed",
                     "paoi_oracle_mean", "paoi_oracle_ci95", "n_peaks", "seed", "channel_ber"},
                    rows);
}

}  // namespace bloodnet
