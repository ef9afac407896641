#include <cstdint>
#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "bloodnet/common.hpp"
#include "bloodnet/scenario.hpp"

namespace {

constexpr int k_exit_ok = 0;
constexpr int k_exit_validation = 1;
constexpr int k_exit_runtime = 2;

bloodnet::KeyValueConfig load_config(const std::string& path, std::uint64_t seed,
                                     bool seed_given) {
    auto config = bloodnet::KeyValueConfig::load(path);
    if (seed_given) config.values["seed"] = std::to_string(seed);
    return config;
}

void print_report(const bloodnet::PaoiReport& r) {
    std::printf("scenario:        %s\n", r.scenario.c_str());
    std::printf("E[T_g]:          %.6g s\n", r.e_tg_s);
    std::printf("E[T_d]:          %.6g s\n", r.e_td_s);
    std::printf("p_loss:          %.6g\n", r.p_loss);
    std::printf("PAoI (closed):   %.6g s\n", r.paoi_closed_s);
    if (r.n_peaks > 0) {
        std::printf("PAoI (oracle):   %.6g s +- %.3g (%zu peaks)\n", r.paoi_oracle_mean_s,
                    r.paoi_oracle_ci95_s, r.n_peaks);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Average peak-age-of-information analytics for an intra-body "
                 "nanosensor network"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_arg;
    std::uint64_t seed = 0;
    bool seed_given = false;
    int jobs = 1;

    const auto add_common = [&](CLI::App* cmd, bool with_jobs) {
        cmd->add_option("--config", config_path, "scenario config file")->required();
        cmd->add_option("--seed", seed, "override the config seed")
            ->each([&](const std::string&) { seed_given = true; });
        cmd->add_option("--out", out_arg, "output directory (or file for exports)");
        if (with_jobs) cmd->add_option("--jobs", jobs, "parallel sweep workers");
    };

    auto* validate = app.add_subcommand("validate", "check a scenario config");
    add_common(validate, false);
    auto* run = app.add_subcommand("run", "run the full pipeline once");
    add_common(run, false);
    auto* sweep = app.add_subcommand("sweep", "run the configured parameter sweep");
    add_common(sweep, true);
    auto* export_matrix =
        app.add_subcommand("export-matrix", "write the transition matrix CSV");
    add_common(export_matrix, false);
    auto* export_loops =
        app.add_subcommand("export-loops", "write the circulation loops CSV");
    add_common(export_loops, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? k_exit_ok : k_exit_validation;
    }

    try {
        const auto config = load_config(config_path, seed, seed_given);

        if (validate->parsed()) {
            const auto diagnostics = bloodnet::validate_scenario(config);
            for (const auto& d : diagnostics) {
                std::printf("error: %s: %s\n", d.key.c_str(), d.message.c_str());
            }
            if (diagnostics.empty()) {
                std::printf("ok: %s\n", config_path.c_str());
                return k_exit_ok;
            }
            return k_exit_validation;
        }

        const auto scenario = bloodnet::resolve_scenario(config);
        const std::string out_dir = out_arg.empty() ? "out" : out_arg;

        if (run->parsed()) {
            const auto result = bloodnet::run_scenario(scenario, out_dir);
            print_report(result.report);
            for (const auto& path : result.outputs) {
                std::printf("wrote %s\n", path.string().c_str());
            }
            return k_exit_ok;
        }
        if (sweep->parsed()) {
            const auto points = bloodnet::run_sweep(scenario, out_dir, jobs);
            std::size_t best = 0;
            for (std::size_t i = 0; i < points.size(); ++i) {
                std::printf("%-14g p_loss=%-12g paoi=%-12g ber=%g\n", points[i].value,
                            points[i].report.p_loss, points[i].report.paoi_closed_s,
                            points[i].channel_ber);
                if (points[i].report.p_loss < points[best].report.p_loss) best = i;
            }
            if (points.size() >= 3 && best > 0 && best + 1 < points.size()) {
                std::printf("interior channel-loss minimum at sweep_value=%g\n",
                            points[best].value);
            }
            std::printf("wrote %s\n", (std::filesystem::path(out_dir) / "sweep.csv")
                                          .string()
                                          .c_str());
            return k_exit_ok;
        }

        // export verbs share the matrix stage; --out names the file
        const auto catalog = bloodnet::load_catalog(scenario.catalog_path);
        const auto matrix = bloodnet::scenario_matrix(
            scenario, catalog, std::filesystem::path("out") / "cache");
        if (export_matrix->parsed()) {
            const std::string out_file = out_arg.empty() ? "pi.csv" : out_arg;
            bloodnet::save_matrix(matrix, out_file);
            std::printf("wrote %s\n", out_file.c_str());
            return k_exit_ok;
        }
        const std::string out_file = out_arg.empty() ? "loops.csv" : out_arg;
        bloodnet::save_loops(bloodnet::enumerate_loops(matrix, catalog, scenario.heart_state),
                             out_file);
        std::printf("wrote %s\n", out_file.c_str());
        return k_exit_ok;
    } catch (const bloodnet::ParseError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return k_exit_validation;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return k_exit_runtime;
    }
}
