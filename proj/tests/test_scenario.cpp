#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "bloodnet/common.hpp"
#include "bloodnet/markov.hpp"
#include "bloodnet/scenario.hpp"

using namespace bloodnet;

namespace {

/// Self-cleaning temp directory holding a complete miniature scenario: a
/// 7-segment closed circulation, a frozen transition matrix, and a config.
struct ScenarioFixture {
    std::filesystem::path dir;

    ScenarioFixture() {
        dir = std::filesystem::temp_directory_path() /
              ("bloodnet_scenario_" + std::to_string(::getpid()) + "_" +
               std::to_string(counter()++));
        std::filesystem::create_directories(dir);

        write("catalog.csv",
              "state_id,name,kind,length_m,radius_m,thickness_m,speed_mps,downstream\n"
              "S1,RH,heart-chamber,0.1,0.01,0.001,0.1,S2\n"
              "S2,LU,lung,0.1,0.01,0.001,0.1,S3\n"
              "S3,LH,heart-chamber,0.1,0.01,0.001,0.1,S4\n"
              "S4,A,artery,0.1,0.005,0.0005,0.1,S5;S6\n"
              "S5,C1,capillary,0.1,0.0005,0.0001,0.1,S7\n"
              "S6,C2,capillary,0.1,0.0005,0.0001,0.1,S7\n"
              "S7,V,vein,0.1,0.004,0.0003,0.1,S1\n");

        const auto catalog = load_catalog(dir / "catalog.csv");
        BifurcationWeights weights{{{"S4", "S5"}, 0.75}, {{"S4", "S6"}, 0.25}};
        save_matrix(build_transition_matrix(weights, catalog), dir / "pi.csv");

        write("scenario.cfg",
              "name = mini\n"
              "catalog = catalog.csv\n"
              "markov.matrix = pi.csv\n"
              "infection = S5\n"
              "gateway = S3\n"
              "n_sensors = 100\n"
              "seed = 7\n"
              "channel.kind = fixed-p-loss\n"
              "channel.p_loss = 0\n"
              "aoi.horizon_s = 2000\n"
              "aoi.min_peaks = 50\n"
              "sweep.parameter = channel.p_loss\n"
              "sweep.grid = 0;0.5\n");
    }

    ~ScenarioFixture() {
        std::error_code ec;
        std::filesystem::remove_all(dir, ec);
    }

    void write(const std::string& name, const std::string& text) const {
        std::ofstream out(dir / name);
        out << text;
    }

    KeyValueConfig config() const { return KeyValueConfig::load(dir / "scenario.cfg"); }

    static int& counter() {
        static int n = 0;
        return n;
    }
};

bool has_diagnostic(const std::vector<Diagnostic>& diagnostics, const std::string& key) {
    for (const auto& d : diagnostics) {
        if (d.key == key) return true;
    }
    return false;
}

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

}  // namespace

TEST_CASE("key-value config parsing") {
    SUBCASE("comments, blanks, and dotted keys") {
        const auto c = KeyValueConfig::parse(
            "# header comment\n"
            "\n"
            "  name = demo run  # trailing comment\n"
            "channel.kind = fixed-p-loss\n"
            "aoi.horizon_s = 42.5\n");
        CHECK(c.get("name") == "demo run");
        CHECK(c.get("channel.kind") == "fixed-p-loss");
        CHECK(c.number("aoi.horizon_s") == doctest::Approx(42.5));
        CHECK(c.get_or("missing", "fallback") == "fallback");
        CHECK(c.number_or("missing", 3.0) == doctest::Approx(3.0));
        CHECK_FALSE(c.has("missing"));
    }
    SUBCASE("malformed lines name the line number") {
        CHECK_THROWS_WITH_AS(KeyValueConfig::parse("a = 1\nno equals sign\n"),
                             doctest::Contains(":2:"), ParseError);
        CHECK_THROWS_AS(KeyValueConfig::parse("= orphan value\n"), ParseError);
    }
    SUBCASE("typed access errors") {
        const auto c = KeyValueConfig::parse("speed = fast\n");
        CHECK_THROWS_AS(c.get("absent"), ParseError);
        CHECK_THROWS_AS(c.number("speed"), ParseError);
    }
    SUBCASE("relative paths resolve against the config directory") {
        ScenarioFixture fx;
        const auto c = fx.config();
        CHECK(c.resolve_path("catalog") == fx.dir / "catalog.csv");
        CHECK(std::filesystem::exists(c.resolve_path("markov.matrix")));
    }
}

TEST_CASE("scenario validation diagnostics") {
    ScenarioFixture fx;

    SUBCASE("empty config reports every required key") {
        const auto diagnostics = validate_scenario(KeyValueConfig::parse(""));
        for (const char* key : {"catalog", "infection", "gateway", "seed", "channel.kind"}) {
            CHECK(has_diagnostic(diagnostics, key));
        }
    }
    SUBCASE("well-formed config is clean") {
        CHECK(validate_scenario(fx.config()).empty());
    }
    SUBCASE("placement rules") {
        auto c = fx.config();
        c.values["gateway"] = c.values["infection"];
        CHECK(has_diagnostic(validate_scenario(c), "gateway"));

        c = fx.config();
        c.values["infection"] = "S4";  // artery, not a capillary
        CHECK(has_diagnostic(validate_scenario(c), "infection"));

        c = fx.config();
        c.values["gateway"] = "S7";  // vein: neither capillary nor heart
        CHECK(has_diagnostic(validate_scenario(c), "gateway"));

        c = fx.config();
        c.values["infection"] = "S99";
        CHECK(has_diagnostic(validate_scenario(c), "infection"));
    }
    SUBCASE("channel rules") {
        auto c = fx.config();
        c.values["channel.kind"] = "smoke-signal";
        CHECK(has_diagnostic(validate_scenario(c), "channel.kind"));

        c = fx.config();
        c.values["channel.p_loss"] = "1.5";
        CHECK(has_diagnostic(validate_scenario(c), "channel.p_loss"));

        c = fx.config();
        c.values["channel.kind"] = "terahertz";
        CHECK(has_diagnostic(validate_scenario(c), "channel.stack"));
    }
    SUBCASE("missing fixture files") {
        auto c = fx.config();
        c.values["markov.matrix"] = "nowhere.csv";
        CHECK(has_diagnostic(validate_scenario(c), "markov.matrix"));

        c = fx.config();
        c.values["catalog"] = "nowhere.csv";
        CHECK(has_diagnostic(validate_scenario(c), "catalog"));
    }
    SUBCASE("sweep rules") {
        auto c = fx.config();
        c.values.erase("sweep.grid");
        CHECK(has_diagnostic(validate_scenario(c), "sweep.grid"));

        c = fx.config();
        c.values["sweep.parameter"] = "name";  // exists but not numeric
        CHECK(has_diagnostic(validate_scenario(c), "sweep.parameter"));

        c = fx.config();
        c.values["sweep.parameter"] = "no.such.key";
        CHECK(has_diagnostic(validate_scenario(c), "sweep.parameter"));

        c = fx.config();
        c.values["sweep.grid"] = "0;banana;1";
        CHECK(has_diagnostic(validate_scenario(c), "sweep.grid"));
    }
}

TEST_CASE("scenario resolution") {
    ScenarioFixture fx;

    SUBCASE("golden config resolves every field") {
        const auto s = resolve_scenario(fx.config());
        CHECK(s.name == "mini");
        CHECK(s.infection_id == "S5");
        CHECK(s.gateway_id == "S3");
        CHECK(s.n_sensors == 100);
        CHECK(s.seed == 7);
        CHECK(s.channel == ChannelKind::FixedLoss);
        CHECK(s.fixed_p_loss == 0.0);
        CHECK(s.matrix_path == fx.dir / "pi.csv");
        CHECK(s.horizon_s == doctest::Approx(2000.0));
        CHECK(s.min_peaks == 50);
        CHECK(s.sweep_parameter == "channel.p_loss");
        REQUIRE(s.sweep_grid.size() == 2);
        CHECK(s.sweep_grid[1] == doctest::Approx(0.5));
    }
    SUBCASE("invalid config throws with every diagnostic aggregated") {
        auto c = fx.config();
        c.values.erase("infection");
        c.values["channel.kind"] = "smoke-signal";
        CHECK_THROWS_WITH_AS(resolve_scenario(c), doctest::Contains("infection"),
                             ParseError);
        try {
            resolve_scenario(c);
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find("channel.kind") != std::string::npos);
        }
    }
    SUBCASE("name defaults to the config file stem") {
        auto c = fx.config();
        c.values.erase("name");
        CHECK(resolve_scenario(c).name == "scenario");
    }
}

TEST_CASE("content hash") {
    ScenarioFixture fx;
    fx.write("a.txt", "hello\n");
    fx.write("b.txt", "hello\n");
    fx.write("c.txt", "hellp\n");
    CHECK(content_hash(fx.dir / "a.txt") == content_hash(fx.dir / "b.txt"));
    CHECK(content_hash(fx.dir / "a.txt") != content_hash(fx.dir / "c.txt"));
    CHECK_THROWS_AS(content_hash(fx.dir / "missing.txt"), Error);
}

TEST_CASE("frozen transition matrix is loaded verbatim") {
    ScenarioFixture fx;
    const auto scenario = resolve_scenario(fx.config());
    const auto catalog = load_catalog(scenario.catalog_path);
    const auto matrix = scenario_matrix(scenario, catalog, fx.dir / "cache");
    CHECK(matrix.prob("S4", "S5") == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(matrix.prob("S4", "S6") == doctest::Approx(0.25).epsilon(1e-12));
    // a frozen matrix must not trigger the circuit derivation or its cache
    CHECK_FALSE(std::filesystem::exists(fx.dir / "cache"));
}

TEST_CASE("scenario run artifacts") {
    ScenarioFixture fx;
    const auto scenario = resolve_scenario(fx.config());
    const auto out = fx.dir / "out_a";
    const auto result = run_scenario(scenario, out);

    SUBCASE("closed form matches the hand-evaluated miniature") {
        // gateway at the heart: direct chain S5->S7->S1->S2 of 1 s segments,
        // no detours. E[T_g] = 1 / (0.125 * 100) = 0.08 s.
        CHECK(result.report.e_td_s == doctest::Approx(4.0).epsilon(1e-9));
        CHECK(result.report.e_tg_s == doctest::Approx(0.08).epsilon(1e-9));
        CHECK(result.report.paoi_closed_s == doctest::Approx(4.08).epsilon(1e-9));
        CHECK(result.report.n_peaks >= 50);
    }
    SUBCASE("every documented artifact exists") {
        for (const char* name : {"pi.csv", "stationary.csv", "loops.csv",
                                 "paoi_report.csv", "sawtooth.csv", "manifest.json"}) {
            CHECK(std::filesystem::exists(out / name));
        }
        CHECK(result.outputs.size() == 6);
    }
    SUBCASE("manifest echoes the config and hashes the fixtures") {
        const auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
        CHECK(manifest["config"]["infection"] == "S5");
        CHECK(manifest["seed"] == 7);
        const std::string catalog_hash = manifest["fixtures"]["catalog"];
        CHECK(catalog_hash.rfind("fnv1a64:", 0) == 0);
        CHECK(manifest.contains("timings"));
    }
    SUBCASE("same seed reruns are byte identical") {
        const auto out_b = fx.dir / "out_b";
        run_scenario(scenario, out_b);
        for (const char* name :
             {"pi.csv", "stationary.csv", "loops.csv", "paoi_report.csv", "sawtooth.csv"}) {
            CHECK(slurp(out / name) == slurp(out_b / name));
        }
    }
    SUBCASE("a different seed moves the oracle but not the closed form") {
        auto c = fx.config();
        c.values["seed"] = "8";
        const auto other = run_scenario(resolve_scenario(c), fx.dir / "out_c");
        CHECK(other.report.paoi_closed_s == doctest::Approx(result.report.paoi_closed_s));
        CHECK(other.report.paoi_oracle_mean_s != result.report.paoi_oracle_mean_s);
    }
}

TEST_CASE("parameter sweep") {
    ScenarioFixture fx;
    const auto scenario = resolve_scenario(fx.config());
    const auto out = fx.dir / "sweep";
    const auto points = run_sweep(scenario, out, 2);

    REQUIRE(points.size() == 2);
    CHECK(points[0].value == doctest::Approx(0.0));
    CHECK(points[1].value == doctest::Approx(0.5));
    // halving the delivery probability doubles the generation term
    CHECK(points[1].report.paoi_closed_s > points[0].report.paoi_closed_s);
    CHECK(points[1].report.paoi_closed_s ==
          doctest::Approx(points[0].report.e_tg_s / 0.5 + points[0].report.e_td_s)
              .epsilon(1e-9));
    // the sweep skips the oracle stage for speed
    CHECK(points[0].report.n_peaks == 0);
    CHECK(std::filesystem::exists(out / "sweep.csv"));
    CHECK(slurp(out / "sweep.csv").rfind("sweep_value,", 0) == 0);

    SUBCASE("a scenario without a sweep section is refused") {
        auto c = fx.config();
        c.values.erase("sweep.parameter");
        c.values.erase("sweep.grid");
        CHECK_THROWS_AS(run_sweep(resolve_scenario(c), out, 1), Error);
    }
}
