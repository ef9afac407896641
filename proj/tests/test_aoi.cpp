#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "bloodnet/aoi.hpp"
#include "bloodnet/common.hpp"
#include "bloodnet/markov.hpp"
#include "bloodnet/rng.hpp"

using namespace bloodnet;

namespace {

std::filesystem::path default_catalog_path() {
    return std::filesystem::path(BLOODNET_SOURCE_DIR) / "data" / "default_catalog.csv";
}

/// Minimal closed circulation with a 3:1 capillary split; every segment takes
/// exactly one second.
VesselCatalog mini_catalog() {
    const std::string text =
        "state_id,name,kind,length_m,radius_m,thickness_m,speed_mps,downstream\n"
        "S1,RH,heart-chamber,0.1,0.01,0.001,0.1,S2\n"
        "S2,LU,lung,0.1,0.01,0.001,0.1,S3\n"
        "S3,LH,heart-chamber,0.1,0.01,0.001,0.1,S4\n"
        "S4,A,artery,0.1,0.005,0.0005,0.1,S5;S6\n"
        "S5,C1,capillary,0.1,0.0005,0.0001,0.1,S7\n"
        "S6,C2,capillary,0.1,0.0005,0.0001,0.1,S7\n"
        "S7,V,vein,0.1,0.004,0.0003,0.1,S1\n";
    return load_catalog_string(text);
}

TransitionMatrix mini_matrix(const VesselCatalog& cat) {
    BifurcationWeights w{{{"S4", "S5"}, 0.75}, {{"S4", "S6"}, 0.25}};
    return build_transition_matrix(w, cat);
}

BifurcationWeights uniform_weights(const VesselCatalog& cat) {
    BifurcationWeights w;
    for (const auto& id : cat.state_ids()) {
        const auto& seg = cat.at(id);
        if (seg.downstream.size() < 2) continue;
        for (const auto& d : seg.downstream) w[{id, d}] = 1.0;
    }
    return w;
}

}  // namespace

TEST_CASE("generation expectation") {
    SUBCASE("reference operating point") {
        const auto g = generation_expectation(0.005, 1000.0, 0.2);
        CHECK(g.e_tg_s == doctest::Approx(0.04).epsilon(1e-14));
        CHECK_FALSE(g.sub_one_occupancy);
    }
    SUBCASE("single-carrier limit and rate linearity") {
        // one carrier always inside the segment: E[T_g] equals the dwell time
        CHECK(generation_expectation(1.0, 1.0, 0.2).e_tg_s == doctest::Approx(0.2));
        const double base = generation_expectation(0.01, 500.0, 0.3).e_tg_s;
        CHECK(generation_expectation(0.01, 1000.0, 0.3).e_tg_s ==
              doctest::Approx(0.5 * base));
    }
    SUBCASE("sub-one occupancy flagged, not refused") {
        const auto g = generation_expectation(0.005, 100.0, 0.2);
        CHECK(g.sub_one_occupancy);
        CHECK(g.e_tg_s == doctest::Approx(0.4));
    }
    SUBCASE("invalid inputs") {
        CHECK_THROWS_AS(generation_expectation(0.0, 1000.0, 0.2), Error);
        CHECK_THROWS_AS(generation_expectation(0.005, 0.0, 0.2), Error);
        CHECK_THROWS_AS(generation_expectation(0.005, 1000.0, 0.0), Error);
    }
}

TEST_CASE("expected delay closed form") {
    SUBCASE("direct-only") {
        DelayModel m;
        m.direct_time_s = 7.0;
        m.direct_probability = 0.4;
        CHECK(expected_delay(m) == doctest::Approx(2.8).epsilon(1e-14));
    }
    SUBCASE("hand-evaluated single detour") {
        DelayModel m;
        m.direct_time_s = 5.0;
        m.direct_probability = 0.5;
        m.detours.push_back({"L", 0.5, 10.0});
        // 2.5 + 10 * 0.5 / 0.25 + 5 * 0.5 / 0.5
        CHECK(expected_delay(m) == doctest::Approx(27.5).epsilon(1e-14));
    }
    SUBCASE("divergence at unit loop probability") {
        DelayModel m;
        m.direct_time_s = 5.0;
        m.direct_probability = 0.5;
        m.detours.push_back({"L", 1.0, 10.0});
        CHECK_THROWS_AS(expected_delay(m), NumericError);
    }
    SUBCASE("model validation") {
        DelayModel m;
        m.direct_time_s = 5.0;
        m.direct_probability = 0.0;
        CHECK_THROWS_AS(m.check(), Error);
        m.direct_probability = 0.5;
        m.detours.push_back({"L", -0.1, 10.0});
        CHECK_THROWS_AS(m.check(), Error);
    }
}

TEST_CASE("average PAoI") {
    CHECK(average_paoi(0.04, 36.0, 0.0) == doctest::Approx(36.04));
    CHECK(average_paoi(0.04, 36.0, 0.5) == doctest::Approx(36.08));
    SUBCASE("flat under small losses when delay dominates") {
        const double base = average_paoi(0.04, 36.0, 0.0);
        for (double p = 0.0; p <= 0.1; p += 0.01) {
            CHECK(std::abs(average_paoi(0.04, 36.0, p) - base) / base < 0.01);
        }
    }
    SUBCASE("strictly increasing in the loss probability") {
        double prev = average_paoi(1.0, 2.0, 0.0);
        for (double p = 0.05; p < 1.0; p += 0.05) {
            const double cur = average_paoi(1.0, 2.0, p);
            CHECK(cur > prev);
            prev = cur;
        }
    }
    CHECK_THROWS_AS(average_paoi(0.04, 36.0, 1.0), Error);
    CHECK_THROWS_AS(average_paoi(-0.1, 36.0, 0.0), Error);
}

TEST_CASE("delay model from the minimal circulation") {
    const auto cat = mini_catalog();
    const auto tm = mini_matrix(cat);

    SUBCASE("gateway at a capillary") {
        const auto m = build_delay_model(tm, cat, "S5", "S6", "S3");
        // S5,S7,S1,S2,S3,S4 at one second each, arriving at S6
        CHECK(m.direct_time_s == doctest::Approx(6.0).epsilon(1e-12));
        CHECK(m.direct_probability == doctest::Approx(0.25));
        // both circuits are the infection and gateway circuits: no detours
        CHECK(m.detours.empty());
        CHECK(expected_delay(m) == doctest::Approx(1.5));
    }
    SUBCASE("gateway at the heart has no detours and unit probability") {
        const auto m = build_delay_model(tm, cat, "S5", "S3", "S3");
        CHECK(m.direct_time_s == doctest::Approx(4.0).epsilon(1e-12));
        CHECK(m.direct_probability == 1.0);
        CHECK(m.detours.empty());
    }
    SUBCASE("placement validation") {
        CHECK_THROWS_AS(build_delay_model(tm, cat, "S4", "S6", "S3"), Error);
        CHECK_THROWS_AS(build_delay_model(tm, cat, "S5", "S4", "S3"), Error);
        CHECK_THROWS_AS(build_delay_model(tm, cat, "S5", "S5", "S3"), Error);
    }
}

TEST_CASE("delay model on the default circulation") {
    const auto cat = load_catalog(default_catalog_path());
    const auto tm = build_transition_matrix(uniform_weights(cat), cat);
    const auto m = build_delay_model(tm, cat, "S42", "S13", "S3");
    CHECK(m.detours.size() == 13);  // 15 circuits minus infection and gateway
    CHECK(m.direct_probability > 0.0);
    CHECK(m.direct_probability < 1.0);
    CHECK(m.direct_time_s > 5.0);
    CHECK(m.direct_time_s < 60.0);
    const double e_td = expected_delay(m);
    CHECK(e_td > m.direct_time_s * m.direct_probability);
}

TEST_CASE("transition sampling matches row probabilities") {
    const auto cat = mini_catalog();
    const auto tm = mini_matrix(cat);
    const auto from = tm.index_of("S4");
    CHECK(tm.states[sample_transition(tm, from, 0.0)] == "S5");
    CHECK(tm.states[sample_transition(tm, from, 0.74)] == "S5");
    CHECK(tm.states[sample_transition(tm, from, 0.76)] == "S6");
    CHECK(tm.states[sample_transition(tm, from, 1.0 - 1e-16)] == "S6");
}

TEST_CASE("detour counts follow the geometric distribution") {
    const auto cat = mini_catalog();
    const auto tm = mini_matrix(cat);
    const auto heart = tm.index_of("S3");
    const auto infection_loop = tm.index_of("S5");
    const auto gateway = tm.index_of("S6");

    const int walks = 100000;
    const double p_detour = 0.75;
    std::vector<int> counts(8, 0);
    CounterRng rng(2024);
    for (int w = 0; w < walks; ++w) {
        auto r = rng.split(w);
        std::size_t s = heart;
        int k = 0;
        while (true) {
            s = sample_transition(tm, s, r.next_double());
            if (s == gateway) break;
            if (s == infection_loop) ++k;
        }
        if (k < static_cast<int>(counts.size())) ++counts[k];
    }
    for (int k = 0; k < 6; ++k) {
        const double p = std::pow(p_detour, k) * (1.0 - p_detour);
        const double sigma = std::sqrt(p * (1.0 - p) / walks);
        CHECK(std::abs(static_cast<double>(counts[k]) / walks - p) < 3.0 * sigma);
    }
}

TEST_CASE("sawtooth oracle on a deterministic two-segment ring") {
    const std::string text =
        "state_id,name,kind,length_m,radius_m,thickness_m,speed_mps,downstream\n"
        "S1,CA,capillary,0.1,0.0005,0.0001,0.1,S2\n"
        "S2,CB,capillary,0.1,0.0005,0.0001,0.1,S1\n";
    const auto cat = load_catalog_string(text);
    const auto tm = build_transition_matrix({}, cat);

    AoiConfig cfg;
    cfg.infection_id = "S1";
    cfg.gateway_id = "S2";
    cfg.n_sensors = 1;
    cfg.horizon_s = 100.0;
    cfg.min_peaks = 10;
    cfg.seed = 5;
    const auto run = simulate_aoi(tm, cat, cfg);
    REQUIRE(run.peaks_s.size() >= 10);
    // generation every 2 s, delivery 1 s later: every peak equals t_g + t_d
    for (double peak : run.peaks_s) CHECK(peak == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(run.ci95_s == doctest::Approx(0.0));
}

TEST_CASE("oracle mean matches the closed form on a detour-free placement") {
    const auto cat = mini_catalog();
    const auto tm = mini_matrix(cat);
    // gateway at the heart: deterministic 4 s delivery, renewal generation
    const auto nu = stationary_distribution(tm);
    const auto gen = generation_expectation(nu.at("S5"), 1.0, 1.0);
    const auto delay = build_delay_model(tm, cat, "S5", "S3", "S3");
    const double closed = average_paoi(gen.e_tg_s, expected_delay(delay), 0.0);
    CHECK(closed == doctest::Approx(12.0).epsilon(1e-12));

    AoiConfig cfg;
    cfg.infection_id = "S5";
    cfg.gateway_id = "S3";
    cfg.n_sensors = 1;
    cfg.horizon_s = 5000.0;
    cfg.seed = 17;
    const auto run = simulate_aoi(tm, cat, cfg);
    CHECK(std::abs(run.mean_peak_s - closed) < 3.0 * run.ci95_s / 1.96 + 0.05 * closed);
}

TEST_CASE("oracle determinism and loss sensitivity") {
    const auto cat = mini_catalog();
    const auto tm = mini_matrix(cat);
    AoiConfig cfg;
    cfg.infection_id = "S5";
    cfg.gateway_id = "S3";
    cfg.n_sensors = 20;
    cfg.horizon_s = 300.0;
    cfg.seed = 3;

    const auto a = simulate_aoi(tm, cat, cfg);
    const auto b = simulate_aoi(tm, cat, cfg);
    REQUIRE(a.peaks_s.size() == b.peaks_s.size());
    for (std::size_t k = 0; k < a.peaks_s.size(); ++k) CHECK(a.peaks_s[k] == b.peaks_s[k]);

    AoiConfig lossy = cfg;
    lossy.p_loss = 0.8;
    const auto c = simulate_aoi(tm, cat, lossy);
    CHECK(c.mean_peak_s > a.mean_peak_s);
}

TEST_CASE("fleet generation rate scales with the fleet size") {
    const auto cat = mini_catalog();
    const auto tm = mini_matrix(cat);
    AoiConfig cfg;
    cfg.infection_id = "S5";
    cfg.gateway_id = "S3";
    cfg.horizon_s = 400.0;
    cfg.seed = 8;
    cfg.record_sawtooth = false;

    cfg.n_sensors = 100;
    const auto small = simulate_aoi(tm, cat, cfg);
    cfg.n_sensors = 200;
    const auto large = simulate_aoi(tm, cat, cfg);

    const auto mean_intergen = [](const AoiResult& r) {
        return (r.t_last_gen_s - r.t_first_gen_s) / static_cast<double>(r.n_generated - 1);
    };
    const double ratio = mean_intergen(small) / mean_intergen(large);
    // renewal statistics: relative sigma of each mean is about 1/sqrt(n)
    const double sigma = ratio * 2.0 / std::sqrt(static_cast<double>(small.n_generated));
    CHECK(std::abs(ratio - 2.0) < 3.0 * sigma);
}

TEST_CASE("occupancy weights the stationary law by dwell time") {
    SUBCASE("uniform dwell leaves the per-step frequencies unchanged") {
        const auto cat = mini_catalog();
        const auto tm = mini_matrix(cat);
        const auto nu = stationary_distribution(tm);
        for (const auto& id : cat.state_ids()) {
            CHECK(occupancy(nu, cat, id) == doctest::Approx(nu.at(id)).epsilon(1e-12));
        }
    }
    SUBCASE("a slow segment gathers extra occupancy") {
        // halve the speed of S5: its dwell doubles to 2 s, everything else 1 s
        const std::string text =
            "state_id,name,kind,length_m,radius_m,thickness_m,speed_mps,downstream\n"
            "S1,RH,heart-chamber,0.1,0.01,0.001,0.1,S2\n"
            "S2,LU,lung,0.1,0.01,0.001,0.1,S3\n"
            "S3,LH,heart-chamber,0.1,0.01,0.001,0.1,S4\n"
            "S4,A,artery,0.1,0.005,0.0005,0.1,S5;S6\n"
            "S5,C1,capillary,0.1,0.0005,0.0001,0.05,S7\n"
            "S6,C2,capillary,0.1,0.0005,0.0001,0.1,S7\n"
            "S7,V,vein,0.1,0.004,0.0003,0.1,S1\n";
        const auto cat = load_catalog_string(text);
        const auto tm = mini_matrix(cat);
        const auto nu = stationary_distribution(tm);
        // per-step nu_S5 = 0.75/6; dwell mass = (5.25 + 1.5)/6 = 1.125
        CHECK(occupancy(nu, cat, "S5") == doctest::Approx(0.25 / 1.125).epsilon(1e-9));

        // the occupancy-based closed form matches the fleet oracle's
        // inter-generation time
        AoiConfig cfg;
        cfg.infection_id = "S5";
        cfg.gateway_id = "S3";
        cfg.n_sensors = 100;
        cfg.horizon_s = 400.0;
        cfg.seed = 12;
        cfg.record_sawtooth = false;
        const auto run = simulate_aoi(tm, cat, cfg);
        const double empirical = (run.t_last_gen_s - run.t_first_gen_s) /
                                 static_cast<double>(run.n_generated - 1);
        const double closed =
            generation_expectation(occupancy(nu, cat, "S5"), 100.0,
                                   segment_travel_time(cat.at("S5")))
                .e_tg_s;
        CHECK(empirical == doctest::Approx(closed).epsilon(0.05));
    }
}

TEST_CASE("insufficient peaks raise an error") {
    const auto cat = mini_catalog();
    const auto tm = mini_matrix(cat);
    AoiConfig cfg;
    cfg.infection_id = "S5";
    cfg.gateway_id = "S3";
    cfg.n_sensors = 1;
    cfg.horizon_s = 30.0;  // a handful of cycles at most
    cfg.min_peaks = 100;
    CHECK_THROWS_AS(simulate_aoi(tm, cat, cfg), NumericError);
}

TEST_CASE("report and sawtooth CSV export") {
    const auto cat = mini_catalog();
    const auto tm = mini_matrix(cat);
    AoiConfig cfg;
    cfg.infection_id = "S5";
    cfg.gateway_id = "S3";
    cfg.n_sensors = 5;
    cfg.horizon_s = 500.0;
    cfg.seed = 4;
    const auto run = simulate_aoi(tm, cat, cfg);

    PaoiReport report;
    report.scenario = "mini";
    report.e_tg_s = 1.6;
    report.e_td_s = 4.0;
    report.paoi_closed_s = 5.6;
    report.paoi_oracle_mean_s = run.mean_peak_s;
    report.paoi_oracle_ci95_s = run.ci95_s;
    report.n_peaks = run.peaks_s.size();
    report.seed = cfg.seed;

    const auto dir = std::filesystem::temp_directory_path();
    save_paoi_reports({report}, dir / "paoi_report.csv");
    save_sawtooth(run, dir / "sawtooth.csv");
    CHECK(std::filesystem::exists(dir / "paoi_report.csv"));
    CHECK(std::filesystem::exists(dir / "sawtooth.csv"));
    std::filesystem::remove(dir / "paoi_report.csv");
    std::filesystem::remove(dir / "sawtooth.csv");
}
