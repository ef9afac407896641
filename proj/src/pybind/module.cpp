#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>

#include "bloodnet/aoi.hpp"
#include "bloodnet/circuit.hpp"
#include "bloodnet/common.hpp"
#include "bloodnet/markov.hpp"
#include "bloodnet/scenario.hpp"
#include "bloodnet/terahertz.hpp"
#include "bloodnet/ultrasonic.hpp"
#include "bloodnet/vascular.hpp"

namespace py = pybind11;
using namespace bloodnet;

namespace {

py::dict report_to_dict(const PaoiReport& r) {
    py::dict out;
    out["scenario"] = r.scenario;
    out["e_tg_s"] = r.e_tg_s;
    out["e_td_s"] = r.e_td_s;
    out["p_loss"] = r.p_loss;
    out["paoi_closed_s"] = r.paoi_closed_s;
    out["paoi_oracle_mean_s"] = r.paoi_oracle_mean_s;
    out["paoi_oracle_ci95_s"] = r.paoi_oracle_ci95_s;
    out["n_peaks"] = r.n_peaks;
    out["seed"] = r.seed;
    return out;
}

}  // namespace

PYBIND11_MODULE(_bloodnet, m) {
    m.doc() = "Average peak-age-of-information analytics for an intra-body "
              "nanosensor network";

    // translators run newest-first, so the base class must be registered first
    py::register_exception<Error>(m, "ModelError", PyExc_RuntimeError);
    py::register_exception<ParseError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    // ------------------------------------------------------------- vascular
    py::class_<VesselCatalog>(m, "Catalog")
        .def("state_ids", &VesselCatalog::state_ids)
        .def("travel_time_s",
             [](const VesselCatalog& c, const std::string& id) {
                 return segment_travel_time(c.at(id));
             },
             py::arg("state_id"));
    m.def("load_catalog",
          [](const std::filesystem::path& p) { return load_catalog(p); },
          py::arg("path"));

    // --------------------------------------------------------------- markov
    py::class_<TransitionMatrix>(m, "TransitionMatrix")
        .def_readonly("states", &TransitionMatrix::states)
        .def("prob", &TransitionMatrix::prob, py::arg("from_state"), py::arg("to_state"));
    m.def("load_matrix", &load_matrix, py::arg("path"));
    m.def("save_matrix", &save_matrix, py::arg("matrix"), py::arg("path"));
    m.def("build_transition_matrix",
          [](const std::map<std::pair<std::string, std::string>, double>& weights,
             const VesselCatalog& catalog) {
              return build_transition_matrix(BifurcationWeights(weights.begin(),
                                                                weights.end()),
                                             catalog);
          },
          py::arg("weights"), py::arg("catalog"));
    m.def("stationary_distribution",
          [](const TransitionMatrix& pi) {
              const auto nu = stationary_distribution(pi);
              std::map<std::string, double> out;
              for (std::size_t i = 0; i < nu.states.size(); ++i) {
                  out[nu.states[i]] = nu.nu(static_cast<Eigen::Index>(i));
              }
              return out;
          },
          py::arg("matrix"));
    m.def("occupancy",
          [](const TransitionMatrix& pi, const VesselCatalog& catalog,
             const std::string& id) {
              return occupancy(stationary_distribution(pi), catalog, id);
          },
          py::arg("matrix"), py::arg("catalog"), py::arg("state_id"),
          "Time-weighted probability of finding a carrier inside the segment.");
    m.def("enumerate_loops",
          [](const TransitionMatrix& pi, const VesselCatalog& catalog,
             const std::string& heart_state) {
              py::list out;
              for (const auto& loop : enumerate_loops(pi, catalog, heart_state)) {
                  py::dict d;
                  d["capillary"] = loop.capillary;
                  d["path"] = loop.representative_path;
                  d["probability"] = loop.probability;
                  d["travel_time_s"] = loop.travel_time_s;
                  out.append(d);
              }
              return out;
          },
          py::arg("matrix"), py::arg("catalog"), py::arg("heart_state") = "S3");
    m.def("first_passage_probability", &first_passage_probability, py::arg("p_gateway"),
          py::arg("p_infection"));

    // ------------------------------------------------------------------ aoi
    m.def("generation_expectation",
          [](double nu_i, double n_sensors, double segment_time_s) {
              const auto g = generation_expectation(nu_i, n_sensors, segment_time_s);
              py::dict out;
              out["e_tg_s"] = g.e_tg_s;
              out["expected_occupancy"] = g.expected_occupancy;
              out["sub_one_occupancy"] = g.sub_one_occupancy;
              return out;
          },
          py::arg("nu_i"), py::arg("n_sensors"), py::arg("segment_time_s"));
    m.def("expected_delay",
          [](const TransitionMatrix& pi, const VesselCatalog& catalog,
             const std::string& infection, const std::string& gateway,
             const std::string& heart_state) {
              return expected_delay(
                  build_delay_model(pi, catalog, infection, gateway, heart_state));
          },
          py::arg("matrix"), py::arg("catalog"), py::arg("infection"), py::arg("gateway"),
          py::arg("heart_state") = "S3");
    m.def("average_paoi", &average_paoi, py::arg("e_tg_s"), py::arg("e_td_s"),
          py::arg("p_loss"));
    m.def("simulate_aoi",
          [](const TransitionMatrix& pi, const VesselCatalog& catalog,
             const std::string& infection, const std::string& gateway, double p_loss,
             std::size_t n_sensors, double horizon_s, std::size_t min_peaks,
             std::uint64_t seed) {
              AoiConfig cfg;
              cfg.infection_id = infection;
              cfg.gateway_id = gateway;
              cfg.p_loss = p_loss;
              cfg.n_sensors = n_sensors;
              cfg.horizon_s = horizon_s;
              cfg.min_peaks = min_peaks;
              cfg.seed = seed;
              const auto run = simulate_aoi(pi, catalog, cfg);
              py::dict out;
              out["mean_peak_s"] = run.mean_peak_s;
              out["ci95_s"] = run.ci95_s;
              out["peaks_s"] = run.peaks_s;
              out["sawtooth"] = run.sawtooth;
              out["n_generated"] = run.n_generated;
              out["seed"] = run.seed;
              return out;
          },
          py::arg("matrix"), py::arg("catalog"), py::arg("infection"), py::arg("gateway"),
          py::arg("p_loss") = 0.0, py::arg("n_sensors") = 1000,
          py::arg("horizon_s") = 4000.0, py::arg("min_peaks") = 100, py::arg("seed") = 1);

    // ------------------------------------------------------------ ultrasonic
    py::class_<FlybyGeometry>(m, "FlybyGeometry")
        .def(py::init<>())
        .def_readwrite("d_min_m", &FlybyGeometry::d_min_m)
        .def_readwrite("speed_mps", &FlybyGeometry::speed_mps)
        .def_readwrite("f_c_hz", &FlybyGeometry::f_c_hz)
        .def_readwrite("c_u_mps", &FlybyGeometry::c_u_mps)
        .def_readwrite("t_in_s", &FlybyGeometry::t_in_s)
        .def_readwrite("t_out_s", &FlybyGeometry::t_out_s);
    m.def("doppler", &doppler, py::arg("geometry"), py::arg("t"));
    m.def("rotated_bpsk_ber", &rotated_bpsk_ber, py::arg("eb_n0_linear"),
          py::arg("delta_phi_rad"));
    m.def("simulate_flyby",
          [](const FlybyGeometry& geometry, double eb_n0_db, double dt_s,
             std::size_t mc_symbols, std::uint64_t seed) {
              FlybyConfig cfg;
              cfg.eb_n0_db = eb_n0_db;
              cfg.dt_s = dt_s;
              cfg.mc_symbols = mc_symbols;
              cfg.seed = seed;
              py::list out;
              for (const auto& s : simulate_flyby(geometry, cfg)) {
                  py::dict d;
                  d["t_s"] = s.t_s;
                  d["delta_phi_rad"] = s.delta_phi_rad;
                  d["ber"] = s.ber;
                  d["ber_closed"] = s.ber_closed;
                  out.append(d);
              }
              return out;
          },
          py::arg("geometry"), py::arg("eb_n0_db") = 10.0, py::arg("dt_s") = 1e-4,
          py::arg("mc_symbols") = 0, py::arg("seed") = 1);
    m.def("cir_loss_delay",
          [](const std::filesystem::path& path) {
              const auto cir = load_cir(path);
              py::dict out;
              out["distance_m"] = cir.distance_m;
              out["loss_db"] = cir_loss_db(cir);
              out["delay_s"] = cir_delay(cir);
              return out;
          },
          py::arg("path"), "Loss and delay moments of one measured impulse response.");

    // ------------------------------------------------------------- terahertz
    py::class_<TissueStack>(m, "TissueStack")
        .def(py::init<>())
        .def_readwrite("thickness_skin_m", &TissueStack::thickness_skin_m)
        .def_readwrite("thickness_tissue_m", &TissueStack::thickness_tissue_m)
        .def_readwrite("thickness_vessel_m", &TissueStack::thickness_vessel_m);
    m.def("load_tissue_stack", &load_tissue_stack, py::arg("path"));
    m.def("coherence_time", &coherence_time, py::arg("v_mps"), py::arg("f_c_hz"),
          py::arg("c_mps") = k_speed_of_light_mps);
    m.def("packet_error_rate", &packet_error_rate, py::arg("ber"), py::arg("bits"));
    m.def("ber_vs_bandwidth",
          [](const TissueStack& stack, const std::vector<double>& grid_hz, double f_c_hz,
             double packet_bits) {
              ThzLinkConfig link;
              link.f_c_hz = f_c_hz;
              link.packet_bits = packet_bits;
              py::list out;
              for (const auto& p : ber_vs_bandwidth(link, stack, grid_hz)) {
                  py::dict d;
                  d["bandwidth_hz"] = p.bandwidth_hz;
                  d["block_count"] = p.block_count;
                  d["ber"] = p.ber;
                  d["per"] = p.per;
                  out.append(d);
              }
              return out;
          },
          py::arg("stack"), py::arg("bandwidth_grid_hz"), py::arg("f_c_hz") = 0.5e12,
          py::arg("packet_bits") = 65536.0);
    m.def("sync_detect",
          [](double t0_s, double dt_s, const std::vector<double>& samples) {
              SampledTrace trace;
              trace.t0_s = t0_s;
              trace.dt_s = dt_s;
              trace.samples = samples;
              const auto det = sync_detect(trace, SyncPipeline{});
              py::dict out;
              out["detected"] = det.detected;
              out["t_apex_s"] = det.t_apex_s;
              return out;
          },
          py::arg("t0_s"), py::arg("dt_s"), py::arg("samples"));
    m.def("synthesize_backscatter",
          [](double t_below_s, double t_start_s, double t_stop_s, double snr_db,
             std::uint64_t seed) {
              BackscatterSpec spec;
              spec.t_below_s = t_below_s;
              spec.t_start_s = t_start_s;
              spec.t_stop_s = t_stop_s;
              spec.snr_db = snr_db;
              spec.seed = seed;
              const auto trace = synthesize_backscatter(SyncPipeline{}, spec);
              return py::make_tuple(trace.t0_s, trace.dt_s, trace.samples);
          },
          py::arg("t_below_s"), py::arg("t_start_s"), py::arg("t_stop_s"),
          py::arg("snr_db") = 10.0, py::arg("seed") = 1);

    // -------------------------------------------------------------- scenario
    m.def("validate_config",
          [](const std::filesystem::path& path) {
              std::vector<std::pair<std::string, std::string>> out;
              for (const auto& d : validate_scenario(KeyValueConfig::load(path))) {
                  out.emplace_back(d.key, d.message);
              }
              return out;
          },
          py::arg("path"), "Diagnostics of a scenario config; empty means valid.");
    m.def("run_scenario",
          [](const std::filesystem::path& path, const std::filesystem::path& out_dir,
             std::optional<std::uint64_t> seed) {
              auto config = KeyValueConfig::load(path);
              if (seed) config.values["seed"] = std::to_string(*seed);
              const auto result = run_scenario(resolve_scenario(config), out_dir);
              auto report = report_to_dict(result.report);
              report["channel_ber"] = result.channel_ber;
              return report;
          },
          py::arg("path"), py::arg("out_dir"), py::arg("seed") = std::nullopt);
    m.def("run_sweep",
          [](const std::filesystem::path& path, const std::filesystem::path& out_dir,
             int jobs) {
              py::list out;
              for (const auto& p :
                   run_sweep(resolve_scenario(KeyValueConfig::load(path)), out_dir, jobs)) {
                  auto d = report_to_dict(p.report);
                  d["sweep_value"] = p.value;
                  d["channel_ber"] = p.channel_ber;
                  out.append(d);
              }
              return out;
          },
          py::arg("path"), py::arg("out_dir"), py::arg("jobs") = 1);
}
