#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "bloodnet/markov.hpp"
#include "bloodnet/rng.hpp"
#include "bloodnet/vascular.hpp"

namespace bloodnet {

/// Expected sample generation time at the infection segment: a fleet of N_s
/// carriers visits the segment at rate nu_i N_s / T_i, so E[T_g] = T_i /
/// (nu_i N_s).
struct GenerationResult {
    double e_tg_s = 0.0;
    double expected_occupancy = 0.0;  // nu_i * N_s
    bool sub_one_occupancy = false;   // occupancy below one carrier on average
};

GenerationResult generation_expectation(double nu_i, double n_sensors,
                                        double segment_time_s);

/// Time-weighted occupancy of one segment: nu_i T_i / sum_j nu_j T_j, the
/// probability of finding a carrier inside the segment at a random instant.
/// This, not the per-step visit frequency, is the nu that enters E[T_g].
double occupancy(const StationaryVector& nu, const VesselCatalog& catalog,
                 const std::string& id);

/// One detour circuit a carrier may complete before heading to the gateway.
struct DetourLoop {
    std::string id;              // capillary naming the circuit
    double probability = 0.0;    // entered from the left heart, in [0, 1)
    double travel_time_s = 0.0;  // full circuit time back to the left heart
};

/// Delay decomposition: the direct infection-to-gateway path plus geometric
/// numbers of detour circuits (excluding the infection and gateway circuits).
struct DelayModel {
    double direct_time_s = 0.0;
    double direct_probability = 0.0;  // in (0, 1]
    std::vector<DetourLoop> detours;

    void check() const;
};

/// Series closed form of the expected delay:
///   E[T_d] = T_dir p_dir + sum_c [ T_c p_c/(1-p_c)^2 + T_dir p_c/(1-p_c) ].
double expected_delay(const DelayModel& model);

/// Assemble the delay model from the transition matrix: the direct path runs
/// from the infection capillary through the venous return and the heart down
/// the gateway circuit; detours are all other circuits. The infection must be
/// a capillary; the gateway a capillary or the heart state itself.
DelayModel build_delay_model(const TransitionMatrix& pi, const VesselCatalog& catalog,
                             const std::string& infection_id, const std::string& gateway_id,
                             const std::string& heart_state = "S3");

/// Average peak age of information: Delta = E[T_g]/(1 - p_loss) + E[T_d].
double average_paoi(double e_tg_s, double e_td_s, double p_loss);

/// Draw the next state index from row `from` of the matrix using the uniform
/// variate u in [0, 1).
std::size_t sample_transition(const TransitionMatrix& pi, std::size_t from, double u);

struct AoiConfig {
    std::string infection_id;
    std::string gateway_id;
    double p_loss = 0.0;
    std::size_t n_sensors = 1000;
    double horizon_s = 0.0;        // must be positive
    std::size_t min_peaks = 100;   // floor for the confidence interval
    std::uint64_t seed = 1;
    bool record_sawtooth = true;
};

/// Outcome of the event-driven fleet walk.
struct AoiResult {
    std::vector<double> peaks_s;                     // recorded PAoI values
    std::vector<std::pair<double, double>> sawtooth; // (t, age) at each update
    double mean_peak_s = 0.0;
    double ci95_s = 0.0;          // normal-approximation half width
    std::size_t n_generated = 0;  // fleet-wide sample generations
    double t_first_gen_s = 0.0;
    double t_last_gen_s = 0.0;
    std::uint64_t seed = 0;
};

/// Monte Carlo oracle: N_s independent carriers walk the chain (stationary
/// initial states, deterministic per-segment dwell times). A carrier arriving
/// at the infection segment picks up a fresh sample; a gateway arrival
/// delivers it with probability 1 - p_loss or drops it. The monitor applies
/// only updates fresher than the last one; peaks follow the sawtooth
/// construction. Deterministic per seed.
AoiResult simulate_aoi(const TransitionMatrix& pi, const VesselCatalog& catalog,
                       const AoiConfig& config);

struct PaoiReport {
    std::string scenario;
    double e_tg_s = 0.0;
    double e_td_s = 0.0;
    double p_loss = 0.0;
    double paoi_closed_s = 0.0;
    double paoi_oracle_mean_s = 0.0;
    double paoi_oracle_ci95_s = 0.0;
    std::size_t n_peaks = 0;
    std::uint64_t seed = 0;
};

/// CSV schema:
/// scenario,E_Tg,E_Td,p_loss,paoi_closed,paoi_oracle_mean,paoi_oracle_ci95,n_peaks,seed
void save_paoi_reports(const std::vector<PaoiReport>& reports,
                       const std::filesystem::path& path);

/// CSV schema: t,age
void save_sawtooth(const AoiResult& result, const std::filesystem::path& path);

}  // namespace bloodnet
