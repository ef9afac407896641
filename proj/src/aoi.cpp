#include "bloodnet/aoi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bloodnet/common.hpp"
#include "bloodnet/csv.hpp"

namespace bloodnet {

GenerationResult generation_expectation(double nu_i, double n_sensors,
                                        double segment_time_s) {
    if (nu_i <= 0.0 || nu_i > 1.0) throw Error("stationary probability must lie in (0, 1]");
    if (n_sensors < 1.0) throw Error("fleet needs at least one carrier");
    if (segment_time_s <= 0.0) throw Error("segment travel time must be positive");
    GenerationResult result;
    result.expected_occupancy = nu_i * n_sensors;
    result.sub_one_occupancy = result.expected_occupancy < 1.0;
    result.e_tg_s = segment_time_s / result.expected_occupancy;
    return result;
}

double occupancy(const StationaryVector& nu, const VesselCatalog& catalog,
                 const std::string& id) {
    double total = 0.0;
    for (std::size_t i = 0; i < nu.states.size(); ++i) {
        total += nu.nu(static_cast<Eigen::Index>(i)) *
                 segment_travel_time(catalog.at(nu.states[i]));
    }
    if (total <= 0.0) throw Error("stationary dwell-time mass is not positive");
    return nu.at(id) * segment_travel_time(catalog.at(id)) / total;
}

void DelayModel::check() const {
    if (direct_probability <= 0.0 || direct_probability > 1.0) {
        throw Error("direct-path probability must lie in (0, 1]");
    }
    if (direct_time_s < 0.0) throw Error("direct-path time must be non-negative");
    for (const auto& loop : detours) {
        if (loop.probability < 0.0 || loop.probability > 1.0) {
            throw Error("detour probability outside [0, 1]: " + loop.id);
        }
        if (loop.travel_time_s <= 0.0) {
            throw Error("detour travel time must be positive: " + loop.id);
        }
    }
}

double expected_delay(const DelayModel& model) {
    model.check();
    double total = model.direct_time_s * model.direct_probability;
    for (const auto& loop : model.detours) {
        if (loop.probability >= 1.0) {
            throw NumericError("detour " + loop.id +
                               " has probability 1: the delay series diverges");
        }
        const double p = loop.probability;
        total += loop.travel_time_s * p / ((1.0 - p) * (1.0 - p)) +
                 model.direct_time_s * p / (1.0 - p);
    }
    return total;
}

namespace {

/// Follow the unique downstream chain from `start` (inclusive) to `stop`
/// (exclusive), summing travel times.
double chain_time_to(const VesselCatalog& catalog, const std::string& start,
                     const std::string& stop) {
    double total = 0.0;
    std::string cur = start;
    for (std::size_t hops = 0; hops <= catalog.segments.size(); ++hops) {
        if (cur == stop) return total;
        const auto& seg = catalog.at(cur);
        if (seg.downstream.size() != 1) {
            throw Error("no deterministic return path from " + start + ": " + cur +
                        " has " + std::to_string(seg.downstream.size()) + " successors");
        }
        total += segment_travel_time(seg);
        cur = seg.downstream.front();
    }
    throw Error("return path from " + start + " never reaches " + stop);
}

}  // namespace

DelayModel build_delay_model(const TransitionMatrix& pi, const VesselCatalog& catalog,
                             const std::string& infection_id, const std::string& gateway_id,
                             const std::string& heart_state) {
    if (infection_id == gateway_id) throw Error("infection and gateway must differ");
    if (catalog.at(infection_id).kind != VesselKind::Capillary) {
        throw Error("infection site must be a capillary: " + infection_id);
    }

    DelayModel model;
    if (gateway_id == heart_state) {
        // the heart lies on every circuit, so the sample is delivered on the
        // first return with no possible detour
        model.direct_time_s = chain_time_to(catalog, infection_id, heart_state);
        model.direct_probability = 1.0;
        return model;
    }
    if (catalog.at(gateway_id).kind != VesselKind::Capillary) {
        throw Error("gateway must sit at a capillary or at the heart: " + gateway_id);
    }

    const auto loops = enumerate_loops(pi, catalog, heart_state);
    const CirculationLoop* gateway_loop = nullptr;
    for (const auto& loop : loops) {
        if (loop.capillary == gateway_id) gateway_loop = &loop;
    }
    if (gateway_loop == nullptr) throw Error("gateway capillary has no circuit: " + gateway_id);

    // direct route: venous return to the heart, then the gateway's arterial
    // path; times count every segment from the infection (inclusive) to the
    // gateway (exclusive), matching arrival-to-arrival elapsed time
    double direct = chain_time_to(catalog, infection_id, heart_state);
    const auto& path = gateway_loop->representative_path;  // heart ... gateway
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        direct += segment_travel_time(catalog.at(path[i]));
    }
    model.direct_time_s = direct;
    model.direct_probability = path_probability(pi, path);

    for (const auto& loop : loops) {
        if (loop.capillary == infection_id || loop.capillary == gateway_id) continue;
        model.detours.push_back({loop.capillary, loop.probability, loop.travel_time_s});
    }
    model.check();
    return model;
}

double average_paoi(double e_tg_s, double e_td_s, double p_loss) {
    if (e_tg_s < 0.0 || e_td_s < 0.0) throw Error("expected times must be non-negative");
    if (p_loss < 0.0 || p_loss >= 1.0) throw Error("loss probability must lie in [0, 1)");
    return e_tg_s / (1.0 - p_loss) + e_td_s;
}

std::size_t sample_transition(const TransitionMatrix& pi, std::size_t from, double u) {
    const auto n = static_cast<std::size_t>(pi.pi.cols());
    if (from >= n) throw Error("state index out of range");
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        acc += pi.pi(static_cast<Eigen::Index>(from), static_cast<Eigen::Index>(j));
        if (u < acc) return j;
    }
    // guard against accumulated rounding at u close to 1
    for (std::size_t j = n; j-- > 0;) {
        if (pi.pi(static_cast<Eigen::Index>(from), static_cast<Eigen::Index>(j)) > 0.0) {
            return j;
        }
    }
    throw NumericError("transition row is all zero");
}

AoiResult simulate_aoi(const TransitionMatrix& pi, const VesselCatalog& catalog,
                       const AoiConfig& config) {
    if (config.horizon_s <= 0.0) throw Error("simulation horizon must be positive");
    if (config.p_loss < 0.0 || config.p_loss >= 1.0) {
        throw Error("loss probability must lie in [0, 1)");
    }
    if (config.n_sensors < 1) throw Error("fleet needs at least one carrier");
    if (config.infection_id == config.gateway_id) {
        throw Error("infection and gateway must differ");
    }
    const std::size_t infection = pi.index_of(config.infection_id);
    const std::size_t gateway = pi.index_of(config.gateway_id);

    const auto nu = stationary_distribution(pi);
    std::vector<double> dwell(pi.states.size());
    for (std::size_t i = 0; i < pi.states.size(); ++i) {
        dwell[i] = segment_travel_time(catalog.at(pi.states[i]));
    }

    struct Delivery {
        double t_del;
        double t_gen;
        bool operator<(const Delivery& o) const { return t_del < o.t_del; }
    };
    std::vector<Delivery> deliveries;

    AoiResult result;
    result.seed = config.seed;
    result.t_first_gen_s = std::numeric_limits<double>::infinity();

    const CounterRng root(config.seed);
    for (std::size_t w = 0; w < config.n_sensors; ++w) {
        CounterRng rng = root.split(w);

        // stationary initial state, uniform residual dwell
        std::size_t s = 0;
        double u = rng.next_double(), acc = 0.0;
        for (std::size_t i = 0; i < pi.states.size(); ++i) {
            acc += nu.nu(static_cast<Eigen::Index>(i));
            if (u < acc) {
                s = i;
                break;
            }
        }
        double t = dwell[s] * rng.next_double();  // exit time of the initial segment

        bool carrying = false;
        double t_gen = 0.0;
        while (t <= config.horizon_s) {
            s = sample_transition(pi, s, rng.next_double());
            // arrival events at time t
            if (s == infection) {
                carrying = true;
                t_gen = t;
                ++result.n_generated;
                result.t_first_gen_s = std::min(result.t_first_gen_s, t);
                result.t_last_gen_s = std::max(result.t_last_gen_s, t);
            } else if (s == gateway && carrying) {
                if (rng.next_double() >= config.p_loss) deliveries.push_back({t, t_gen});
                carrying = false;  // lost packets are dropped, not retransmitted
            }
            t += dwell[s];
        }
    }

    std::sort(deliveries.begin(), deliveries.end());
    bool have_prev = false;
    double prev_gen = 0.0;
    for (const auto& d : deliveries) {
        if (have_prev && d.t_gen <= prev_gen) continue;  // stale update, age keeps growing
        if (have_prev) {
            // peak just before this update: age of the previous sample plus
            // the inter-update interval (the sawtooth triangle identity)
            result.peaks_s.push_back(d.t_del - prev_gen);
            if (config.record_sawtooth) {
                result.sawtooth.emplace_back(d.t_del, d.t_del - prev_gen);
            }
        }
        if (config.record_sawtooth) result.sawtooth.emplace_back(d.t_del, d.t_del - d.t_gen);
        prev_gen = d.t_gen;
        have_prev = true;
    }

    const std::size_t required = std::max<std::size_t>(10, config.min_peaks);
    if (result.peaks_s.size() < required) {
        throw NumericError("horizon too short: only " +
                           std::to_string(result.peaks_s.size()) + " peaks recorded, need " +
                           std::to_string(required));
    }
    double mean = 0.0;
    for (double p : result.peaks_s) mean += p;
    mean /= static_cast<double>(result.peaks_s.size());
    double var = 0.0;
    for (double p : result.peaks_s) var += (p - mean) * (p - mean);
    var /= static_cast<double>(result.peaks_s.size() - 1);
    result.mean_peak_s = mean;
    result.ci95_s = 1.96 * std::sqrt(var / static_cast<double>(result.peaks_s.size()));
    return result;
}

void save_paoi_reports(const std::vector<PaoiReport>& reports,
                       const std::filesystem::path& path) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : reports) {
        rows.push_back({r.scenario, csv::format_double(r.e_tg_s), csv::format_double(r.e_td_s),
                        csv::format_double(r.p_loss), csv::format_double(r.paoi_closed_s),
                        csv::format_double(r.paoi_oracle_mean_s),
                        csv::format_double(r.paoi_oracle_ci95_s), std::to_string(r.n_peaks),
                        std::to_string(r.seed)});
    }
    csv::write_file(path,
                    {"scenario", "E_Tg", "E_Td", "p_loss", "paoi_closed", "paoi_oracle_mean",
                     "paoi_oracle_ci95", "n_peaks", "seed"},
                    rows);
}

void save_sawtooth(const AoiResult& result, const std::filesystem::path& path) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& [t, age] : result.sawtooth) {
        rows.push_back({csv::format_double(t), csv::format_double(age)});
    }
    csv::write_file(path, {"t", "age"}, rows);
}

}  // namespace bloodnet
