#include "bloodnet/terahertz.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>

#include "bloodnet/common.hpp"
#include "bloodnet/csv.hpp"

namespace bloodnet {

void TissueStack::check() const {
    const double thick[] = {thickness_skin_m, thickness_tissue_m, thickness_vessel_m};
    const double mu[] = {mu_skin_per_m, mu_tissue_per_m, mu_vessel_per_m};
    const double n[] = {n_skin, n_tissue, n_vessel};
    for (double v : thick) {
        if (!(v > 0.0)) throw Error("tissue layer thickness must be positive");
    }
    for (double v : mu) {
        if (v < 0.0) throw Error("tissue absorption coefficient must be non-negative");
    }
    for (double v : n) {
        if (!(v >= 1.0)) throw Error("refractive index must be at least 1");
    }
}

TissueStack load_tissue_stack(const std::filesystem::path& path) {
    const auto table = csv::read_file(path);
    const auto c_layer = table.column("layer");
    const auto c_thick = table.column("thickness_m");
    const auto c_mu = table.column("mu_per_m");
    const auto c_n = table.column("refractive_index");
    TissueStack stack;
    std::map<std::string, int> seen;
    for (const auto& row : table.rows) {
        const auto& name = row[c_layer];
        double thick, mu, n;
        try {
            thick = std::stod(row[c_thick]);
            mu = std::stod(row[c_mu]);
            n = std::stod(row[c_n]);
        } catch (const std::exception&) {
            throw ParseError(path.string() + ": malformed numeric field in layer " + name);
        }
        if (++seen[name] > 1) throw ParseError(path.string() + ": duplicate layer " + name);
        if (name == "skin") {
            stack.thickness_skin_m = thick;
            stack.mu_skin_per_m = mu;
            stack.n_skin = n;
        } else if (name == "tissue") {
            stack.thickness_tissue_m = thick;
            stack.mu_tissue_per_m = mu;
            stack.n_tissue = n;
        } else if (name == "vessel") {
            stack.thickness_vessel_m = thick;
            stack.mu_vessel_per_m = mu;
            stack.n_vessel = n;
        } else {
            throw ParseError(path.string() + ": unknown layer " + name);
        }
    }
    if (seen.size() != 3) throw ParseError(path.string() + ": need layers skin, tissue, vessel");
    stack.check();
    return stack;
}

void save_tissue_stack(const TissueStack& stack, const std::filesystem::path& path) {
    stack.check();
    std::vector<std::vector<std::string>> rows;
    const auto row = [](const char* name, double t, double mu, double n) {
        return std::vector<std::string>{name, csv::format_double(t), csv::format_double(mu),
                                        csv::format_double(n)};
    };
    rows.push_back(row("skin", stack.thickness_skin_m, stack.mu_skin_per_m, stack.n_skin));
    rows.push_back(row("tissue", stack.thickness_tissue_m, stack.mu_tissue_per_m, stack.n_tissue));
    rows.push_back(row("vessel", stack.thickness_vessel_m, stack.mu_vessel_per_m, stack.n_vessel));
    csv::write_file(path, {"layer", "thickness_m", "mu_per_m", "refractive_index"}, rows);
}

double path_loss(const TissueStack& stack, double f_c_hz, double x_m, double l_v_m) {
    stack.check();
    if (f_c_hz <= 0.0) throw Error("carrier frequency must be positive");
    if (l_v_m < 0.0 || l_v_m > stack.thickness_vessel_m) {
        throw Error("vessel depth outside the vessel layer");
    }
    // geometric reach from the sensor to the gateway along the stack normal
    const double reach = l_v_m + stack.thickness_tissue_m + stack.thickness_skin_m;
    const double ratio = x_m / reach;
    if (std::abs(ratio) >= 1.0) {
        throw Error("horizontal offset exceeds the geometric reach of the link");
    }
    const double cos_phi = std::sqrt(1.0 - ratio * ratio);

    const double layers[3][3] = {
        {stack.thickness_vessel_m, stack.mu_vessel_per_m, stack.n_vessel},
        {stack.thickness_tissue_m, stack.mu_tissue_per_m, stack.n_tissue},
        {stack.thickness_skin_m, stack.mu_skin_per_m, stack.n_skin},
    };
    double loss = 1.0;
    for (const auto& layer : layers) {
        const double d = layer[0] / cos_phi;
        const double lambda = k_speed_of_light_mps / (f_c_hz * layer[2]);
        const double spreading = lambda / (4.0 * std::numbers::pi * d);
        loss *= std::exp(-layer[1] * d) * spreading * spreading;
    }
    return loss;
}

double coherence_time(double v_mps, double f_c_hz, double c_mps) {
    if (v_mps <= 0.0 || f_c_hz <= 0.0 || c_mps <= 0.0) {
        throw Error("coherence time needs positive speed, carrier, and wave speed");
    }
    const double nu_max = v_mps * f_c_hz / c_mps;
    return std::sqrt(9.0 / (16.0 * std::numbers::pi)) / nu_max;
}

double ThzLinkConfig::noise_power_w() const {
    return sensitivity_w_per_sqrthz * sensitivity_w_per_sqrthz * bandwidth_hz;
}

double ThzLinkConfig::snr_threshold_linear() const {
    return std::pow(10.0, snr_threshold_db / 10.0);
}

void ThzLinkConfig::check() const {
    if (f_c_hz <= 0.0) throw Error("carrier frequency must be positive");
    if (p_tx_w <= 0.0) throw Error("transmit power must be positive");
    if (sensitivity_w_per_sqrthz <= 0.0) throw Error("sensitivity must be positive");
    if (blood_speed_mps <= 0.0) throw Error("blood speed must be positive");
    if (x_max_m <= 0.0) throw Error("communication half-range must be positive");
    if (bits_per_symbol < 1) throw Error("bits per symbol must be at least 1");
    if (bandwidth_hz <= 0.0) throw Error("bandwidth must be positive");
    if (packet_bits < 1.0) throw Error("packet must carry at least one bit");
    if (payload_efficiency <= 0.0) throw Error("payload efficiency must be positive");
}

BlockPlan plan_blocks(const ThzLinkConfig& config) {
    config.check();
    BlockPlan plan;
    plan.coherence_time_s = coherence_time(config.blood_speed_mps, config.f_c_hz);
    const double step = config.blood_speed_mps * plan.coherence_time_s;
    plan.block_count = static_cast<int>(std::floor(2.0 * config.x_max_m / step));
    if (plan.block_count < 1) {
        throw NumericError("communication range shorter than one coherence block");
    }
    for (int m = 1; m <= plan.block_count; ++m) {
        plan.centers_m.push_back((m - 0.5 * (plan.block_count + 1)) * step);
    }
    return plan;
}

double snr_at(const ThzLinkConfig& config, const TissueStack& stack, int block_index,
              double l_v_m) {
    const auto plan = plan_blocks(config);
    if (block_index < 1 || block_index > plan.block_count) {
        throw Error("block index outside the transmission plan");
    }
    const double x = plan.centers_m[block_index - 1];
    return config.p_tx_w * path_loss(stack, config.f_c_hz, x, l_v_m) / config.noise_power_w();
}

OutageResult outage_and_ber(const ThzLinkConfig& config, const TissueStack& stack,
                            int block_index) {
    const double l_max = stack.thickness_vessel_m;
    const double gamma_0 = config.snr_threshold_linear();
    const auto margin = [&](double l_v) {
        return snr_at(config, stack, block_index, l_v) - gamma_0;
    };

    // probe the depth dependence: detect the direction numerically, refuse
    // ambiguous (non-monotone) profiles
    constexpr int k_probes = 65;
    std::vector<double> values(k_probes);
    for (int i = 0; i < k_probes; ++i) {
        values[i] = margin(l_max * i / (k_probes - 1.0));
    }
    const double scale = std::max(std::abs(values.front()), std::abs(values.back()));
    const double tol = 1e-12 * std::max(scale, gamma_0);
    bool rising = false, falling = false;
    for (int i = 1; i < k_probes; ++i) {
        const double d = values[i] - values[i - 1];
        if (d > tol) rising = true;
        if (d < -tol) falling = true;
    }
    if (rising && falling) {
        throw NumericError("SNR is not monotone in the vessel depth; cannot invert");
    }

    OutageResult result;
    if (values.front() >= 0.0 && values.back() >= 0.0) {
        result.p_out = 0.0;
    } else if (values.front() < 0.0 && values.back() < 0.0) {
        result.p_out = 1.0;
    } else {
        // bracketed root: bisect gamma(l_v) = gamma_0 to 1e-12 of the depth
        double lo = 0.0, hi = l_max;
        double f_lo = values.front();
        while (hi - lo > 1e-12 * l_max) {
            const double mid = 0.5 * (lo + hi);
            const double f_mid = margin(mid);
            if ((f_mid >= 0.0) == (f_lo >= 0.0)) {
                lo = mid;
                f_lo = f_mid;
            } else {
                hi = mid;
            }
        }
        const double l_cross = 0.5 * (lo + hi);
        // depth uniform on [0, L_v]: the outage mass sits on the side where
        // the margin is negative
        result.p_out = values.front() < 0.0 ? l_cross / l_max : 1.0 - l_cross / l_max;
    }
    result.ber = result.p_out / config.bits_per_symbol;
    return result;
}

double packet_error_rate(double ber, double bits) {
    if (ber < 0.0 || ber > 1.0) throw Error("BER outside [0, 1]");
    if (bits < 1.0) throw Error("packet must carry at least one bit");
    return 1.0 - std::pow(1.0 - ber, bits);
}

std::vector<BandwidthPoint> ber_vs_bandwidth(const ThzLinkConfig& config,
                                             const TissueStack& stack,
                                             const std::vector<double>& bandwidth_grid_hz) {
    config.check();
    const auto plan = plan_blocks(config);  // geometry independent of bandwidth

    // block visit order: nearest to the gateway first, negative side on ties
    std::vector<int> order(plan.block_count);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        const double xa = std::abs(plan.centers_m[a]);
        const double xb = std::abs(plan.centers_m[b]);
        if (xa != xb) return xa < xb;
        return plan.centers_m[a] < plan.centers_m[b];
    });

    std::vector<BandwidthPoint> sweep;
    for (double bw : bandwidth_grid_hz) {
        if (bw <= 0.0) throw Error("bandwidth must be positive");
        ThzLinkConfig point = config;
        point.bandwidth_hz = bw;
        const double bits_per_block =
            std::floor(bw * plan.coherence_time_s * config.payload_efficiency);
        if (bits_per_block < 1.0) {
            throw NumericError("bandwidth too small: a coherence block carries no payload");
        }
        const int blocks_needed =
            static_cast<int>(std::ceil(config.packet_bits / bits_per_block));
        if (blocks_needed > plan.block_count) {
            throw NumericError("packet does not fit within one gateway pass");
        }
        double weighted = 0.0;
        double remaining = config.packet_bits;
        for (int k = 0; k < blocks_needed; ++k) {
            const double bits = std::min(remaining, bits_per_block);
            weighted += bits * outage_and_ber(point, stack, order[k] + 1).ber;
            remaining -= bits;
        }
        BandwidthPoint out;
        out.bandwidth_hz = bw;
        out.block_count = plan.block_count;
        out.ber = weighted / config.packet_bits;
        out.per = packet_error_rate(out.ber, config.packet_bits);
        sweep.push_back(out);
    }
    return sweep;
}

void save_bandwidth_sweep(const std::vector<BandwidthPoint>& sweep,
                          const std::filesystem::path& path) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& p : sweep) {
        rows.push_back({csv::format_double(p.bandwidth_hz), std::to_string(p.block_count),
                        csv::format_double(p.ber), csv::format_double(p.per)});
    }
    csv::write_file(path, {"bw_hz", "M", "ber", "per"}, rows);
}

int SyncPipeline::matched_taps() const {
    return static_cast<int>(std::llround(pulse_s / sample_s));
}

void SyncPipeline::check() const {
    if (pulse_s <= 0.0 || period_s <= 0.0 || sample_s <= 0.0) {
        throw Error("pulse, period, and sample times must be positive");
    }
    if (period_s < pulse_s) throw Error("pulse period shorter than the pulse");
    const int taps = matched_taps();
    if (taps < 1 || std::abs(taps * sample_s - pulse_s) > 1e-6 * pulse_s) {
        throw Error("sample time must divide the pulse duration");
    }
    if (threshold <= 0.0 || threshold >= 1.0) throw Error("threshold must lie in (0, 1)");
}

SampledTrace load_sync_trace(const std::filesystem::path& path) {
    const auto table = csv::read_file(path);
    const auto c_t = table.column("t_s");
    const auto c_a = table.column("amplitude");
    if (table.rows.size() < 2) throw ParseError(path.string() + ": need at least two samples");
    SampledTrace trace;
    try {
        trace.t0_s = std::stod(table.rows.front()[c_t]);
        const double t1 = std::stod(table.rows[1][c_t]);
        trace.dt_s = t1 - trace.t0_s;
        for (const auto& row : table.rows) {
            trace.samples.push_back(std::stod(row[c_a]));
        }
    } catch (const std::exception&) {
        throw ParseError(path.string() + ": malformed numeric field");
    }
    if (trace.dt_s <= 0.0) throw ParseError(path.string() + ": time column must increase");
    return trace;
}

void save_sync_trace(const SampledTrace& trace, const std::filesystem::path& path) {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t k = 0; k < trace.samples.size(); ++k) {
        rows.push_back({csv::format_double(trace.t0_s + static_cast<double>(k) * trace.dt_s),
                        csv::format_double(trace.samples[k])});
    }
    csv::write_file(path, {"t_s", "amplitude"}, rows);
}

SyncDetection sync_detect(const SampledTrace& trace, const SyncPipeline& pipeline) {
    pipeline.check();
    if (trace.dt_s <= 0.0) throw Error("trace sample time must be positive");
    if (std::abs(trace.dt_s - pipeline.sample_s) > 1e-9 * pipeline.sample_s) {
        throw Error("trace sample time does not match the pipeline");
    }
    const std::size_t n = trace.samples.size();
    const auto taps = static_cast<std::size_t>(pipeline.matched_taps());
    if (n < 2 * taps) throw Error("trace shorter than the matched filter");

    // matched filter for a rectangular pulse: a sliding sum over `taps`
    // samples, then a square-law detector
    std::vector<double> energy(n, 0.0);
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        acc += trace.samples[k];
        if (k >= taps) acc -= trace.samples[k - taps];
        energy[k] = acc * acc;
    }

    // one-pole lowpass envelope
    const double rc = 1.0 / (2.0 * std::numbers::pi * pipeline.cutoff_hz());
    const double alpha = trace.dt_s / (trace.dt_s + rc);
    std::vector<double> envelope(n, 0.0);
    double y = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        y += alpha * (energy[k] - y);
        envelope[k] = y;
    }

    const double peak = *std::max_element(envelope.begin(), envelope.end());
    SyncDetection detection;
    if (peak <= 0.0) return detection;

    // first-difference zero crossings (rising to falling) above the relative
    // threshold; keep the strongest apex
    const double floor_level = pipeline.threshold * peak;
    double best = 0.0;
    bool rising = false;
    std::size_t crest = 0;
    for (std::size_t k = 1; k < n; ++k) {
        const double d = envelope[k] - envelope[k - 1];
        if (d > 0.0) {
            rising = true;
            crest = k;
        } else if (d < 0.0) {
            // strict fall after a rise: the crest (plateaus included) is an apex
            if (rising && envelope[crest] >= floor_level && envelope[crest] > best) {
                best = envelope[crest];
                detection.detected = true;
                detection.t_apex_s = trace.t0_s + static_cast<double>(crest) * trace.dt_s;
            }
            rising = false;
        }
    }
    return detection;
}

SampledTrace synthesize_backscatter(const SyncPipeline& pipeline, const BackscatterSpec& spec) {
    pipeline.check();
    if (!(spec.t_start_s < spec.t_stop_s)) throw Error("backscatter window must be non-empty");
    if (spec.beam_sigma_s <= 0.0) throw Error("beam width must be positive");
    if (spec.gain <= 0.0) throw Error("backscatter gain must be positive");

    SampledTrace trace;
    trace.t0_s = spec.t_start_s;
    trace.dt_s = pipeline.sample_s;
    const auto n = static_cast<std::size_t>(
        std::floor((spec.t_stop_s - spec.t_start_s) / pipeline.sample_s)) + 1;
    trace.samples.resize(n);

    const double noise_sigma = std::pow(10.0, -spec.snr_db / 20.0);
    CounterRng rng(spec.seed);
    for (std::size_t k = 0; k < n; ++k) {
        const double t = spec.t_start_s + static_cast<double>(k) * pipeline.sample_s;
        // pulse train on the absolute grid t = j T_p, j integer
        const double in_period = t - std::floor(t / pipeline.period_s) * pipeline.period_s;
        double signal = 0.0;
        if (in_period < pipeline.pulse_s) {
            const double u = (t - spec.t_below_s) / spec.beam_sigma_s;
            signal = std::exp(-0.5 * u * u);
        }
        trace.samples[k] = spec.gain * (signal + noise_sigma * rng.next_gaussian());
    }
    return trace;
}

}  // namespace bloodnet
