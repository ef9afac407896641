#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "bloodnet/rng.hpp"

namespace bloodnet {

inline constexpr double k_speed_of_light_mps = 299792458.0;

/// Layered skin / tissue / vessel medium between the nanosensor and the
/// on-body gateway.
struct TissueStack {
    double thickness_skin_m = 86e-6;
    double thickness_tissue_m = 1.44e-3;
    double thickness_vessel_m = 477e-6;
    double mu_skin_per_m = 6000.0;
    double mu_tissue_per_m = 6000.0;
    double mu_vessel_per_m = 4500.0;
    double n_skin = 1.73;
    double n_tissue = 1.88;
    double n_vessel = 1.97;

    void check() const;
    double depth_m() const {
        return thickness_skin_m + thickness_tissue_m + thickness_vessel_m;
    }
};

/// Stack file schema: layer,thickness_m,mu_per_m,refractive_index with rows
/// named skin, tissue, vessel.
TissueStack load_tissue_stack(const std::filesystem::path& path);
void save_tissue_stack(const TissueStack& stack, const std::filesystem::path& path);

/// Linear attenuation factor (received over transmitted power): the product
/// over the three layers of exp(-mu d) (lambda / 4 pi d)^2, with the oblique
/// distances d = L / cos(phi) and cos(phi) = sqrt(1 - (x/(l_v+L_t+L_s))^2).
/// The per-layer wavelength is lambda = c / (f_c n).
double path_loss(const TissueStack& stack, double f_c_hz, double x_m, double l_v_m);

/// Channel coherence time T_c = sqrt(9/(16 pi)) / nu_max with the maximum
/// Doppler shift nu_max = v f_c / c.
double coherence_time(double v_mps, double f_c_hz, double c_mps = k_speed_of_light_mps);

struct ThzLinkConfig {
    double f_c_hz = 0.5e12;
    double p_tx_w = 5e3;                     // peak transmit power
    double sensitivity_w_per_sqrthz = 1e-10; // receiver sensitivity
    double snr_threshold_db = 15.0;          // gamma_0
    double blood_speed_mps = 0.03;
    double x_max_m = 1.3e-3;                 // half communication range
    int bits_per_symbol = 1;
    double bandwidth_hz = 5e9;
    double packet_bits = 65536.0;            // 8 kB packet
    // payload bits carried per coherence block = BW * T_c * payload_efficiency
    double payload_efficiency = 8e-4;

    double noise_power_w() const;  // sensitivity^2 * bandwidth
    double snr_threshold_linear() const;
    void check() const;
};

/// Transmission blocks of one coherence time each, centered symmetrically
/// about the point below the gateway.
struct BlockPlan {
    double coherence_time_s = 0.0;
    int block_count = 0;                 // M = floor(2 x_max / (v T_c))
    std::vector<double> centers_m;       // x_m, ascending
};

BlockPlan plan_blocks(const ThzLinkConfig& config);

/// Linear SNR of block m (1-based) for a nanosensor at vessel depth l_v.
double snr_at(const ThzLinkConfig& config, const TissueStack& stack, int block_index,
              double l_v_m);

struct OutageResult {
    double p_out = 0.0;  // P[gamma_m < gamma_0] under l_v ~ U(0, L_v)
    double ber = 0.0;    // p_out / bits_per_symbol
};

/// Invert gamma_m(l_v) = gamma_0 by bisection (direction detected
/// numerically); uniform-depth outage probability and the symbol-error BER
/// approximation.
OutageResult outage_and_ber(const ThzLinkConfig& config, const TissueStack& stack,
                            int block_index);

struct BandwidthPoint {
    double bandwidth_hz = 0.0;
    int block_count = 0;
    double ber = 0.0;
    double per = 0.0;
};

/// Bandwidth sweep: noise scales with BW, the packet is spread over the
/// fewest blocks nearest the gateway, and the per-block BER is aggregated
/// bit-weighted over the assignment.
std::vector<BandwidthPoint> ber_vs_bandwidth(const ThzLinkConfig& config,
                                             const TissueStack& stack,
                                             const std::vector<double>& bandwidth_grid_hz);

/// Independent-bit packet error rate 1 - (1 - BER)^bits.
double packet_error_rate(double ber, double bits);

/// CSV schema: bw_hz,M,ber,per
void save_bandwidth_sweep(const std::vector<BandwidthPoint>& sweep,
                          const std::filesystem::path& path);

/// Gateway-side synchronization pipeline: matched FIR (rectangular pulse),
/// square-law plus one-pole lowpass envelope, first-difference peak picking.
struct SyncPipeline {
    double pulse_s = 1e-6;        // T
    double period_s = 1e-3;       // T_p
    double sample_s = 50e-9;      // T_s
    double carrier_hz = 0.14e12;  // informational; the trace is baseband
    double lowpass_cutoff_hz = 0.0;  // 0 selects the default 1/(10 T)
    double threshold = 0.5;          // candidate floor, fraction of peak envelope

    double cutoff_hz() const {
        return lowpass_cutoff_hz > 0.0 ? lowpass_cutoff_hz : 1.0 / (10.0 * pulse_s);
    }
    int matched_taps() const;
    void check() const;
};

struct SampledTrace {
    double t0_s = 0.0;
    double dt_s = 0.0;
    std::vector<double> samples;
};

/// Trace CSV schema: t_s,amplitude
SampledTrace load_sync_trace(const std::filesystem::path& path);
void save_sync_trace(const SampledTrace& trace, const std::filesystem::path& path);

struct SyncDetection {
    bool detected = false;
    double t_apex_s = 0.0;
};

/// Run the pipeline over a sampled backscatter trace. Returns the timestamp
/// of the strongest envelope apex, or detected = false when no apex rises
/// above the relative threshold. Invariant under uniform gain scaling.
SyncDetection sync_detect(const SampledTrace& trace, const SyncPipeline& pipeline);

/// Synthetic backscatter of the emitted pulse train: pulse amplitudes follow
/// a Gaussian beam profile centered at the instant the nanosensor passes
/// below the gateway, plus white noise. snr_db is the per-sample peak SNR
/// (the matched filter adds 10 log10(taps) dB of post-detection gain).
struct BackscatterSpec {
    double t_below_s = 0.0;
    double t_start_s = 0.0;
    double t_stop_s = 0.0;
    double beam_sigma_s = 1.0e-3;
    double snr_db = 0.0;
    double gain = 1.0;
    std::uint64_t seed = 1;
};

SampledTrace synthesize_backscatter(const SyncPipeline& pipeline, const BackscatterSpec& spec);

}  // namespace bloodnet
