#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "bloodnet/rng.hpp"

namespace bloodnet {

/// Sampled channel impulse response measured at a fixed sender-receiver
/// distance.
struct CirMeasurement {
    double distance_m = 0.0;
    double f_s_hz = 0.0;
    std::vector<double> samples;

    void check() const;  // N >= 1, f_s > 0, not all-zero
};

/// Delay-moment convention. Printed keeps the leading 1/N factor of the
/// conventional mean-time definition; EnergyMean drops it (plain energy-weighted
/// moments). The spread is always taken about the energy-weighted mean index
/// so a single tap yields zero width under both conventions.
enum class DelayConvention { Printed, EnergyMean };

/// RMS gain of the CIR: sqrt((1/N) sum h^2).
double cir_gain(const CirMeasurement& cir);

/// Power loss in dB: -20 log10(gain).
double cir_loss_db(const CirMeasurement& cir);

/// Link delay: energy-weighted mean arrival time plus half the energy-weighted
/// spread.
double cir_delay(const CirMeasurement& cir, DelayConvention convention = DelayConvention::Printed);

/// CIR file: header `distance_m,f_s_hz`, one data row with those two values,
/// then one amplitude per line.
CirMeasurement load_cir(const std::filesystem::path& path);
void save_cir(const CirMeasurement& cir, const std::filesystem::path& path);

/// Distance interpolation built from anchor CIR measurements: monotone
/// piecewise-cubic (Fritsch-Carlson) for the loss, least-squares line for the
/// delay. Queries outside the anchor hull are refused.
struct LossDelayModel {
    std::vector<double> distance_m;  // ascending anchors
    std::vector<double> loss_db;
    std::vector<double> delay_s;
    double delay_slope = 0.0;     // line fit delay = slope * d + intercept
    double delay_intercept = 0.0;

    double loss_at(double d) const;
    double delay_at(double d) const;
    std::pair<double, double> at(double d) const;  // (loss dB, delay s)
};

LossDelayModel build_loss_delay_model(std::vector<CirMeasurement> anchors,
                                      DelayConvention convention = DelayConvention::Printed);

/// Straight-line fly-by of a nanosensor under a fixed gateway. The closest
/// approach happens at the midpoint of the observation window.
struct FlybyGeometry {
    double d_min_m = 0.0;
    double speed_mps = 0.0;
    double f_c_hz = 0.0;
    double c_u_mps = 1480.0;
    double t_in_s = 0.0;
    double t_out_s = 0.0;

    double t_below_s() const { return 0.5 * (t_in_s + t_out_s); }
    void check() const;
};

/// Instantaneous Doppler shift: nu = v cos(phi) f_c / c_u with
/// cos(phi) = d_c / d, the horizontal offset over the line-of-sight distance.
double doppler(const FlybyGeometry& geometry, double t);

/// BER of BPSK whose constellation is rotated by delta_phi, under AWGN at the
/// given Eb/N0: Q(sqrt(2 gamma) cos(delta_phi)).
double rotated_bpsk_ber(double eb_n0_linear, double delta_phi_rad);

/// Monte Carlo estimate of the same quantity over n symbols.
double rotated_bpsk_ber_mc(double eb_n0_linear, double delta_phi_rad, std::size_t n_symbols,
                           CounterRng rng);

struct FlybySample {
    double t_s = 0.0;
    double delta_phi_rad = 0.0;
    double ber = 0.0;        // Monte Carlo when requested, closed form otherwise
    double ber_closed = 0.0;
    double eb_n0_db = 0.0;
};

struct FlybyConfig {
    double eb_n0_db = 10.0;
    double dt_s = 1e-4;            // time bin; also the phase-integration step
    std::size_t mc_symbols = 0;    // 0: closed form only
    std::uint64_t seed = 1;
};

/// Sweep the fly-by window, accumulating the constellation rotation
/// delta_phi(t) = 2 pi integral nu dt (trapezoidal) and the BER per time bin.
std::vector<FlybySample> simulate_flyby(const FlybyGeometry& geometry,
                                        const FlybyConfig& config);

/// CSV schema: t,delta_phi,ber,eb_n0_db
void save_flyby(const std::vector<FlybySample>& samples, const std::filesystem::path& path);

}  // namespace bloodnet
