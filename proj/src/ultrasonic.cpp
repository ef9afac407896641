#include "bloodnet/ultrasonic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "bloodnet/common.hpp"
#include "bloodnet/csv.hpp"

namespace bloodnet {

void CirMeasurement::check() const {
    if (samples.empty()) throw Error("CIR has no samples");
    if (f_s_hz <= 0.0) throw Error("CIR sample rate must be positive");
    if (distance_m <= 0.0) throw Error("CIR distance must be positive");
    for (double h : samples) {
        if (h != 0.0) return;
    }
    throw NumericError("all-zero CIR: gain would be zero (infinite loss)");
}

double cir_gain(const CirMeasurement& cir) {
    cir.check();
    double acc = 0.0;
    for (double h : cir.samples) acc += h * h;
    return std::sqrt(acc / static_cast<double>(cir.samples.size()));
}

double cir_loss_db(const CirMeasurement& cir) { return -20.0 * std::log10(cir_gain(cir)); }

double cir_delay(const CirMeasurement& cir, DelayConvention convention) {
    cir.check();
    const auto n = static_cast<double>(cir.samples.size());
    double energy = 0.0, first = 0.0;
    for (std::size_t k = 0; k < cir.samples.size(); ++k) {
        const double e = cir.samples[k] * cir.samples[k];
        energy += e;
        // the textbook form indexes samples from 1
        first += static_cast<double>(k + 1) * e;
    }
    const double k_mean = first / energy;  // energy-weighted mean index
    double spread = 0.0;
    for (std::size_t k = 0; k < cir.samples.size(); ++k) {
        const double d = static_cast<double>(k + 1) - k_mean;
        spread += d * d * cir.samples[k] * cir.samples[k];
    }
    double tau_mean = k_mean / cir.f_s_hz;
    double tau_sigma = std::sqrt(spread / energy) / cir.f_s_hz;
    if (convention == DelayConvention::Printed) {
        // keep the leading 1/N factors of the printed convention
        tau_mean /= n;
        tau_sigma /= std::sqrt(n);
    }
    return tau_mean + 0.5 * tau_sigma;
}

CirMeasurement load_cir(const std::filesystem::path& path) {
    // the CIR format is ragged (a two-field meta row, then one amplitude per
    // line), so it is parsed directly instead of through the table reader
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        lines.push_back(line);
    }
    if (lines.size() < 3 || lines[0] != "distance_m,f_s_hz") {
        throw ParseError(path.string() + ": expected header distance_m,f_s_hz");
    }
    CirMeasurement cir;
    const auto comma = lines[1].find(',');
    if (comma == std::string::npos) {
        throw ParseError(path.string() + ": missing distance/sample-rate row");
    }
    try {
        cir.distance_m = std::stod(lines[1].substr(0, comma));
        cir.f_s_hz = std::stod(lines[1].substr(comma + 1));
        for (std::size_t r = 2; r < lines.size(); ++r) {
            cir.samples.push_back(std::stod(lines[r]));
        }
    } catch (const std::exception&) {
        throw ParseError(path.string() + ": malformed numeric field");
    }
    cir.check();
    return cir;
}

void save_cir(const CirMeasurement& cir, const std::filesystem::path& path) {
    cir.check();
    const auto tmp = path.parent_path() / (path.filename().string() + ".tmp");
    {
        std::ofstream out(tmp);
        if (!out) throw Error("cannot write " + tmp.string());
        out << "distance_m,f_s_hz\n";
        out << csv::format_double(cir.distance_m) << ',' << csv::format_double(cir.f_s_hz)
            << '\n';
        for (double h : cir.samples) out << csv::format_double(h) << '\n';
    }
    std::filesystem::rename(tmp, path);
}

namespace {

/// Fritsch-Carlson monotone cubic Hermite tangents.
std::vector<double> pchip_tangents(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    std::vector<double> h(n - 1), delta(n - 1), m(n);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        h[i] = x[i + 1] - x[i];
        delta[i] = (y[i + 1] - y[i]) / h[i];
    }
    if (n == 2) {
        m[0] = m[1] = delta[0];
        return m;
    }
    m[0] = delta[0];
    m[n - 1] = delta[n - 2];
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (delta[i - 1] * delta[i] <= 0.0) {
            m[i] = 0.0;
        } else {
            const double w1 = 2.0 * h[i] + h[i - 1];
            const double w2 = h[i] + 2.0 * h[i - 1];
            m[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    // clamp endpoint tangents to preserve monotonicity
    for (std::size_t i : {std::size_t{0}, n - 1}) {
        const std::size_t j = i == 0 ? 0 : n - 2;
        if (delta[j] == 0.0) {
            m[i] = 0.0;
        } else if (m[i] / delta[j] < 0.0) {
            m[i] = 0.0;
        } else if (std::abs(m[i]) > 3.0 * std::abs(delta[j])) {
            m[i] = 3.0 * delta[j];
        }
    }
    return m;
}

}  // namespace

double LossDelayModel::loss_at(double d) const {
    if (d < distance_m.front() || d > distance_m.back()) {
        throw Error("distance outside the measured anchor range (extrapolation refused)");
    }
    const auto tangents = pchip_tangents(distance_m, loss_db);
    std::size_t i = 0;
    while (i + 2 < distance_m.size() && d > distance_m[i + 1]) ++i;
    const double h = distance_m[i + 1] - distance_m[i];
    const double s = (d - distance_m[i]) / h;
    const double h00 = (1 + 2 * s) * (1 - s) * (1 - s);
    const double h10 = s * (1 - s) * (1 - s);
    const double h01 = s * s * (3 - 2 * s);
    const double h11 = s * s * (s - 1);
    return h00 * loss_db[i] + h10 * h * tangents[i] + h01 * loss_db[i + 1] +
           h11 * h * tangents[i + 1];
}

double LossDelayModel::delay_at(double d) const {
    if (d < distance_m.front() || d > distance_m.back()) {
        throw Error("distance outside the measured anchor range (extrapolation refused)");
    }
    return delay_slope * d + delay_intercept;
}

std::pair<double, double> LossDelayModel::at(double d) const {
    return {loss_at(d), delay_at(d)};
}

LossDelayModel build_loss_delay_model(std::vector<CirMeasurement> anchors,
                                      DelayConvention convention) {
    if (anchors.size() < 2) throw Error("need at least two CIR anchors");
    std::sort(anchors.begin(), anchors.end(),
              [](const auto& a, const auto& b) { return a.distance_m < b.distance_m; });
    LossDelayModel model;
    for (const auto& cir : anchors) {
        if (!model.distance_m.empty() && cir.distance_m == model.distance_m.back()) {
            throw Error("duplicate CIR anchor distance");
        }
        model.distance_m.push_back(cir.distance_m);
        model.loss_db.push_back(cir_loss_db(cir));
        model.delay_s.push_back(cir_delay(cir, convention));
    }
    // least-squares line through (distance, delay)
    const auto n = static_cast<double>(model.distance_m.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < model.distance_m.size(); ++i) {
        sx += model.distance_m[i];
        sy += model.delay_s[i];
        sxx += model.distance_m[i] * model.distance_m[i];
        sxy += model.distance_m[i] * model.delay_s[i];
    }
    const double denom = n * sxx - sx * sx;
    if (denom == 0.0) throw NumericError("degenerate delay line fit");
    model.delay_slope = (n * sxy - sx * sy) / denom;
    model.delay_intercept = (sy - model.delay_slope * sx) / n;
    return model;
}

void FlybyGeometry::check() const {
    if (d_min_m <= 0.0) throw Error("fly-by closest distance must be positive");
    if (speed_mps <= 0.0) throw Error("fly-by speed must be positive");
    if (f_c_hz <= 0.0 || c_u_mps <= 0.0) throw Error("fly-by frequencies must be positive");
    if (!(t_in_s < t_out_s)) throw Error("fly-by window must have t_in < t_out");
}

double doppler(const FlybyGeometry& g, double t) {
    g.check();
    const double d_c = g.speed_mps * std::abs(t - g.t_below_s());
    const double d = std::hypot(g.d_min_m, d_c);
    return g.speed_mps * (d_c / d) * g.f_c_hz / g.c_u_mps;
}

namespace {

double q_function(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

}  // namespace

double rotated_bpsk_ber(double eb_n0_linear, double delta_phi_rad) {
    if (eb_n0_linear < 0.0) throw Error("Eb/N0 must be non-negative");
    return q_function(std::sqrt(2.0 * eb_n0_linear) * std::cos(delta_phi_rad));
}

double rotated_bpsk_ber_mc(double eb_n0_linear, double delta_phi_rad, std::size_t n_symbols,
                           CounterRng rng) {
    if (n_symbols == 0) throw Error("Monte Carlo needs at least one symbol");
    // coherent receiver referenced to the unrotated constellation: the
    // in-phase projection of the rotated symbol is sqrt(Eb) cos(delta_phi)
    const double mean = std::sqrt(eb_n0_linear) * std::cos(delta_phi_rad);
    std::size_t errors = 0;
    for (std::size_t k = 0; k < n_symbols; ++k) {
        // noise with variance N0/2, normalized by sqrt(N0)
        const double y = mean + rng.next_gaussian() / std::numbers::sqrt2;
        if (y <= 0.0) ++errors;
    }
    return static_cast<double>(errors) / static_cast<double>(n_symbols);
}

std::vector<FlybySample> simulate_flyby(const FlybyGeometry& geometry,
                                        const FlybyConfig& config) {
    geometry.check();
    if (config.dt_s <= 0.0) throw Error("fly-by time step must be positive");
    const double gamma = std::pow(10.0, config.eb_n0_db / 10.0);
    CounterRng rng(config.seed);

    std::vector<FlybySample> out;
    double phi = 0.0;
    double nu_prev = doppler(geometry, geometry.t_in_s);
    std::size_t bin = 0;
    for (double t = geometry.t_in_s; t <= geometry.t_out_s + 1e-12;
         t = geometry.t_in_s + static_cast<double>(++bin) * config.dt_s) {
        if (bin > 0) {
            const double nu = doppler(geometry, t);
            phi += 2.0 * std::numbers::pi * 0.5 * (nu + nu_prev) * config.dt_s;
            nu_prev = nu;
        }
        FlybySample s;
        s.t_s = t;
        s.delta_phi_rad = phi;
        s.eb_n0_db = config.eb_n0_db;
        s.ber_closed = rotated_bpsk_ber(gamma, phi);
        s.ber = config.mc_symbols > 0
                    ? rotated_bpsk_ber_mc(gamma, phi, config.mc_symbols, rng.split(bin))
                    : s.ber_closed;
        out.push_back(s);
    }
    return out;
}

void save_flyby(const std::vector<FlybySample>& samples, const std::filesystem::path& path) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& s : samples) {
        rows.push_back({csv::format_double(s.t_s), csv::format_double(s.delta_phi_rad),
                        csv::format_double(s.ber), csv::format_double(s.eb_n0_db)});
    }
    csv::write_file(path, {"t", "delta_phi", "ber", "eb_n0_db"}, rows);
}

}  // namespace bloodnet
