#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "bloodnet/vascular.hpp"

namespace bloodnet {

enum class BranchKind {
    Resistor,
    Inductor,
    Capacitor,
    VariableCapacitor,
    IdealDiode,
    PressureSource,
};

/// One circuit element between two nodes. Node 0 is the pressure reference.
/// `waveform` overrides `value` for time-dependent sources and the variable
/// capacitor; it receives the simulation time in seconds.
struct Branch {
    BranchKind kind = BranchKind::Resistor;
    double value = 0.0;
    std::function<double(double)> waveform;
    int from_node = 0;
    int to_node = 0;
    std::string tag;

    double value_at(double t) const { return waveform ? waveform(t) : value; }
};

struct CircuitNetwork {
    int node_count = 1;  // includes the reference node 0
    std::vector<Branch> branches;
    std::map<std::string, int> node_tags;  // pressure probe names

    void check() const;  // node references, connectivity, source presence
};

/// Parameters of the valved, variable-capacitance heart block and its
/// aortic-root lumping. Pressures in pascal, resistances in Pa s/m^3,
/// compliances in m^3/Pa.
struct HeartParameters {
    double f_heart_bpm = 75.0;
    double p_atrial_pa = 1600.0;   // P_AT
    double r_atrial = 1.0e6;       // R_AT
    double r_sa = 2.0e6;           // RSA (valve-to-root)
    double r_ca = 2.0e6;           // RCA (root-to-tree)
    double c_ca = 8.0e-9;          // C_CA aortic-root compliance
    double p_venous_pa = 500.0;    // P_SV central venous pressure
    double c_min = 5.0e-9;         // ventricular compliance, systole
    double c_max = 7.5e-8;         // ventricular compliance, diastole
    double clip_floor = 0.0;       // clipped-sine floor, in [0, 1)

    double f_heart_hz() const { return f_heart_bpm / 60.0; }
    /// Ventricular compliance waveform: clipped sine at the heart rate.
    double ventricular_compliance(double t) const;
};

struct TransientConfig {
    double dt_s = 1e-4;
    double duration_s = 1.0;
    int settle_cycles = 5;
    std::string scheme = "backward-euler";
    double diode_on_resistance = 1.0;      // Pa s/m^3, negligible vs vessel R
    double diode_off_conductance = 1e-18;  // m^3/(Pa s)
    int max_switch_iterations = 64;
};

struct FlowTrace {
    std::vector<double> time_s;
    std::vector<std::string> branch_tags;
    std::vector<std::vector<double>> currents;  // [branch][step]
    std::vector<std::string> node_names;        // index = node id as string or tag
    std::vector<std::vector<double>> pressures; // [node][step]

    const std::vector<double>& current(const std::string& tag) const;
    const std::vector<double>& pressure(const std::string& node_tag) const;
};

/// Build the electrical analog of the catalog: every artery/vein contributes
/// a series R-L plus a shunt C (L-inverted topology), capillaries become
/// resistive terminations, and the heart block replaces the heart chambers
/// and lungs. Venous return closes through the P_SV source.
CircuitNetwork assemble_network(const VesselCatalog& catalog, const HeartParameters& heart,
                                ResistanceFormula formula = ResistanceFormula::Verbatim);

/// Backward-Euler transient with per-step resolution of the ideal-diode
/// switch states. Deterministic; throws NumericError (with the step index)
/// if the switch iteration does not settle.
FlowTrace simulate_transient(const CircuitNetwork& network, const TransientConfig& config);

/// Largest |sum of branch currents| over all internal nodes and steps,
/// normalized by the largest branch current.
double max_kcl_residual(const CircuitNetwork& network, const FlowTrace& trace);

/// Max over one cycle of |x(t) - x(t + 1/f)| / range(x), worst over signals.
double periodicity_error(const FlowTrace& trace, double f_cycle_hz);

enum class FlowStatistic {
    Mean,        // signed time average
    ForwardFlux, // time average of max(i, 0); resolves rate-dependent splits
};

/// Per-branch time average over whole cardiac cycles after the settle window.
std::map<std::string, double> mean_flow(const FlowTrace& trace, double f_cycle_hz,
                                        int settle_cycles,
                                        FlowStatistic statistic = FlowStatistic::Mean);

/// Raw transition weights I_child / I_parent at every catalog bifurcation.
std::map<std::pair<std::string, std::string>, double> bifurcation_ratios(
    const std::map<std::string, double>& flows, const VesselCatalog& catalog);

/// FlowTrace CSV export: t,branch_tag,current,node_tag,pressure (long format).
void save_trace(const FlowTrace& trace, const std::filesystem::path& path);

}  // namespace bloodnet
