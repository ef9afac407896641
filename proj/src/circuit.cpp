#include "bloodnet/circuit.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>

#include <Eigen/Dense>

#include "bloodnet/common.hpp"
#include "bloodnet/csv.hpp"

namespace bloodnet {

double HeartParameters::ventricular_compliance(double t) const {
    if (clip_floor < 0.0 || clip_floor >= 1.0) {
        throw Error("heart clip_floor must lie in [0, 1)");
    }
    const double s = std::sin(2.0 * std::numbers::pi * f_heart_hz() * t);
    const double clipped = (std::max(s, clip_floor) - clip_floor) / (1.0 - clip_floor);
    return c_min + (c_max - c_min) * clipped;
}

void CircuitNetwork::check() const {
    if (node_count < 2) throw Error("circuit has no internal nodes");
    bool has_source = false;
    std::vector<std::vector<int>> adj(node_count);
    for (const auto& br : branches) {
        if (br.from_node < 0 || br.from_node >= node_count || br.to_node < 0 ||
            br.to_node >= node_count) {
            throw Error("branch '" + br.tag + "' references a node outside the circuit");
        }
        if (br.from_node == br.to_node) {
            throw Error("branch '" + br.tag + "' is a self loop");
        }
        if (br.kind == BranchKind::PressureSource) has_source = true;
        adj[br.from_node].push_back(br.to_node);
        adj[br.to_node].push_back(br.from_node);
    }
    if (!has_source) throw Error("circuit has no pressure source");
    std::vector<char> seen(node_count, 0);
    std::vector<int> stack{0};
    while (!stack.empty()) {
        int n = stack.back();
        stack.pop_back();
        if (seen[n]) continue;
        seen[n] = 1;
        for (int m : adj[n]) stack.push_back(m);
    }
    for (int n = 0; n < node_count; ++n) {
        if (!seen[n]) throw Error("circuit node " + std::to_string(n) + " is disconnected");
    }
}

namespace {

/// Union-find over the segment port entities used while flattening the
/// catalog graph into shared circuit nodes.
struct UnionFind {
    std::vector<int> parent;

    int make() {
        parent.push_back(static_cast<int>(parent.size()));
        return parent.back();
    }
    int find(int x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }
    void unite(int a, int b) { parent[find(a)] = find(b); }
};

}  // namespace

CircuitNetwork assemble_network(const VesselCatalog& catalog, const HeartParameters& heart,
                                ResistanceFormula formula) {
    CircuitNetwork net;

    UnionFind uf;
    std::map<std::string, int> in_ent, out_ent;
    for (const auto& id : catalog.state_ids()) {
        const auto& seg = catalog.at(id);
        if (seg.is_heart_or_lung()) continue;
        in_ent[id] = uf.make();
        out_ent[id] = uf.make();
    }
    const int heart_out_ent = uf.make();
    const int venous_ent = uf.make();

    // Identify the chamber that feeds the systemic tree: its downstream
    // arteries attach to the heart block output.
    std::string systemic_chamber;
    for (const auto& id : catalog.state_ids()) {
        const auto& seg = catalog.at(id);
        if (seg.kind != VesselKind::HeartChamber) continue;
        for (const auto& d : seg.downstream) {
            if (catalog.at(d).kind == VesselKind::Artery) systemic_chamber = id;
        }
    }
    if (systemic_chamber.empty()) {
        throw Error("catalog has no heart chamber feeding an artery");
    }

    for (const auto& id : catalog.state_ids()) {
        const auto& seg = catalog.at(id);
        for (const auto& d : seg.downstream) {
            const auto& child = catalog.at(d);
            if (seg.is_heart_or_lung() && child.is_heart_or_lung()) continue;
            if (seg.is_heart_or_lung()) {
                if (id == systemic_chamber) uf.unite(heart_out_ent, in_ent[d]);
                continue;
            }
            if (child.is_heart_or_lung()) {
                // venous return: terminal veins empty into the venous source
                uf.unite(out_ent[id], venous_ent);
                continue;
            }
            uf.unite(out_ent[id], in_ent[d]);
        }
    }

    // Materialize circuit node indices; node 0 is the pressure reference.
    std::map<int, int> node_of_root;
    int next_node = 1;
    auto node_for = [&](int entity) {
        const int root = uf.find(entity);
        auto it = node_of_root.find(root);
        if (it != node_of_root.end()) return it->second;
        node_of_root[root] = next_node;
        return next_node++;
    };

    auto add = [&](BranchKind kind, double value, int from, int to, const std::string& tag,
                   std::function<double(double)> waveform = nullptr) {
        Branch br;
        br.kind = kind;
        br.value = value;
        br.waveform = std::move(waveform);
        br.from_node = from;
        br.to_node = to;
        br.tag = tag;
        net.branches.push_back(std::move(br));
    };

    for (const auto& id : catalog.state_ids()) {
        const auto& seg = catalog.at(id);
        if (seg.is_heart_or_lung()) continue;
        const int n_in = node_for(in_ent[id]);
        const int n_out = node_for(out_ent[id]);
        net.node_tags.emplace(id, n_in);

        RlcTriple rlc;
        if (seg.rlc_r && seg.rlc_l && seg.rlc_c) {
            rlc = {*seg.rlc_r, *seg.rlc_l, *seg.rlc_c};
        } else {
            rlc = derive_rlc(seg, catalog.blood, formula);
        }

        if (seg.kind == VesselKind::Capillary) {
            add(BranchKind::Resistor, rlc.resistance, n_in, n_out, id);
            continue;
        }
        const int n_mid = next_node++;
        add(BranchKind::Resistor, rlc.resistance, n_in, n_mid, id);
        add(BranchKind::Inductor, rlc.inductance, n_mid, n_out, id + ".L");
        add(BranchKind::Capacitor, rlc.compliance, n_out, 0, id + ".C");
    }

    // Heart block: P_AT -> R_AT -> mitral valve -> ventricle C(t) ->
    // aortic valve -> RSA -> root node (C_CA) -> RCA -> systemic tree.
    const int n_at = next_node++;
    const int n_mv = next_node++;
    const int n_lv = next_node++;
    const int n_av = next_node++;
    const int n_root = next_node++;
    const int n_sys = node_for(heart_out_ent);
    const int n_psv = node_for(venous_ent);
    net.node_tags.emplace("AT", n_at);
    net.node_tags.emplace("LV", n_lv);
    net.node_tags.emplace("root", n_root);
    net.node_tags.emplace("PSV", n_psv);

    add(BranchKind::PressureSource, heart.p_atrial_pa, 0, n_at, "heart.P_AT");
    add(BranchKind::Resistor, heart.r_atrial, n_at, n_mv, "heart.R_AT");
    add(BranchKind::IdealDiode, 0.0, n_mv, n_lv, "heart.MV");
    add(BranchKind::VariableCapacitor, heart.c_max, n_lv, 0, "heart.C_LV",
        [heart](double t) { return heart.ventricular_compliance(t); });
    add(BranchKind::IdealDiode, 0.0, n_lv, n_av, "heart.AV");
    add(BranchKind::Resistor, heart.r_sa, n_av, n_root, "heart.RSA");
    add(BranchKind::Capacitor, heart.c_ca, n_root, 0, "heart.C_CA");
    add(BranchKind::Resistor, heart.r_ca, n_root, n_sys, "heart.RCA");
    add(BranchKind::PressureSource, heart.p_venous_pa, 0, n_psv, "venous.P_SV");

    net.node_count = next_node;
    net.check();
    return net;
}

namespace {

struct Solver {
    const CircuitNetwork& net;
    const TransientConfig& cfg;
    int n_v;                       // internal node count (unknown pressures)
    std::vector<int> source_rows;  // branch index -> source unknown, or -1
    int n_unknowns;

    explicit Solver(const CircuitNetwork& network, const TransientConfig& config)
        : net(network), cfg(config) {
        n_v = net.node_count - 1;
        source_rows.assign(net.branches.size(), -1);
        int n_src = 0;
        for (std::size_t b = 0; b < net.branches.size(); ++b) {
            if (net.branches[b].kind == BranchKind::PressureSource) {
                source_rows[b] = n_v + n_src++;
            }
        }
        n_unknowns = n_v + n_src;
    }

    // Solution bookkeeping carried between steps.
    std::vector<double> v_node;      // previous node pressures, index by node id
    std::vector<double> i_inductor;  // previous inductor currents, by branch
    std::vector<double> cap_c_prev;  // previous capacitance, by branch
    std::vector<char> diode_on;      // switch state, by branch

    void reset() {
        v_node.assign(net.node_count, 0.0);
        i_inductor.assign(net.branches.size(), 0.0);
        cap_c_prev.assign(net.branches.size(), 0.0);
        diode_on.assign(net.branches.size(), 0);
        for (std::size_t b = 0; b < net.branches.size(); ++b) {
            const auto& br = net.branches[b];
            if (br.kind == BranchKind::Capacitor || br.kind == BranchKind::VariableCapacitor) {
                cap_c_prev[b] = br.value_at(0.0);
            }
        }
    }

    double v_across(const std::vector<double>& v, const Branch& br) const {
        return v[br.from_node] - v[br.to_node];
    }

    /// Assemble and solve one backward-Euler step at time t; returns node
    /// pressures (index 0 is the reference) and fills source currents.
    std::vector<double> solve_step(double t, std::vector<double>& src_current) const {
        const double dt = cfg.dt_s;
        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n_unknowns, n_unknowns);
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n_unknowns);

        auto stamp_g = [&](int from, int to, double g) {
            if (from > 0) a(from - 1, from - 1) += g;
            if (to > 0) a(to - 1, to - 1) += g;
            if (from > 0 && to > 0) {
                a(from - 1, to - 1) -= g;
                a(to - 1, from - 1) -= g;
            }
        };
        auto inject = [&](int from, int to, double i) {
            // current i pushed from `from` into `to` through the branch
            if (from > 0) rhs(from - 1) -= i;
            if (to > 0) rhs(to - 1) += i;
        };

        for (std::size_t b = 0; b < net.branches.size(); ++b) {
            const auto& br = net.branches[b];
            switch (br.kind) {
                case BranchKind::Resistor:
                    stamp_g(br.from_node, br.to_node, 1.0 / br.value_at(t));
                    break;
                case BranchKind::IdealDiode:
                    stamp_g(br.from_node, br.to_node,
                            diode_on[b] ? 1.0 / cfg.diode_on_resistance
                                        : cfg.diode_off_conductance);
                    break;
                case BranchKind::Inductor:
                    stamp_g(br.from_node, br.to_node, dt / br.value_at(t));
                    inject(br.from_node, br.to_node, i_inductor[b]);
                    break;
                case BranchKind::Capacitor: {
                    const double g = br.value_at(t) / dt;
                    stamp_g(br.from_node, br.to_node, g);
                    inject(br.from_node, br.to_node, -g * v_across(v_node, br));
                    break;
                }
                case BranchKind::VariableCapacitor: {
                    // charge-conserving discretization:
                    // i = (C_n v_n - C_{n-1} v_{n-1}) / dt
                    const double g = br.value_at(t) / dt;
                    stamp_g(br.from_node, br.to_node, g);
                    inject(br.from_node, br.to_node,
                           -(cap_c_prev[b] / dt) * v_across(v_node, br));
                    break;
                }
                case BranchKind::PressureSource: {
                    const int j = source_rows[b];
                    if (br.from_node > 0) {
                        a(br.from_node - 1, j) += 1.0;
                        a(j, br.from_node - 1) -= 1.0;
                    }
                    if (br.to_node > 0) {
                        a(br.to_node - 1, j) -= 1.0;
                        a(j, br.to_node - 1) += 1.0;
                    }
                    rhs(j) = br.value_at(t);
                    break;
                }
            }
        }

        Eigen::VectorXd x = a.partialPivLu().solve(rhs);
        if (!x.allFinite()) throw NumericError("transient solve produced a non-finite state");

        std::vector<double> v(net.node_count, 0.0);
        for (int n = 1; n < net.node_count; ++n) v[n] = x(n - 1);
        src_current.assign(net.branches.size(), 0.0);
        for (std::size_t b = 0; b < net.branches.size(); ++b) {
            if (source_rows[b] >= 0) src_current[b] = x(source_rows[b]);
        }
        return v;
    }

    double branch_current(std::size_t b, double t, const std::vector<double>& v,
                          const std::vector<double>& src_current) const {
        const auto& br = net.branches[b];
        const double dv = v_across(v, br);
        switch (br.kind) {
            case BranchKind::Resistor:
                return dv / br.value_at(t);
            case BranchKind::IdealDiode:
                return diode_on[b] ? dv / cfg.diode_on_resistance
                                   : dv * cfg.diode_off_conductance;
            case BranchKind::Inductor:
                return i_inductor[b] + (cfg.dt_s / br.value_at(t)) * dv;
            case BranchKind::Capacitor:
                return (br.value_at(t) / cfg.dt_s) * (dv - v_across(v_node, br));
            case BranchKind::VariableCapacitor:
                return (br.value_at(t) * dv - cap_c_prev[b] * v_across(v_node, br)) /
                       cfg.dt_s;
            case BranchKind::PressureSource:
                return src_current[b];
        }
        return 0.0;
    }
};

}  // namespace

FlowTrace simulate_transient(const CircuitNetwork& network, const TransientConfig& config) {
    network.check();
    if (config.dt_s <= 0 || config.duration_s <= config.dt_s) {
        throw Error("transient needs dt > 0 and duration > dt");
    }
    if (config.scheme != "backward-euler") {
        throw Error("unknown integration scheme '" + config.scheme + "'");
    }

    Solver solver(network, config);
    solver.reset();

    const int steps = static_cast<int>(std::llround(config.duration_s / config.dt_s));

    FlowTrace trace;
    trace.time_s.reserve(steps);
    trace.branch_tags.reserve(network.branches.size());
    for (const auto& br : network.branches) trace.branch_tags.push_back(br.tag);
    trace.currents.assign(network.branches.size(), {});
    for (auto& c : trace.currents) c.reserve(steps);
    for (const auto& [tag, node] : network.node_tags) {
        trace.node_names.push_back(tag);
        trace.pressures.push_back({});
        trace.pressures.back().reserve(steps);
    }

    std::vector<double> src_current;
    for (int k = 1; k <= steps; ++k) {
        const double t = k * config.dt_s;

        std::vector<double> v;
        bool settled = false;
        for (int it = 0; it < config.max_switch_iterations; ++it) {
            v = solver.solve_step(t, src_current);
            bool changed = false;
            for (std::size_t b = 0; b < network.branches.size(); ++b) {
                if (network.branches[b].kind != BranchKind::IdealDiode) continue;
                const char want = solver.v_across(v, network.branches[b]) > 0.0 ? 1 : 0;
                if (want != solver.diode_on[b]) {
                    solver.diode_on[b] = want;
                    changed = true;
                }
            }
            if (!changed) {
                settled = true;
                break;
            }
        }
        if (!settled) {
            throw NumericError("valve switch state did not settle at step " +
                               std::to_string(k) + " (t = " + std::to_string(t) + " s)");
        }

        trace.time_s.push_back(t);
        for (std::size_t b = 0; b < network.branches.size(); ++b) {
            trace.currents[b].push_back(solver.branch_current(b, t, v, src_current));
        }
        std::size_t slot = 0;
        for (const auto& [tag, node] : network.node_tags) {
            trace.pressures[slot++].push_back(v[node]);
        }

        // advance companion-model state
        for (std::size_t b = 0; b < network.branches.size(); ++b) {
            const auto& br = network.branches[b];
            if (br.kind == BranchKind::Inductor) {
                solver.i_inductor[b] += (config.dt_s / br.value_at(t)) * solver.v_across(v, br);
            } else if (br.kind == BranchKind::Capacitor ||
                       br.kind == BranchKind::VariableCapacitor) {
                solver.cap_c_prev[b] = br.value_at(t);
            }
        }
        solver.v_node = v;
    }
    return trace;
}

const std::vector<double>& FlowTrace::current(const std::string& tag) const {
    for (std::size_t b = 0; b < branch_tags.size(); ++b) {
        if (branch_tags[b] == tag) return currents[b];
    }
    throw Error("trace has no branch '" + tag + "'");
}

const std::vector<double>& FlowTrace::pressure(const std::string& node_tag) const {
    for (std::size_t n = 0; n < node_names.size(); ++n) {
        if (node_names[n] == node_tag) return pressures[n];
    }
    throw Error("trace has no node '" + node_tag + "'");
}

double max_kcl_residual(const CircuitNetwork& network, const FlowTrace& trace) {
    if (trace.time_s.empty()) throw Error("empty trace");
    double worst = 0.0;
    double scale = 0.0;
    for (std::size_t k = 0; k < trace.time_s.size(); ++k) {
        std::vector<double> node_sum(network.node_count, 0.0);
        for (std::size_t b = 0; b < network.branches.size(); ++b) {
            const double i = trace.currents[b][k];
            node_sum[network.branches[b].from_node] -= i;
            node_sum[network.branches[b].to_node] += i;
            scale = std::max(scale, std::abs(i));
        }
        for (int n = 1; n < network.node_count; ++n) {
            worst = std::max(worst, std::abs(node_sum[n]));
        }
    }
    return scale > 0 ? worst / scale : worst;
}

double periodicity_error(const FlowTrace& trace, double f_cycle_hz) {
    if (trace.time_s.size() < 2) throw Error("trace too short");
    const double dt = trace.time_s[1] - trace.time_s[0];
    const auto per = static_cast<std::size_t>(std::llround(1.0 / (f_cycle_hz * dt)));
    if (per < 2 || std::abs(per * f_cycle_hz * dt - 1.0) > 1e-9) {
        throw Error("cycle period is not an integer number of time steps");
    }
    const std::size_t n = trace.time_s.size();
    if (n < 2 * per) throw Error("trace shorter than two cycles");

    double worst = 0.0;
    auto scan = [&](const std::vector<double>& x) {
        double lo = x[n - 2 * per], hi = lo;
        for (std::size_t k = n - 2 * per; k < n; ++k) {
            lo = std::min(lo, x[k]);
            hi = std::max(hi, x[k]);
        }
        const double range = std::max(hi - lo, 1e-300);
        for (std::size_t k = n - per; k < n; ++k) {
            worst = std::max(worst, std::abs(x[k] - x[k - per]) / range);
        }
    };
    for (const auto& x : trace.currents) scan(x);
    for (const auto& x : trace.pressures) scan(x);
    return worst;
}

std::map<std::string, double> mean_flow(const FlowTrace& trace, double f_cycle_hz,
                                        int settle_cycles, FlowStatistic statistic) {
    if (trace.time_s.size() < 2) throw Error("trace too short");
    const double dt = trace.time_s[1] - trace.time_s[0];
    const auto per = static_cast<std::size_t>(std::llround(1.0 / (f_cycle_hz * dt)));
    if (per < 2 || std::abs(per * f_cycle_hz * dt - 1.0) > 1e-9) {
        throw Error("cycle period is not an integer number of time steps");
    }
    const std::size_t start = static_cast<std::size_t>(settle_cycles) * per;
    if (trace.time_s.size() < start + per) {
        throw Error("trace does not cover a full cycle after the settle window");
    }
    const std::size_t cycles = (trace.time_s.size() - start) / per;
    const std::size_t stop = start + cycles * per;

    std::map<std::string, double> out;
    for (std::size_t b = 0; b < trace.branch_tags.size(); ++b) {
        double acc = 0.0;
        for (std::size_t k = start; k < stop; ++k) {
            const double i = trace.currents[b][k];
            acc += statistic == FlowStatistic::ForwardFlux ? std::max(i, 0.0) : i;
        }
        out[trace.branch_tags[b]] = acc / static_cast<double>(stop - start);
    }
    return out;
}

std::map<std::pair<std::string, std::string>, double> bifurcation_ratios(
    const std::map<std::string, double>& flows, const VesselCatalog& catalog) {
    std::map<std::pair<std::string, std::string>, double> out;
    for (const auto& id : catalog.state_ids()) {
        const auto& seg = catalog.at(id);
        if (seg.is_heart_or_lung()) continue;
        std::vector<std::string> children;
        for (const auto& d : seg.downstream) {
            if (!catalog.at(d).is_heart_or_lung()) children.push_back(d);
        }
        if (children.size() < 2) continue;
        auto parent_it = flows.find(id);
        if (parent_it == flows.end()) throw Error("no flow recorded for " + id);
        if (parent_it->second <= 0.0) {
            throw NumericError("non-positive mean flow in parent " + id);
        }
        for (const auto& c : children) {
            auto child_it = flows.find(c);
            if (child_it == flows.end()) throw Error("no flow recorded for " + c);
            out[{id, c}] = child_it->second / parent_it->second;
        }
    }
    return out;
}

void save_trace(const FlowTrace& trace, const std::filesystem::path& path) {
    std::vector<std::string> header{"t_s"};
    for (const auto& tag : trace.branch_tags) header.push_back("i." + tag);
    for (const auto& name : trace.node_names) header.push_back("p." + name);

    std::vector<std::vector<std::string>> rows;
    rows.reserve(trace.time_s.size());
    for (std::size_t k = 0; k < trace.time_s.size(); ++k) {
        std::vector<std::string> row;
        row.reserve(header.size());
        row.push_back(csv::format_double(trace.time_s[k]));
        for (const auto& c : trace.currents) row.push_back(csv::format_double(c[k]));
        for (const auto& p : trace.pressures) row.push_back(csv::format_double(p[k]));
        rows.push_back(std::move(row));
    }
    csv::write_file(path, header, rows);
}

}  // namespace bloodnet
