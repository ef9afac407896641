#include "bloodnet/markov.hpp"

#include <algorithm>
#include <cmath>

#include "bloodnet/common.hpp"
#include "bloodnet/csv.hpp"

namespace bloodnet {

std::size_t TransitionMatrix::index_of(const std::string& id) const {
    for (std::size_t i = 0; i < states.size(); ++i) {
        if (states[i] == id) return i;
    }
    throw Error("unknown state " + id);
}

double TransitionMatrix::prob(const std::string& from, const std::string& to) const {
    return pi(static_cast<Eigen::Index>(index_of(from)),
              static_cast<Eigen::Index>(index_of(to)));
}

double StationaryVector::at(const std::string& id) const {
    for (std::size_t i = 0; i < states.size(); ++i) {
        if (states[i] == id) return nu(static_cast<Eigen::Index>(i));
    }
    throw Error("unknown state " + id);
}

TransitionMatrix build_transition_matrix(const BifurcationWeights& weights,
                                         const VesselCatalog& catalog) {
    TransitionMatrix out;
    out.states = catalog.state_ids();
    const auto n = static_cast<Eigen::Index>(out.states.size());
    out.pi = Eigen::MatrixXd::Zero(n, n);

    std::map<std::string, Eigen::Index> idx;
    for (Eigen::Index i = 0; i < n; ++i) idx[out.states[i]] = i;

    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& seg = catalog.at(out.states[i]);
        if (seg.downstream.empty()) {
            throw Error("state " + seg.state_id + " has no successors");
        }
        if (seg.downstream.size() == 1) {
            out.pi(i, idx.at(seg.downstream[0])) = 1.0;
            continue;
        }
        double sum = 0.0;
        std::vector<double> w(seg.downstream.size());
        for (std::size_t j = 0; j < seg.downstream.size(); ++j) {
            auto it = weights.find({seg.state_id, seg.downstream[j]});
            if (it == weights.end()) {
                throw Error("no flow weight for bifurcation " + seg.state_id + " -> " +
                            seg.downstream[j]);
            }
            if (it->second < 0.0) {
                throw Error("negative flow weight at " + seg.state_id);
            }
            w[j] = it->second;
            sum += it->second;
        }
        if (sum <= 0.0) throw Error("degenerate bifurcation at " + seg.state_id);
        for (std::size_t j = 0; j < seg.downstream.size(); ++j) {
            out.pi(i, idx.at(seg.downstream[j])) = w[j] / sum;
        }
    }
    return out;
}

namespace {

bool support_strongly_connected(const Eigen::MatrixXd& pi) {
    const auto n = pi.rows();
    auto reach_all = [&](bool transpose) {
        std::vector<char> seen(static_cast<std::size_t>(n), 0);
        std::vector<Eigen::Index> stack{0};
        Eigen::Index count = 0;
        while (!stack.empty()) {
            const auto i = stack.back();
            stack.pop_back();
            if (seen[static_cast<std::size_t>(i)]) continue;
            seen[static_cast<std::size_t>(i)] = 1;
            ++count;
            for (Eigen::Index j = 0; j < n; ++j) {
                const double p = transpose ? pi(j, i) : pi(i, j);
                if (p > 0.0 && !seen[static_cast<std::size_t>(j)]) stack.push_back(j);
            }
        }
        return count == n;
    };
    return reach_all(false) && reach_all(true);
}

}  // namespace

StationaryVector stationary_distribution(const TransitionMatrix& tm) {
    const auto n = tm.pi.rows();
    if (n == 0) throw Error("empty chain");
    if (!support_strongly_connected(tm.pi)) {
        throw NumericError("chain is reducible: no unique stationary distribution");
    }

    // Iterate on the lazy chain (Pi + I)/2, which shares the fixed point and
    // is aperiodic; Aitken extrapolation every third sweep.
    Eigen::VectorXd x = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    Eigen::VectorXd prev1 = x, prev2 = x;
    const double tol = 1e-12;
    const int max_iter = 100000;
    for (int it = 0; it < max_iter; ++it) {
        Eigen::VectorXd next = 0.5 * (tm.pi.transpose() * x + x);
        next /= next.sum();
        if (it % 3 == 2) {
            Eigen::VectorXd d1 = next - prev1;
            Eigen::VectorXd d2 = (next - prev1) - (prev1 - prev2);
            Eigen::VectorXd accel = next;
            bool ok = true;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (std::abs(d2(i)) > 1e-300) {
                    accel(i) = next(i) - d1(i) * d1(i) / d2(i);
                } else {
                    ok = false;
                }
            }
            if (ok && accel.minCoeff() >= 0.0 && accel.sum() > 0.0) {
                accel /= accel.sum();
                if (((tm.pi.transpose() * accel - accel).lpNorm<Eigen::Infinity>()) <
                    ((tm.pi.transpose() * next - next).lpNorm<Eigen::Infinity>())) {
                    next = accel;
                }
            }
        }
        const double resid = (tm.pi.transpose() * next - next).lpNorm<Eigen::Infinity>();
        prev2 = prev1;
        prev1 = x;
        x = next;
        if (resid < tol) {
            StationaryVector out;
            out.states = tm.states;
            out.nu = x;
            return out;
        }
    }
    throw NumericError("stationary distribution did not converge");
}

double path_probability(const TransitionMatrix& tm, const PathSpec& path) {
    double p = 1.0;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        const double step = tm.prob(path[i], path[i + 1]);
        if (step == 0.0) {
            throw Error("states " + path[i] + " and " + path[i + 1] + " are not adjacent");
        }
        p *= step;
    }
    return p;
}

double first_passage_probability(double p_gateway, double p_infection) {
    if (p_gateway < 0.0 || p_infection < 0.0) {
        throw Error("first_passage_probability: negative probability");
    }
    const double sum = p_gateway + p_infection;
    if (sum == 0.0) throw Error("first_passage_probability: p_G + p_I = 0");
    if (sum > 1.0 + 1e-12) {
        throw Error("first_passage_probability: p_G + p_I > 1");
    }
    return p_gateway / sum;
}

namespace {

/// Expected time from entering each state until entering `target`, following
/// the chain. Solves (I - Pi_masked) h = T where the target row is absorbed.
Eigen::VectorXd hitting_times(const TransitionMatrix& tm, const VesselCatalog& catalog,
                              Eigen::Index target) {
    const auto n = tm.pi.rows();
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd b(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        b(i) = segment_travel_time(catalog.at(tm.states[static_cast<std::size_t>(i)]));
        if (i == target) continue;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j == target) continue;  // entering the target stops the clock
            a(i, j) -= tm.pi(i, j);
        }
    }
    // target row: h(target) = 0
    b(target) = 0.0;
    return a.partialPivLu().solve(b);
}

struct PathAccum {
    double prob = 0.0;
    double time_weighted = 0.0;  // sum of prob * arterial-path time
    double best_prob = -1.0;
    std::vector<std::string> best_path;
};

void dfs_to_capillaries(const TransitionMatrix& tm, const VesselCatalog& catalog,
                        const std::string& state, double prob, double time,
                        std::vector<std::string>& path,
                        std::map<std::string, PathAccum>& acc, int depth) {
    if (depth > static_cast<int>(tm.states.size()) + 2) {
        throw Error("arterial path does not reach a capillary (cycle before capillary)");
    }
    const auto& seg = catalog.at(state);
    if (seg.kind == VesselKind::Capillary) {
        auto& a = acc[state];
        a.prob += prob;
        a.time_weighted += prob * time;
        if (prob > a.best_prob) {
            a.best_prob = prob;
            a.best_path = path;
        }
        return;
    }
    const double t_here = segment_travel_time(seg);
    const auto i = tm.index_of(state);
    for (const auto& next : seg.downstream) {
        const double step = tm.pi(static_cast<Eigen::Index>(i),
                                  static_cast<Eigen::Index>(tm.index_of(next)));
        if (step <= 0.0) continue;
        path.push_back(next);
        dfs_to_capillaries(tm, catalog, next, prob * step, time + t_here, path, acc,
                           depth + 1);
        path.pop_back();
    }
}

}  // namespace

std::vector<CirculationLoop> enumerate_loops(const TransitionMatrix& tm,
                                             const VesselCatalog& catalog,
                                             const std::string& heart_state) {
    std::map<std::string, PathAccum> acc;
    std::vector<std::string> path{heart_state};
    dfs_to_capillaries(tm, catalog, heart_state, 1.0, 0.0, path, acc, 0);

    const auto heart_idx = static_cast<Eigen::Index>(tm.index_of(heart_state));
    const Eigen::VectorXd h = hitting_times(tm, catalog, heart_idx);

    std::vector<CirculationLoop> loops;
    for (const auto& [id, seg] : catalog.segments) {
        if (seg.kind != VesselKind::Capillary) continue;
        auto it = acc.find(id);
        if (it == acc.end() || it->second.prob <= 0.0) {
            throw Error("capillary " + id + " unreachable from " + heart_state);
        }
        CirculationLoop loop;
        loop.capillary = id;
        loop.probability = it->second.prob;
        // arterial leg (expected, conditioned on this capillary) + capillary and
        // venous return (exact hitting-time expectation)
        loop.travel_time_s = it->second.time_weighted / it->second.prob +
                             h(static_cast<Eigen::Index>(tm.index_of(id)));
        loop.representative_path = it->second.best_path;
        loops.push_back(std::move(loop));
    }
    std::sort(loops.begin(), loops.end(), [](const auto& a, const auto& b) {
        return a.capillary < b.capillary;
    });
    return loops;
}

void save_matrix(const TransitionMatrix& tm, const std::filesystem::path& path) {
    std::vector<std::string> header{"state"};
    header.insert(header.end(), tm.states.begin(), tm.states.end());
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < tm.states.size(); ++i) {
        std::vector<std::string> row{tm.states[i]};
        for (std::size_t j = 0; j < tm.states.size(); ++j) {
            row.push_back(csv::format_double(
                tm.pi(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
        }
        rows.push_back(std::move(row));
    }
    csv::write_file(path, header, rows);
}

TransitionMatrix load_matrix(const std::filesystem::path& path) {
    const auto t = csv::read_file(path);
    if (t.header.empty() || t.header[0] != "state") {
        throw ParseError(path.string() + ": expected 'state' header column");
    }
    TransitionMatrix out;
    out.states.assign(t.header.begin() + 1, t.header.end());
    const auto n = static_cast<Eigen::Index>(out.states.size());
    if (static_cast<Eigen::Index>(t.rows.size()) != n) {
        throw ParseError(path.string() + ": matrix is not square");
    }
    out.pi = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& row = t.rows[static_cast<std::size_t>(i)];
        if (row[0] != out.states[static_cast<std::size_t>(i)]) {
            throw ParseError(path.string() + ": row order differs from header order");
        }
        for (Eigen::Index j = 0; j < n; ++j) {
            out.pi(i, j) = std::stod(row[static_cast<std::size_t>(j) + 1]);
        }
    }
    return out;
}

void save_stationary(const StationaryVector& nu, const std::filesystem::path& path) {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < nu.states.size(); ++i) {
        rows.push_back({nu.states[i], csv::format_double(nu.nu(static_cast<Eigen::Index>(i)))});
    }
    csv::write_file(path, {"state", "nu"}, rows);
}

void save_loops(const std::vector<CirculationLoop>& loops,
                const std::filesystem::path& path) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& loop : loops) {
        rows.push_back({loop.capillary, loop.capillary, csv::format_double(loop.probability),
                        csv::format_double(loop.travel_time_s)});
    }
    csv::write_file(path, {"loop", "capillary", "p_c", "T_c_seconds"}, rows);
}

}  // namespace bloodnet
