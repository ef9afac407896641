#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bloodnet/vascular.hpp"

namespace bloodnet {

/// Row-stochastic transition matrix over the catalog states. Row i holds the
/// outgoing probabilities of state index i; the fixed point is nu^T = nu^T Pi.
struct TransitionMatrix {
    std::vector<std::string> states;  // index -> state id
    Eigen::MatrixXd pi;

    std::size_t index_of(const std::string& id) const;
    double prob(const std::string& from, const std::string& to) const;
};

struct StationaryVector {
    std::vector<std::string> states;
    Eigen::VectorXd nu;

    double at(const std::string& id) const;
};

/// One closed heart->capillary->heart circuit.
struct CirculationLoop {
    std::string capillary;        // loop id (capillary state)
    std::vector<std::string> representative_path;  // most probable arterial path
    double probability = 0.0;     // of entering this loop from the left heart
    double travel_time_s = 0.0;   // expected time around the loop
};

using PathSpec = std::vector<std::string>;

/// Raw per-bifurcation weights, keyed (parent id, child id).
using BifurcationWeights = std::map<std::pair<std::string, std::string>, double>;

/// Build the row-stochastic matrix. Bifurcation rows take the given flow-ratio
/// weights (normalized so each row sums to exactly 1); single-successor rows
/// get probability 1 to their unique downstream state.
TransitionMatrix build_transition_matrix(const BifurcationWeights& weights,
                                         const VesselCatalog& catalog);

/// Power iteration with Aitken acceleration; tolerance 1e-12, cap 1e5 sweeps.
StationaryVector stationary_distribution(const TransitionMatrix& pi);

/// Product of consecutive transition entries along the path.
double path_probability(const TransitionMatrix& pi, const PathSpec& path);

/// Probability of reaching the gateway loop before revisiting the infection
/// loop, starting from the heart: p_G / (p_I + p_G).
double first_passage_probability(double p_gateway, double p_infection);

/// One loop per capillary; probabilities conditioned at the left heart
/// (heart_state), times summed over the full circuit back to the left heart.
std::vector<CirculationLoop> enumerate_loops(const TransitionMatrix& pi,
                                             const VesselCatalog& catalog,
                                             const std::string& heart_state = "S3");

// CSV export / import (state ids as headers).
void save_matrix(const TransitionMatrix& pi, const std::filesystem::path& path);
TransitionMatrix load_matrix(const std::filesystem::path& path);
void save_stationary(const StationaryVector& nu, const std::filesystem::path& path);
void save_loops(const std::vector<CirculationLoop>& loops, const std::filesystem::path& path);

}  // namespace bloodnet
