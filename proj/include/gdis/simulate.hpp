#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gdis/exposure.hpp"
#include "gdis/graph.hpp"

namespace gdis {

struct GraphModel {
    enum class Kind { ErdosRenyi, BarabasiAlbert };
    Kind kind = Kind::ErdosRenyi;
    double edge_prob = 0.01;  // Erdos-Renyi
    int attach = 2;           // Barabasi-Albert attachments per node
};

/// Generator configuration. Treatments follow a clipped logistic propensity in
/// own and neighbor features; outcomes follow
///   Y_i = beta_self T_i + beta_pde Wt_i + (beta_pie rho) Wy_i + g(X_i) + eps_i
/// with Wy resolved by damped fixed-point iteration over the network.
/// Empty coefficient vectors are drawn deterministically from the seed.
struct SimConfig {
    int node_count = 100;
    int feature_dim = 10;
    GraphModel graph;

    std::vector<double> propensity_feature_weights;
    std::vector<double> propensity_neighbor_weights;
    double propensity_feature_scale = 1.0;
    double propensity_neighbor_scale = 0.5;
    double propensity_intercept = 0.0;

    double beta_self = 2.0;
    double beta_pde = 1.0;
    double beta_pie = 0.5;
    std::vector<double> outcome_feature_weights;
    double outcome_feature_scale = 1.0;
    double quad_scale = 0.0;  // optional quadratic feature term
    double noise_scale = 1.0;

    double contagion_damping = 0.1;  // rho in [0, 1)
    double smoothing_eps = 1e-6;
    std::uint64_t seed = 1;

    void validate() const;
    std::string to_json() const;
    static SimConfig from_json(const std::string& json_text);
};

/// Copy of cfg with any empty coefficient vectors drawn from the seed.
SimConfig resolve_config(const SimConfig& cfg);

/// Deterministic graph + features + treatments; outcomes left pending.
Network generate_network(const SimConfig& cfg);

struct SimOutcome {
    std::vector<double> outcomes;
    std::vector<double> contagion;  // converged Wy per node
    std::vector<double> noise;
    int iterations = 0;
};

/// Simulates outcomes in place. Noise is drawn from the config seed; the
/// overload with an explicit noise vector reuses previous realizations
/// (counterfactual resimulation).
SimOutcome simulate_outcomes(Network& net, const SimConfig& cfg);
SimOutcome simulate_outcomes(Network& net, const SimConfig& cfg,
                             const std::vector<double>& noise);

/// Exposure contrast for group-level peer effects. The default compares
/// every neighbor treated against every neighbor untreated; scalar levels
/// must be attainable, i.e. inside [0, sum_j w_ij], for every node.
struct ExposureContrast {
    bool all_treated_vs_none = true;
    double level_base = 0.0;
    double level_alt = 0.0;
};

struct GroundTruth {
    std::vector<double> pde, pie, ste, total_peer;
    double avg_pde = 0, avg_pie = 0, avg_ste = 0, avg_total = 0;
    // Counterfactual outcome tables behind the effects.
    std::vector<double> y_alt;      // Y(wt', Wy(wt'))
    std::vector<double> y_nested;   // Y(wt,  Wy(wt'))
    std::vector<double> y_base;     // Y(wt,  Wy(wt))
    std::vector<double> y_treated;  // Y(T=1) at factual exposures
    std::vector<double> y_control;  // Y(T=0) at factual exposures
    std::vector<double> wt_alt, wt_base;  // forced exposure levels per node
    std::vector<double> wy_alt, wy_base;  // mediator levels per arm

    std::string to_json() const;
    static GroundTruth from_json(const std::string& json_text);
};

/// Per-unit potential outcomes by re-running the structural equations under
/// forced exposure levels, reusing the factual noise realizations.
GroundTruth ground_truth_effects(const Network& net, const SimConfig& cfg,
                                 const ExposureContrast& contrast);
GroundTruth ground_truth_effects(const Network& net, const SimConfig& cfg,
                                 const ExposureContrast& contrast,
                                 const std::vector<double>& noise);

struct FlipResult {
    Network net;                // treatments toggled, outcomes cleared
    std::vector<int> flipped;   // sorted node indices
};

/// Toggles the treatment of exactly round(rate * m) seeded-chosen nodes.
FlipResult flip_treatments(const Network& net, double rate, std::uint64_t seed);

}  // namespace gdis
