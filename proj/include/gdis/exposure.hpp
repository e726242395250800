#pragma once

#include <string>
#include <vector>

#include "gdis/graph.hpp"

namespace gdis {

/// A point on the probability simplex derived from one feature row.
struct FeatureDistribution {
    std::vector<double> probs;  // strictly positive, sums to 1 within 1e-9
    int dim() const { return static_cast<int>(probs.size()); }
};

/// Shift the row to be nonnegative (by the negative part of its minimum),
/// add the smoothing floor eps, and normalize. A row that is all-zero after
/// the shift (and eps == 0) yields the uniform distribution.
FeatureDistribution normalize_features(const std::vector<double>& row, double eps);

/// D(p || q) = sum_k p_k ln(p_k / q_k), in nats. Requires q strictly positive.
double kl_divergence(const FeatureDistribution& p, const FeatureDistribution& q);

/// w = 1 / (1 + D(p || q)); equals 1 iff p == q, always in (0, 1].
double influence_weight(const FeatureDistribution& p, const FeatureDistribution& q);

/// Influence weights w_ij for every adjacent pair (ego i, neighbor j) and the
/// weighted neighbor aggregates.
class ExposureSummary {
  public:
    /// w_ij; defined exactly for j in N(i).
    double weight(int i, int j) const;
    /// Weights aligned with net.neighbors(i).
    const std::vector<double>& weights_of(int i) const { return weights_[i]; }
    double weight_row_sum(int i) const { return row_sums_[i]; }
    double max_row_sum() const;

    const std::vector<double>& treatment_exposure() const { return w_t_; }   // W_t
    const std::vector<double>& contagion_exposure() const;                   // W_y
    const std::vector<std::vector<double>>& feature_exposure() const { return w_x_; }  // W_x

    bool has_contagion() const { return !w_y_.empty(); }
    int node_count() const { return static_cast<int>(weights_.size()); }

    /// Recomputes W_t against an arbitrary (possibly real-valued) treatment
    /// vector; also used to rebuild exposures after treatment flips.
    std::vector<double> aggregate_treatments(const std::vector<double>& t) const;
    /// Recomputes W_y against an outcome vector.
    std::vector<double> aggregate_outcomes(const std::vector<double>& y) const;

    std::string to_json() const;

    friend ExposureSummary compute_exposures(const Network& net, double eps);

  private:
    std::vector<std::vector<int>> neighbor_ids_;
    std::vector<std::vector<double>> weights_;
    std::vector<double> row_sums_;
    std::vector<double> w_t_;
    std::vector<double> w_y_;
    std::vector<std::vector<double>> w_x_;
};

/// Computes all pairwise influence weights and aggregates. W_t and W_x need
/// features and treatments; W_y is filled only when outcomes are present.
/// Isolated nodes get all-zero exposures.
ExposureSummary compute_exposures(const Network& net, double eps);

}  // namespace gdis
