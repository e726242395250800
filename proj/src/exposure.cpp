#include "gdis/exposure.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "gdis/common.hpp"

namespace gdis {

FeatureDistribution normalize_features(const std::vector<double>& row, double eps) {
    if (row.empty()) throw ValidationError("normalize_features: empty feature row");
    if (eps < 0.0) throw ValidationError("normalize_features: negative smoothing floor");
    const int k = static_cast<int>(row.size());
    double lo = *std::min_element(row.begin(), row.end());
    for (double v : row)
        if (!std::isfinite(v)) throw ValidationError("normalize_features: non-finite feature value");

    double shift = lo < 0.0 ? -lo : 0.0;
    FeatureDistribution dist;
    dist.probs.resize(k);
    double total = 0.0;
    for (int c = 0; c < k; ++c) {
        dist.probs[c] = row[c] + shift + eps;
        total += dist.probs[c];
    }
    if (total <= 0.0) {
        // All-zero after shift and eps == 0: fall back to uniform.
        std::fill(dist.probs.begin(), dist.probs.end(), 1.0 / k);
        return dist;
    }
    for (double& p : dist.probs) p /= total;
    return dist;
}

double kl_divergence(const FeatureDistribution& p, const FeatureDistribution& q) {
    if (p.dim() != q.dim())
        throw ValidationError("kl_divergence: dimension mismatch " + std::to_string(p.dim()) +
                              " vs " + std::to_string(q.dim()));
    double d = 0.0;
    for (int k = 0; k < p.dim(); ++k) {
        if (q.probs[k] <= 0.0)
            throw ValidationError("kl_divergence: q must be strictly positive");
        if (p.probs[k] > 0.0) d += p.probs[k] * std::log(p.probs[k] / q.probs[k]);
    }
    return d > 0.0 ? d : 0.0;
}

double influence_weight(const FeatureDistribution& p, const FeatureDistribution& q) {
    return 1.0 / (1.0 + kl_divergence(p, q));
}

double ExposureSummary::weight(int i, int j) const {
    if (i < 0 || i >= node_count())
        throw ValidationError("weight: node index " + std::to_string(i) + " out of range");
    const auto& ids = neighbor_ids_[i];
    auto it = std::lower_bound(ids.begin(), ids.end(), j);
    if (it == ids.end() || *it != j)
        throw ValidationError("weight: " + std::to_string(j) + " is not a neighbor of " +
                              std::to_string(i));
    return weights_[i][static_cast<std::size_t>(it - ids.begin())];
}

double ExposureSummary::max_row_sum() const {
    double best = 0.0;
    for (double s : row_sums_) best = std::max(best, s);
    return best;
}

const std::vector<double>& ExposureSummary::contagion_exposure() const {
    if (w_y_.empty())
        throw ValidationError("contagion exposure requested but outcomes were absent");
    return w_y_;
}

std::vector<double> ExposureSummary::aggregate_treatments(const std::vector<double>& t) const {
    if (t.size() != neighbor_ids_.size())
        throw ValidationError("aggregate_treatments: length mismatch");
    std::vector<double> out(t.size(), 0.0);
    for (std::size_t i = 0; i < t.size(); ++i)
        for (std::size_t n = 0; n < neighbor_ids_[i].size(); ++n)
            out[i] += weights_[i][n] * t[neighbor_ids_[i][n]];
    return out;
}

std::vector<double> ExposureSummary::aggregate_outcomes(const std::vector<double>& y) const {
    return aggregate_treatments(y);
}

ExposureSummary compute_exposures(const Network& net, double eps) {
    if (!net.has_treatments())
        throw ValidationError("compute_exposures: network has no treatments");
    const int m = net.node_count();
    const int k = net.feature_dim();

    std::vector<FeatureDistribution> dists(m);
    for (int i = 0; i < m; ++i) dists[i] = normalize_features(net.feature_row(i), eps);

    ExposureSummary s;
    s.neighbor_ids_.resize(m);
    s.weights_.resize(m);
    s.row_sums_.assign(m, 0.0);
    s.w_t_.assign(m, 0.0);
    s.w_x_.assign(m, std::vector<double>(k, 0.0));
    const bool with_outcomes = net.has_outcomes();
    if (with_outcomes) s.w_y_.assign(m, 0.0);

    for (int i = 0; i < m; ++i) {
        const auto& nbrs = net.neighbors(i);
        s.neighbor_ids_[i] = nbrs;
        s.weights_[i].resize(nbrs.size());
        for (std::size_t n = 0; n < nbrs.size(); ++n) {
            int j = nbrs[n];
            // Ego node i is the first argument of the divergence.
            double w = influence_weight(dists[i], dists[j]);
            s.weights_[i][n] = w;
            s.row_sums_[i] += w;
            s.w_t_[i] += w * net.treatments()[j];
            if (with_outcomes) s.w_y_[i] += w * net.outcomes()[j];
            const auto& xj = net.feature_row(j);
            for (int c = 0; c < k; ++c) s.w_x_[i][c] += w * xj[c];
        }
    }
    return s;
}

std::string ExposureSummary::to_json() const {
    nlohmann::json j;
    nlohmann::json weights = nlohmann::json::array();
    for (std::size_t i = 0; i < neighbor_ids_.size(); ++i)
        for (std::size_t n = 0; n < neighbor_ids_[i].size(); ++n)
            weights.push_back({i, neighbor_ids_[i][n], weights_[i][n]});
    j["weights"] = std::move(weights);
    j["treatment_exposure"] = w_t_;
    if (!w_y_.empty()) j["contagion_exposure"] = w_y_;
    j["feature_exposure"] = w_x_;
    return j.dump(2);
}

}  // namespace gdis
