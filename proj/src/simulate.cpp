#include "gdis/simulate.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "gdis/common.hpp"

namespace gdis {

namespace {

// Deterministic sub-stream tags.
constexpr std::uint64_t kGraphStream = 1;
constexpr std::uint64_t kFeatureStream = 2;
constexpr std::uint64_t kTreatStream = 3;
constexpr std::uint64_t kNoiseStream = 4;
constexpr std::uint64_t kCoefStream = 5;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

void SimConfig::validate() const {
    if (node_count < 2) throw ValidationError("sim config: node_count must be at least 2");
    if (feature_dim < 1) throw ValidationError("sim config: feature_dim must be positive");
    if (graph.kind == GraphModel::Kind::ErdosRenyi) {
        if (graph.edge_prob < 0.0 || graph.edge_prob > 1.0)
            throw ValidationError("sim config: edge probability must lie in [0, 1]");
    } else {
        if (graph.attach < 1 || graph.attach >= node_count)
            throw ValidationError("sim config: attach must lie in [1, node_count)");
    }
    if (contagion_damping < 0.0 || contagion_damping >= 1.0)
        throw ValidationError("sim config: contagion damping must lie in [0, 1)");
    if (noise_scale < 0.0) throw ValidationError("sim config: negative noise scale");
    if (smoothing_eps < 0.0) throw ValidationError("sim config: negative smoothing floor");
    auto check_dim = [&](const std::vector<double>& w, const char* what) {
        if (!w.empty() && static_cast<int>(w.size()) != feature_dim)
            throw ValidationError(std::string("sim config: ") + what + " has " +
                                  std::to_string(w.size()) + " entries for feature_dim " +
                                  std::to_string(feature_dim));
    };
    check_dim(propensity_feature_weights, "propensity feature weights");
    check_dim(propensity_neighbor_weights, "propensity neighbor weights");
    check_dim(outcome_feature_weights, "outcome feature weights");
}

SimConfig resolve_config(const SimConfig& cfg) {
    cfg.validate();
    SimConfig out = cfg;
    Rng coef = Rng(cfg.seed).fork(kCoefStream);
    auto draw = [&](std::vector<double>& w, double scale) {
        if (!w.empty()) return;
        w.resize(out.feature_dim);
        for (double& x : w) x = coef.normal(0.0, scale);
    };
    draw(out.propensity_feature_weights, cfg.propensity_feature_scale);
    draw(out.propensity_neighbor_weights, cfg.propensity_neighbor_scale);
    draw(out.outcome_feature_weights, cfg.outcome_feature_scale);
    return out;
}

namespace {

std::vector<std::pair<int, int>> erdos_renyi_edges(int m, double p, Rng& rng) {
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j)
            if (rng.bernoulli(p)) edges.emplace_back(i, j);
    return edges;
}

std::vector<std::pair<int, int>> barabasi_albert_edges(int m, int attach, Rng& rng) {
    // Seed clique on attach+1 nodes, then preferential attachment via the
    // repeated-endpoints urn.
    std::vector<std::pair<int, int>> edges;
    std::vector<int> urn;
    int seed_nodes = std::min(attach + 1, m);
    for (int i = 0; i < seed_nodes; ++i)
        for (int j = i + 1; j < seed_nodes; ++j) {
            edges.emplace_back(i, j);
            urn.push_back(i);
            urn.push_back(j);
        }
    for (int t = seed_nodes; t < m; ++t) {
        std::vector<int> chosen;
        while (static_cast<int>(chosen.size()) < attach) {
            int cand = urn[static_cast<std::size_t>(rng.integer(urn.size()))];
            if (std::find(chosen.begin(), chosen.end(), cand) == chosen.end())
                chosen.push_back(cand);
        }
        for (int c : chosen) {
            edges.emplace_back(c, t);
            urn.push_back(c);
            urn.push_back(t);
        }
    }
    return edges;
}

double feature_term(const SimConfig& cfg, const std::vector<double>& row) {
    double lin = dot(cfg.outcome_feature_weights, row);
    return lin + cfg.quad_scale * lin * lin;
}

/// Damped contagion fixed point: y = y0 + (beta_pie * rho) W y.
std::vector<double> solve_contagion(const std::vector<double>& y0,
                                    const ExposureSummary& exposures, double gamma,
                                    int* iterations) {
    std::vector<double> y = y0;
    for (int it = 1; it <= 1000; ++it) {
        auto wy = exposures.aggregate_outcomes(y);
        double change = 0.0;
        std::vector<double> next(y.size());
        for (std::size_t i = 0; i < y.size(); ++i) {
            next[i] = y0[i] + gamma * wy[i];
            change = std::max(change, std::abs(next[i] - y[i]));
        }
        y = std::move(next);
        if (change < 1e-8) {
            if (iterations) *iterations = it;
            return y;
        }
    }
    throw ComputeError("contagion iteration failed to converge within 1000 steps");
}

void check_contraction(const SimConfig& cfg, const ExposureSummary& exposures) {
    double bound = std::abs(cfg.beta_pie) * cfg.contagion_damping * exposures.max_row_sum();
    if (bound >= 0.95)
        throw ValidationError("contagion is not contractive: |beta_pie| * rho * max row sum = " +
                              std::to_string(bound) + " >= 0.95");
}

}  // namespace

Network generate_network(const SimConfig& raw) {
    SimConfig cfg = resolve_config(raw);
    Rng root(cfg.seed);
    Rng graph_rng = root.fork(kGraphStream);
    Rng feat_rng = root.fork(kFeatureStream);
    Rng treat_rng = root.fork(kTreatStream);

    auto edges = cfg.graph.kind == GraphModel::Kind::ErdosRenyi
                     ? erdos_renyi_edges(cfg.node_count, cfg.graph.edge_prob, graph_rng)
                     : barabasi_albert_edges(cfg.node_count, cfg.graph.attach, graph_rng);

    std::vector<std::vector<double>> features(cfg.node_count,
                                              std::vector<double>(cfg.feature_dim));
    for (auto& row : features)
        for (double& x : row) x = feat_rng.normal();

    Network net(cfg.node_count, std::move(edges), std::move(features));

    // Neighbor feature exposure drives the propensity; treatments are not
    // drawn yet, so aggregate against a zero vector.
    net.set_treatments(std::vector<int>(cfg.node_count, 0));
    auto exposures = compute_exposures(net, cfg.smoothing_eps);

    std::vector<int> treatments(cfg.node_count);
    for (int i = 0; i < cfg.node_count; ++i) {
        double logit = dot(cfg.propensity_feature_weights, net.feature_row(i)) +
                       dot(cfg.propensity_neighbor_weights, exposures.feature_exposure()[i]) +
                       cfg.propensity_intercept;
        double p = std::clamp(sigmoid(logit), 0.05, 0.95);
        treatments[i] = treat_rng.bernoulli(p) ? 1 : 0;
    }
    net.set_treatments(std::move(treatments));
    return net;
}

SimOutcome simulate_outcomes(Network& net, const SimConfig& raw) {
    SimConfig cfg = resolve_config(raw);
    Rng noise_rng = Rng(cfg.seed).fork(kNoiseStream);
    std::vector<double> noise(net.node_count());
    for (double& e : noise) e = noise_rng.normal(0.0, cfg.noise_scale);
    return simulate_outcomes(net, raw, noise);
}

SimOutcome simulate_outcomes(Network& net, const SimConfig& raw,
                             const std::vector<double>& noise) {
    SimConfig cfg = resolve_config(raw);
    if (!net.has_treatments()) throw ValidationError("simulate_outcomes: treatments missing");
    if (static_cast<int>(noise.size()) != net.node_count())
        throw ValidationError("simulate_outcomes: noise vector length mismatch");

    net.clear_outcomes();
    auto exposures = compute_exposures(net, cfg.smoothing_eps);
    check_contraction(cfg, exposures);

    const auto& wt = exposures.treatment_exposure();
    std::vector<double> y0(net.node_count());
    for (int i = 0; i < net.node_count(); ++i)
        y0[i] = cfg.beta_self * net.treatments()[i] + cfg.beta_pde * wt[i] +
                feature_term(cfg, net.feature_row(i)) + noise[i];

    SimOutcome out;
    out.noise = noise;
    double gamma = cfg.beta_pie * cfg.contagion_damping;
    out.outcomes = solve_contagion(y0, exposures, gamma, &out.iterations);
    out.contagion = exposures.aggregate_outcomes(out.outcomes);
    net.set_outcomes(out.outcomes);
    return out;
}

GroundTruth ground_truth_effects(const Network& net, const SimConfig& cfg,
                                 const ExposureContrast& contrast) {
    SimConfig resolved = resolve_config(cfg);
    Rng noise_rng = Rng(resolved.seed).fork(kNoiseStream);
    std::vector<double> noise(net.node_count());
    for (double& e : noise) e = noise_rng.normal(0.0, resolved.noise_scale);
    return ground_truth_effects(net, cfg, contrast, noise);
}

GroundTruth ground_truth_effects(const Network& net, const SimConfig& raw,
                                 const ExposureContrast& contrast,
                                 const std::vector<double>& noise) {
    SimConfig cfg = resolve_config(raw);
    if (!net.has_treatments())
        throw ValidationError("ground_truth_effects: treatments missing");
    const int m = net.node_count();
    if (static_cast<int>(noise.size()) != m)
        throw ValidationError("ground_truth_effects: noise vector length mismatch");

    auto exposures = compute_exposures(net, cfg.smoothing_eps);
    check_contraction(cfg, exposures);
    const double gamma = cfg.beta_pie * cfg.contagion_damping;

    GroundTruth gt;
    gt.wt_alt.resize(m);
    gt.wt_base.resize(m);
    for (int i = 0; i < m; ++i) {
        double reach = exposures.weight_row_sum(i);
        if (contrast.all_treated_vs_none) {
            gt.wt_alt[i] = reach;
            gt.wt_base[i] = 0.0;
        } else {
            for (double level : {contrast.level_base, contrast.level_alt})
                if (level < 0.0 || level > reach)
                    throw ValidationError(
                        "exposure level " + std::to_string(level) + " unreachable for node " +
                        std::to_string(i) + " (attainable range [0, " + std::to_string(reach) +
                        "])");
            gt.wt_alt[i] = contrast.level_alt;
            gt.wt_base[i] = contrast.level_base;
        }
    }

    // Shared unit-level terms: everything except the exposure channels.
    std::vector<double> base_term(m);
    for (int i = 0; i < m; ++i)
        base_term[i] = cfg.beta_self * net.treatments()[i] +
                       feature_term(cfg, net.feature_row(i)) + noise[i];

    auto solve_world = [&](const std::vector<double>& wt_forced) {
        std::vector<double> y0(m);
        for (int i = 0; i < m; ++i) y0[i] = base_term[i] + cfg.beta_pde * wt_forced[i];
        return solve_contagion(y0, exposures, gamma, nullptr);
    };

    gt.y_alt = solve_world(gt.wt_alt);
    gt.y_base = solve_world(gt.wt_base);
    gt.wy_alt = exposures.aggregate_outcomes(gt.y_alt);
    gt.wy_base = exposures.aggregate_outcomes(gt.y_base);

    gt.y_nested.resize(m);
    for (int i = 0; i < m; ++i)
        gt.y_nested[i] = base_term[i] + cfg.beta_pde * gt.wt_base[i] + gamma * gt.wy_alt[i];

    // Self-treatment arms hold the factual exposures fixed.
    std::vector<double> y_factual;
    if (net.has_outcomes()) {
        y_factual = net.outcomes();
    } else {
        const auto& wt = exposures.treatment_exposure();
        std::vector<double> y0(m);
        for (int i = 0; i < m; ++i) y0[i] = base_term[i] + cfg.beta_pde * wt[i];
        y_factual = solve_contagion(y0, exposures, gamma, nullptr);
    }
    auto wy_factual = exposures.aggregate_outcomes(y_factual);
    const auto& wt_factual = exposures.treatment_exposure();

    gt.y_treated.resize(m);
    gt.y_control.resize(m);
    gt.pde.resize(m);
    gt.pie.resize(m);
    gt.ste.resize(m);
    gt.total_peer.resize(m);
    for (int i = 0; i < m; ++i) {
        double shared = feature_term(cfg, net.feature_row(i)) + noise[i] +
                        cfg.beta_pde * wt_factual[i] + gamma * wy_factual[i];
        gt.y_treated[i] = cfg.beta_self * 1.0 + shared;
        gt.y_control[i] = shared;
        gt.pde[i] = gt.y_alt[i] - gt.y_nested[i];
        gt.pie[i] = gt.y_nested[i] - gt.y_base[i];
        gt.ste[i] = gt.y_treated[i] - gt.y_control[i];
        gt.total_peer[i] = gt.pde[i] + gt.pie[i];
    }
    auto avg = [m](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return s / m;
    };
    gt.avg_pde = avg(gt.pde);
    gt.avg_pie = avg(gt.pie);
    gt.avg_ste = avg(gt.ste);
    gt.avg_total = avg(gt.total_peer);
    return gt;
}

FlipResult flip_treatments(const Network& net, double rate, std::uint64_t seed) {
    if (rate < 0.0 || rate > 1.0)
        throw ValidationError("flip rate must lie in [0, 1], got " + std::to_string(rate));
    if (!net.has_treatments()) throw ValidationError("flip_treatments: treatments missing");
    const int m = net.node_count();
    const int flips = static_cast<int>(std::llround(rate * m));

    std::vector<int> order(m);
    for (int i = 0; i < m; ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);

    FlipResult res;
    res.flipped.assign(order.begin(), order.begin() + flips);
    std::sort(res.flipped.begin(), res.flipped.end());

    auto treatments = net.treatments();
    for (int i : res.flipped) treatments[i] = 1 - treatments[i];

    res.net = Network(m, net.edges(), net.features());
    res.net.set_treatments(std::move(treatments));
    return res;
}

// ---- serialization -----------------------------------------------------------

std::string SimConfig::to_json() const {
    nlohmann::json j;
    j["node_count"] = node_count;
    j["feature_dim"] = feature_dim;
    j["graph"]["model"] =
        graph.kind == GraphModel::Kind::ErdosRenyi ? "erdos_renyi" : "barabasi_albert";
    j["graph"]["edge_prob"] = graph.edge_prob;
    j["graph"]["attach"] = graph.attach;
    j["propensity"]["feature_weights"] = propensity_feature_weights;
    j["propensity"]["neighbor_weights"] = propensity_neighbor_weights;
    j["propensity"]["feature_scale"] = propensity_feature_scale;
    j["propensity"]["neighbor_scale"] = propensity_neighbor_scale;
    j["propensity"]["intercept"] = propensity_intercept;
    j["outcome"]["beta_self"] = beta_self;
    j["outcome"]["beta_pde"] = beta_pde;
    j["outcome"]["beta_pie"] = beta_pie;
    j["outcome"]["feature_weights"] = outcome_feature_weights;
    j["outcome"]["feature_scale"] = outcome_feature_scale;
    j["outcome"]["quad_scale"] = quad_scale;
    j["outcome"]["noise_scale"] = noise_scale;
    j["contagion_damping"] = contagion_damping;
    j["smoothing_eps"] = smoothing_eps;
    j["seed"] = seed;
    return j.dump(2);
}

SimConfig SimConfig::from_json(const std::string& json_text) {
    nlohmann::json j = nlohmann::json::parse(json_text);
    SimConfig cfg;
    auto get = [&](const nlohmann::json& node, const char* key, auto fallback) {
        using T = decltype(fallback);
        return node.contains(key) ? node.at(key).get<T>() : fallback;
    };
    cfg.node_count = get(j, "node_count", cfg.node_count);
    cfg.feature_dim = get(j, "feature_dim", cfg.feature_dim);
    if (j.contains("graph")) {
        const auto& g = j.at("graph");
        std::string model = get(g, "model", std::string("erdos_renyi"));
        if (model == "erdos_renyi")
            cfg.graph.kind = GraphModel::Kind::ErdosRenyi;
        else if (model == "barabasi_albert")
            cfg.graph.kind = GraphModel::Kind::BarabasiAlbert;
        else
            throw ValidationError("unknown graph model '" + model + "'");
        cfg.graph.edge_prob = get(g, "edge_prob", cfg.graph.edge_prob);
        cfg.graph.attach = get(g, "attach", cfg.graph.attach);
    }
    if (j.contains("propensity")) {
        const auto& p = j.at("propensity");
        cfg.propensity_feature_weights =
            get(p, "feature_weights", std::vector<double>{});
        cfg.propensity_neighbor_weights =
            get(p, "neighbor_weights", std::vector<double>{});
        cfg.propensity_feature_scale = get(p, "feature_scale", cfg.propensity_feature_scale);
        cfg.propensity_neighbor_scale = get(p, "neighbor_scale", cfg.propensity_neighbor_scale);
        cfg.propensity_intercept = get(p, "intercept", cfg.propensity_intercept);
    }
    if (j.contains("outcome")) {
        const auto& o = j.at("outcome");
        cfg.beta_self = get(o, "beta_self", cfg.beta_self);
        cfg.beta_pde = get(o, "beta_pde", cfg.beta_pde);
        cfg.beta_pie = get(o, "beta_pie", cfg.beta_pie);
        cfg.outcome_feature_weights = get(o, "feature_weights", std::vector<double>{});
        cfg.outcome_feature_scale = get(o, "feature_scale", cfg.outcome_feature_scale);
        cfg.quad_scale = get(o, "quad_scale", cfg.quad_scale);
        cfg.noise_scale = get(o, "noise_scale", cfg.noise_scale);
    }
    cfg.contagion_damping = get(j, "contagion_damping", cfg.contagion_damping);
    cfg.smoothing_eps = get(j, "smoothing_eps", cfg.smoothing_eps);
    if (!j.contains("seed"))
        throw ValidationError("sim config: seed is required (no wall-clock seeding)");
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.validate();
    return cfg;
}

std::string GroundTruth::to_json() const {
    nlohmann::json j;
    j["per_unit"]["pde"] = pde;
    j["per_unit"]["pie"] = pie;
    j["per_unit"]["ste"] = ste;
    j["per_unit"]["total_peer"] = total_peer;
    j["averages"]["pde"] = avg_pde;
    j["averages"]["pie"] = avg_pie;
    j["averages"]["ste"] = avg_ste;
    j["averages"]["total_peer"] = avg_total;
    j["tables"]["y_alt"] = y_alt;
    j["tables"]["y_nested"] = y_nested;
    j["tables"]["y_base"] = y_base;
    j["tables"]["y_treated"] = y_treated;
    j["tables"]["y_control"] = y_control;
    j["tables"]["wt_alt"] = wt_alt;
    j["tables"]["wt_base"] = wt_base;
    j["tables"]["wy_alt"] = wy_alt;
    j["tables"]["wy_base"] = wy_base;
    return j.dump(2);
}

GroundTruth GroundTruth::from_json(const std::string& json_text) {
    nlohmann::json j = nlohmann::json::parse(json_text);
    GroundTruth gt;
    const auto& pu = j.at("per_unit");
    gt.pde = pu.at("pde").get<std::vector<double>>();
    gt.pie = pu.at("pie").get<std::vector<double>>();
    gt.ste = pu.at("ste").get<std::vector<double>>();
    gt.total_peer = pu.at("total_peer").get<std::vector<double>>();
    const auto& av = j.at("averages");
    gt.avg_pde = av.at("pde").get<double>();
    gt.avg_pie = av.at("pie").get<double>();
    gt.avg_ste = av.at("ste").get<double>();
    gt.avg_total = av.at("total_peer").get<double>();
    const auto& tb = j.at("tables");
    gt.y_alt = tb.at("y_alt").get<std::vector<double>>();
    gt.y_nested = tb.at("y_nested").get<std::vector<double>>();
    gt.y_base = tb.at("y_base").get<std::vector<double>>();
    gt.y_treated = tb.at("y_treated").get<std::vector<double>>();
    gt.y_control = tb.at("y_control").get<std::vector<double>>();
    gt.wt_alt = tb.at("wt_alt").get<std::vector<double>>();
    gt.wt_base = tb.at("wt_base").get<std::vector<double>>();
    gt.wy_alt = tb.at("wy_alt").get<std::vector<double>>();
    gt.wy_base = tb.at("wy_base").get<std::vector<double>>();
    return gt;
}

}  // namespace gdis
