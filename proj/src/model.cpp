#include "gdis/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "gdis/common.hpp"

namespace gdis {

namespace {

std::vector<std::vector<int>> adjacency_lists(const Network& net) {
    std::vector<std::vector<int>> adj(net.node_count());
    for (int i = 0; i < net.node_count(); ++i) adj[i] = net.neighbors(i);
    return adj;
}

std::vector<double> flatten_features(const Network& net) {
    std::vector<double> x;
    x.reserve(static_cast<std::size_t>(net.node_count()) * net.feature_dim());
    for (const auto& row : net.features()) x.insert(x.end(), row.begin(), row.end());
    return x;
}

struct MeanStd {
    double mean = 0.0, sd = 1.0;
};

MeanStd stats_over(const std::vector<double>& v, const std::vector<int>& idx) {
    MeanStd s;
    if (idx.empty()) return s;
    double acc = 0.0;
    for (int i : idx) acc += v[i];
    s.mean = acc / idx.size();
    double var = 0.0;
    for (int i : idx) var += (v[i] - s.mean) * (v[i] - s.mean);
    s.sd = std::sqrt(var / idx.size());
    if (s.sd < 1e-8) s.sd = 1.0;
    return s;
}

std::vector<double> standardized(const std::vector<double>& v, double mean, double sd) {
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - mean) / sd;
    return out;
}

}  // namespace

GdisModel GdisModel::init(int feature_dim, const Hyperparams& hp) {
    if (feature_dim < 1) throw ValidationError("model needs a positive feature dimension");
    if (hp.hidden < 1) throw ValidationError("model needs a positive hidden size");
    GdisModel model;
    model.hp_ = hp;
    model.feature_dim_ = feature_dim;
    Rng rng = Rng(hp.seed).fork(11);
    model.att1_ = AttentionLayer::init(feature_dim, hp.hidden, rng, hp.leaky_slope);
    model.att2_ = AttentionLayer::init(hp.hidden, hp.hidden, rng, hp.leaky_slope);
    model.head1_ = DenseLayer::init(hp.hidden + 3, hp.hidden, rng, "head1");
    model.head2_ = DenseLayer::init(hp.hidden, hp.hidden, rng, "head2");
    model.head3_ = DenseLayer::init(hp.hidden, 1, rng, "head3");
    return model;
}

std::vector<Tensor> GdisModel::parameters() const {
    std::vector<Tensor> params;
    for (const auto& layer : {att1_, att2_})
        for (const auto& p : layer.parameters()) params.push_back(p);
    for (const auto& layer : {head1_, head2_, head3_})
        for (const auto& p : layer.parameters()) params.push_back(p);
    return params;
}

GdisModel::Forward GdisModel::forward(const Tensor& features,
                                      const std::vector<std::vector<int>>& adjacency,
                                      const std::vector<double>& treatments,
                                      const std::vector<double>& wt,
                                      const std::vector<double>& wy) const {
    const int m = features.rows();
    Tensor h1 = attention_forward(att1_, features, adjacency);
    Tensor h2 = attention_forward(att2_, h1, adjacency);

    Tensor t_col = Tensor::constant(treatments, m, 1);
    Tensor wt_col = Tensor::constant(standardized(wt, scaling.wt_mean, scaling.wt_std), m, 1);
    Tensor wy_col = Tensor::constant(standardized(wy, scaling.wy_mean, scaling.wy_std), m, 1);

    Tensor head_in = concat_cols({h2, t_col, wt_col, wy_col});
    Tensor a1 = elu(dense_forward(head1_, head_in));
    Tensor a2 = elu(dense_forward(head2_, a1));
    Tensor raw = dense_forward(head3_, a2);
    // Output calibration back to the outcome scale.
    Tensor pred = add_rowvec(scale(raw, scaling.y_std),
                             Tensor::constant({scaling.y_mean}, 1, 1));
    return {pred, h2};
}

std::vector<std::vector<double>> GdisModel::embed(const Network& net) const {
    Tensor x = Tensor::constant(flatten_features(net), net.node_count(), net.feature_dim());
    auto adj = adjacency_lists(net);
    // Detached layer copies keep this forward pass gradient-free.
    AttentionLayer a1{att1_.weight.detach(), att1_.attn_vector.detach(), hp_.leaky_slope};
    AttentionLayer a2{att2_.weight.detach(), att2_.attn_vector.detach(), hp_.leaky_slope};
    Tensor h2 = attention_forward(a2, attention_forward(a1, x, adj), adj);
    std::vector<std::vector<double>> emb(net.node_count(),
                                         std::vector<double>(hp_.hidden));
    for (int i = 0; i < net.node_count(); ++i)
        for (int c = 0; c < hp_.hidden; ++c) emb[i][c] = h2.at(i, c);
    return emb;
}

double GdisModel::head_value(const std::vector<double>& embedding, double t, double wt,
                             double wy) const {
    if (static_cast<int>(embedding.size()) != hp_.hidden)
        throw ValidationError("head_value: embedding size mismatch");
    std::vector<double> in(embedding);
    in.push_back(t);
    in.push_back((wt - scaling.wt_mean) / scaling.wt_std);
    in.push_back((wy - scaling.wy_mean) / scaling.wy_std);

    auto dense = [](const DenseLayer& layer, const std::vector<double>& v, bool act) {
        const int out_dim = layer.weight.cols();
        const int in_dim = layer.weight.rows();
        std::vector<double> out(out_dim);
        for (int j = 0; j < out_dim; ++j) {
            double acc = layer.bias.values()[j];
            for (int i = 0; i < in_dim; ++i) acc += v[i] * layer.weight.at(i, j);
            out[j] = act && acc <= 0.0 ? std::expm1(acc) : acc;
        }
        return out;
    };
    auto a1 = dense(head1_, in, true);
    auto a2 = dense(head2_, a1, true);
    auto raw = dense(head3_, a2, false);
    return raw[0] * scaling.y_std + scaling.y_mean;
}

TrainResult train(const Network& net, const ExposureSummary& exposures,
                  const Partition& part, const Hyperparams& hp) {
    if (!net.has_outcomes()) throw ValidationError("train: outcomes required");
    const int m = net.node_count();
    if (static_cast<int>(part.assignment.size()) != m)
        throw ValidationError("train: partition does not match the network");

    auto train_idx = part.indices_of(Part::Train);
    auto val_idx = part.indices_of(Part::Val);
    if (train_idx.empty()) throw ValidationError("train: empty train part");
    if (val_idx.empty()) val_idx = train_idx;  // degenerate split: validate on train

    const auto& wt = exposures.treatment_exposure();
    const auto& wy = exposures.contagion_exposure();
    const auto& y = net.outcomes();
    std::vector<double> treat(m);
    for (int i = 0; i < m; ++i) treat[i] = net.treatments()[i];

    TrainResult result;
    result.model = GdisModel::init(net.feature_dim(), hp);
    auto wt_stats = stats_over(wt, train_idx);
    auto wy_stats = stats_over(wy, train_idx);
    auto y_stats = stats_over(y, train_idx);
    result.model.scaling = {wt_stats.mean, wt_stats.sd, wy_stats.mean,
                            wy_stats.sd,   y_stats.mean, y_stats.sd};

    Tensor features = Tensor::constant(flatten_features(net), m, net.feature_dim());
    auto adjacency = adjacency_lists(net);
    Tensor y_train = gather_rows(Tensor::constant(y, m, 1), train_idx);

    // The feature kernel for the HSIC penalty is constant across epochs.
    std::vector<double> train_feature_kernel;
    if (hp.lambda_hsic > 0.0 && train_idx.size() >= 2) {
        std::vector<double> xt;
        xt.reserve(train_idx.size() * net.feature_dim());
        for (int i : train_idx) {
            const auto& row = net.feature_row(i);
            xt.insert(xt.end(), row.begin(), row.end());
        }
        train_feature_kernel = gaussian_kernel_values(
            xt, static_cast<int>(train_idx.size()), net.feature_dim());
    }

    auto params = result.model.parameters();
    AdamState adam;
    adam.lr = hp.lr;
    adam.init(params);

    std::vector<std::vector<double>> best_params;
    result.best_val_mse = std::numeric_limits<double>::infinity();
    int since_best = 0;

    for (int epoch = 0; epoch < hp.epochs; ++epoch) {
        for (auto& p : params) p.zero_grad();
        Tensor loss, hsic_term;
        GdisModel::Forward fwd;
        try {
            fwd = result.model.forward(features, adjacency, treat, wt, wy);
            Tensor diff = sub(gather_rows(fwd.predictions, train_idx), y_train);
            Tensor train_mse = mean(mul(diff, diff));
            if (!train_feature_kernel.empty()) {
                hsic_term = hsic_given_kernel(train_feature_kernel,
                                              static_cast<int>(train_idx.size()),
                                              gather_rows(fwd.embeddings, train_idx));
                loss = add(train_mse, scale(hsic_term, hp.lambda_hsic));
            } else {
                loss = train_mse;
            }
            loss.backward();
            adam_step(adam, params);
        } catch (const ComputeError& e) {
            throw ComputeError("training diverged at epoch " + std::to_string(epoch) +
                               " (last finite epoch " + std::to_string(epoch - 1) +
                               "): " + e.what());
        }

        LossRecord rec;
        rec.epoch = epoch;
        rec.hsic_value = hsic_term.defined() ? hsic_term.scalar_value() : 0.0;
        rec.total = loss.scalar_value();
        rec.train_mse = rec.total - hp.lambda_hsic * rec.hsic_value;
        double val_acc = 0.0;
        for (int i : val_idx) {
            double d = fwd.predictions.at(i, 0) - y[i];
            val_acc += d * d;
        }
        rec.val_mse = val_acc / val_idx.size();
        result.trace.push_back(rec);

        if (rec.val_mse < result.best_val_mse - 1e-12) {
            result.best_val_mse = rec.val_mse;
            result.best_epoch = epoch;
            since_best = 0;
            best_params.clear();
            for (const auto& p : params) best_params.push_back(p.values());
        } else if (++since_best >= hp.patience) {
            break;
        }
    }

    if (!best_params.empty())
        for (std::size_t i = 0; i < params.size(); ++i)
            params[i].mutable_values() = best_params[i];
    return result;
}

// ---- mediator ------------------------------------------------------------------

double MediatorModel::predict(double wt, const std::vector<double>& wx) const {
    if (coef.size() != wx.size() + 2)
        throw ValidationError("mediator: coefficient/feature size mismatch");
    double acc = coef[0] + coef[1] * wt;
    for (std::size_t c = 0; c < wx.size(); ++c) acc += coef[c + 2] * wx[c];
    return acc;
}

MediatorModel fit_mediator(const ExposureSummary& exposures, const Partition& part) {
    auto train_idx = part.indices_of(Part::Train);
    auto val_idx = part.indices_of(Part::Val);
    if (train_idx.empty()) throw ValidationError("fit_mediator: empty train part");
    if (!exposures.has_contagion())
        throw ValidationError("fit_mediator: contagion exposure missing");

    const auto& wt = exposures.treatment_exposure();
    const auto& wy = exposures.contagion_exposure();
    const auto& wx = exposures.feature_exposure();
    const int k = static_cast<int>(wx[0].size());
    const int n = static_cast<int>(train_idx.size());
    const int p = k + 2;

    Eigen::MatrixXd design(n, p);
    Eigen::VectorXd target(n);
    for (int r = 0; r < n; ++r) {
        int i = train_idx[r];
        design(r, 0) = 1.0;
        design(r, 1) = wt[i];
        for (int c = 0; c < k; ++c) design(r, c + 2) = wx[i][c];
        target(r) = wy[i];
    }

    MediatorModel med;
    Eigen::MatrixXd gram = design.transpose() * design;
    Eigen::VectorXd rhs = design.transpose() * target;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    Eigen::VectorXd beta;
    if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-10) {
        med.ridge_used = true;
        log_info("mediator design is near-singular; refitting with ridge penalty 1e-6");
        beta = (gram + 1e-6 * Eigen::MatrixXd::Identity(p, p)).ldlt().solve(rhs);
    } else {
        beta = ldlt.solve(rhs);
    }
    med.coef.assign(beta.data(), beta.data() + p);

    const auto& score_idx = val_idx.empty() ? train_idx : val_idx;
    double sse = 0.0, sst = 0.0, mean_y = 0.0;
    for (int i : score_idx) mean_y += wy[i];
    mean_y /= score_idx.size();
    for (int i : score_idx) {
        double pred = med.predict(wt[i], wx[i]);
        sse += (wy[i] - pred) * (wy[i] - pred);
        sst += (wy[i] - mean_y) * (wy[i] - mean_y);
    }
    med.val_r2 = sst > 0.0 ? 1.0 - sse / sst : 1.0;
    return med;
}

OutcomeFn model_outcome_fn(const GdisModel& model, const Network& net) {
    auto embeddings = std::make_shared<std::vector<std::vector<double>>>(model.embed(net));
    auto shared_model = std::make_shared<GdisModel>(model);
    return [embeddings, shared_model](int unit, double t, double wt, double wy) {
        return shared_model->head_value((*embeddings)[unit], t, wt, wy);
    };
}

MediatorFn mediator_fn(const MediatorModel& med, const ExposureSummary& exposures) {
    auto shared_med = std::make_shared<MediatorModel>(med);
    auto wx = std::make_shared<std::vector<std::vector<double>>>(exposures.feature_exposure());
    return [shared_med, wx](int unit, double wt_level) {
        return shared_med->predict(wt_level, (*wx)[unit]);
    };
}

EffectEstimates estimate_effects(const OutcomeFn& f, const MediatorFn& g, const Network& net,
                                 const ExposureSummary& exposures,
                                 const ExposureContrast& contrast) {
    const int m = net.node_count();
    EffectEstimates est;
    est.wt_alt.resize(m);
    est.wt_base.resize(m);
    for (int i = 0; i < m; ++i) {
        double reach = exposures.weight_row_sum(i);
        est.wt_alt[i] = contrast.all_treated_vs_none ? reach : contrast.level_alt;
        est.wt_base[i] = contrast.all_treated_vs_none ? 0.0 : contrast.level_base;
    }

    // Assumption-4 style diagnostics: contrast levels far outside the
    // observed exposure support make the plug-in extrapolate.
    {
        const auto& wt_obs = exposures.treatment_exposure();
        double lo = *std::min_element(wt_obs.begin(), wt_obs.end());
        double hi = *std::max_element(wt_obs.begin(), wt_obs.end());
        double q_lo = *std::min_element(est.wt_base.begin(), est.wt_base.end());
        double q_hi = *std::max_element(est.wt_alt.begin(), est.wt_alt.end());
        if (q_lo < lo - 1e-12 || q_hi > hi + 1e-12)
            log_info("contrast exposure levels [" + std::to_string(q_lo) + ", " +
                     std::to_string(q_hi) + "] extend beyond the observed support [" +
                     std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }

    const auto& wt_obs = exposures.treatment_exposure();
    const auto& wy_obs = exposures.contagion_exposure();
    est.pde.resize(m);
    est.pie.resize(m);
    est.ste.resize(m);
    est.total_peer.resize(m);
    est.y_alt_hat.resize(m);
    est.y_nested_hat.resize(m);
    est.y_base_hat.resize(m);
    for (int i = 0; i < m; ++i) {
        double t_i = net.treatments()[i];
        double med_alt = g(i, est.wt_alt[i]);
        double med_base = g(i, est.wt_base[i]);
        est.y_alt_hat[i] = f(i, t_i, est.wt_alt[i], med_alt);
        est.y_nested_hat[i] = f(i, t_i, est.wt_base[i], med_alt);
        est.y_base_hat[i] = f(i, t_i, est.wt_base[i], med_base);
        est.pde[i] = est.y_alt_hat[i] - est.y_nested_hat[i];
        est.pie[i] = est.y_nested_hat[i] - est.y_base_hat[i];
        est.ste[i] = f(i, 1.0, wt_obs[i], wy_obs[i]) - f(i, 0.0, wt_obs[i], wy_obs[i]);
        est.total_peer[i] = est.pde[i] + est.pie[i];
    }
    return est;
}

// ---- metrics --------------------------------------------------------------------

double mse(const std::vector<double>& pred, const std::vector<double>& truth) {
    if (pred.size() != truth.size())
        throw ValidationError("mse: length mismatch " + std::to_string(pred.size()) + " vs " +
                              std::to_string(truth.size()));
    if (pred.empty()) throw ValidationError("mse: empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        acc += (pred[i] - truth[i]) * (pred[i] - truth[i]);
    return acc / pred.size();
}

double mse_over(const std::vector<double>& pred, const std::vector<double>& truth,
                const std::vector<int>& idx) {
    if (pred.size() != truth.size()) throw ValidationError("mse_over: length mismatch");
    if (idx.empty()) throw ValidationError("mse_over: empty index set");
    double acc = 0.0;
    for (int i : idx) acc += (pred[i] - truth[i]) * (pred[i] - truth[i]);
    return acc / idx.size();
}

double pehe(const std::vector<double>& estimated, const std::vector<double>& truth) {
    return std::sqrt(mse(estimated, truth));
}

double pehe_over(const std::vector<double>& estimated, const std::vector<double>& truth,
                 const std::vector<int>& idx) {
    return std::sqrt(mse_over(estimated, truth, idx));
}

double mean_over(const std::vector<double>& values, const std::vector<int>& idx) {
    if (idx.empty()) throw ValidationError("mean_over: empty index set");
    double acc = 0.0;
    for (int i : idx) acc += values[i];
    return acc / idx.size();
}

// ---- flip-rate protocol -----------------------------------------------------------

std::vector<FlipRow> flip_rate_experiment(const OutcomeFn& f, const Network& net,
                                          const SimConfig& cfg,
                                          const std::vector<double>& noise,
                                          const Partition& part,
                                          const std::vector<double>& rates) {
    auto train_idx = part.indices_of(Part::Train);
    auto test_idx = part.indices_of(Part::Test);
    if (test_idx.empty()) test_idx = train_idx;

    std::vector<FlipRow> rows;
    for (std::size_t r = 0; r < rates.size(); ++r) {
        auto flip = flip_treatments(net, rates[r],
                                    splitmix64(cfg.seed ^ (0xf11b0000ULL + r)));
        auto sim = simulate_outcomes(flip.net, cfg, noise);
        auto exposures = compute_exposures(flip.net, cfg.smoothing_eps);

        std::vector<double> pred(flip.net.node_count());
        for (int i = 0; i < flip.net.node_count(); ++i)
            pred[i] = f(i, flip.net.treatments()[i], exposures.treatment_exposure()[i],
                        exposures.contagion_exposure()[i]);

        FlipRow row;
        row.rate = rates[r];
        row.flipped = static_cast<int>(flip.flipped.size());
        row.within_mse = mse_over(pred, sim.outcomes, train_idx);
        row.out_mse = mse_over(pred, sim.outcomes, test_idx);
        rows.push_back(row);
    }
    return rows;
}

std::string flip_rows_to_csv(const std::vector<FlipRow>& rows) {
    std::ostringstream ss;
    ss.precision(12);
    ss << "flip_rate,flipped_units,within_sample_mse,out_of_sample_mse\n";
    for (const auto& r : rows)
        ss << r.rate << ',' << r.flipped << ',' << r.within_mse << ',' << r.out_mse << '\n';
    return ss.str();
}

// ---- checkpoint -----------------------------------------------------------------

namespace {

nlohmann::json tensor_json(const Tensor& t) {
    nlohmann::json j;
    j["rows"] = t.rows();
    j["cols"] = t.cols();
    j["values"] = t.values();
    return j;
}

Tensor tensor_from_json(const nlohmann::json& j, const std::string& name) {
    return Tensor::parameter(j.at("values").get<std::vector<double>>(),
                             j.at("rows").get<int>(), j.at("cols").get<int>(), name);
}

}  // namespace

std::string GdisModel::to_json(const std::string& config_hash) const {
    nlohmann::json j;
    j["version"] = 1;
    j["config_hash"] = config_hash;
    j["feature_dim"] = feature_dim_;
    j["hyper"]["lr"] = hp_.lr;
    j["hyper"]["epochs"] = hp_.epochs;
    j["hyper"]["patience"] = hp_.patience;
    j["hyper"]["lambda_hsic"] = hp_.lambda_hsic;
    j["hyper"]["hidden"] = hp_.hidden;
    j["hyper"]["leaky_slope"] = hp_.leaky_slope;
    j["hyper"]["seed"] = hp_.seed;
    j["scaling"] = {{"wt_mean", scaling.wt_mean}, {"wt_std", scaling.wt_std},
                    {"wy_mean", scaling.wy_mean}, {"wy_std", scaling.wy_std},
                    {"y_mean", scaling.y_mean},   {"y_std", scaling.y_std}};
    j["params"]["att1.weight"] = tensor_json(att1_.weight);
    j["params"]["att1.vector"] = tensor_json(att1_.attn_vector);
    j["params"]["att2.weight"] = tensor_json(att2_.weight);
    j["params"]["att2.vector"] = tensor_json(att2_.attn_vector);
    j["params"]["head1.weight"] = tensor_json(head1_.weight);
    j["params"]["head1.bias"] = tensor_json(head1_.bias);
    j["params"]["head2.weight"] = tensor_json(head2_.weight);
    j["params"]["head2.bias"] = tensor_json(head2_.bias);
    j["params"]["head3.weight"] = tensor_json(head3_.weight);
    j["params"]["head3.bias"] = tensor_json(head3_.bias);
    return j.dump(2);
}

GdisModel GdisModel::from_json(const std::string& json_text) {
    nlohmann::json j = nlohmann::json::parse(json_text);
    if (j.at("version").get<int>() != 1)
        throw ValidationError("unsupported checkpoint version");
    GdisModel model;
    const auto& h = j.at("hyper");
    model.hp_.lr = h.at("lr").get<double>();
    model.hp_.epochs = h.at("epochs").get<int>();
    model.hp_.patience = h.at("patience").get<int>();
    model.hp_.lambda_hsic = h.at("lambda_hsic").get<double>();
    model.hp_.hidden = h.at("hidden").get<int>();
    model.hp_.leaky_slope = h.at("leaky_slope").get<double>();
    model.hp_.seed = h.at("seed").get<std::uint64_t>();
    model.feature_dim_ = j.at("feature_dim").get<int>();
    const auto& s = j.at("scaling");
    model.scaling = {s.at("wt_mean").get<double>(), s.at("wt_std").get<double>(),
                     s.at("wy_mean").get<double>(), s.at("wy_std").get<double>(),
                     s.at("y_mean").get<double>(),  s.at("y_std").get<double>()};
    const auto& p = j.at("params");
    model.att1_.weight = tensor_from_json(p.at("att1.weight"), "attn.weight.1");
    model.att1_.attn_vector = tensor_from_json(p.at("att1.vector"), "attn.vector.1");
    model.att1_.negative_slope = model.hp_.leaky_slope;
    model.att2_.weight = tensor_from_json(p.at("att2.weight"), "attn.weight.2");
    model.att2_.attn_vector = tensor_from_json(p.at("att2.vector"), "attn.vector.2");
    model.att2_.negative_slope = model.hp_.leaky_slope;
    model.head1_.weight = tensor_from_json(p.at("head1.weight"), "head1.weight");
    model.head1_.bias = tensor_from_json(p.at("head1.bias"), "head1.bias");
    model.head2_.weight = tensor_from_json(p.at("head2.weight"), "head2.weight");
    model.head2_.bias = tensor_from_json(p.at("head2.bias"), "head2.bias");
    model.head3_.weight = tensor_from_json(p.at("head3.weight"), "head3.weight");
    model.head3_.bias = tensor_from_json(p.at("head3.bias"), "head3.bias");
    return model;
}

}  // namespace gdis
