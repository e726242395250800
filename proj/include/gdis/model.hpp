#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gdis/exposure.hpp"
#include "gdis/graph.hpp"
#include "gdis/nn.hpp"
#include "gdis/simulate.hpp"

namespace gdis {

struct Hyperparams {
    double lr = 1e-3;
    int epochs = 300;
    int patience = 30;
    double lambda_hsic = 0.1;
    int hidden = 32;
    double leaky_slope = 0.2;
    std::uint64_t seed = 1;
};

/// Train-part statistics used to standardize the exposure inputs and to
/// calibrate the raw-scale output; frozen at training time so counterfactual
/// queries apply the identical affine maps.
struct InputScaling {
    double wt_mean = 0.0, wt_std = 1.0;
    double wy_mean = 0.0, wy_std = 1.0;
    double y_mean = 0.0, y_std = 1.0;
};

/// Two attention layers followed by a three-layer dense head over
/// [embedding || T || Wt || Wy].
class GdisModel {
  public:
    GdisModel() = default;
    static GdisModel init(int feature_dim, const Hyperparams& hp);

    struct Forward {
        Tensor predictions;  // m x 1, raw outcome scale
        Tensor embeddings;   // m x hidden (second attention layer output)
    };
    Forward forward(const Tensor& features, const std::vector<std::vector<int>>& adjacency,
                    const std::vector<double>& treatments, const std::vector<double>& wt,
                    const std::vector<double>& wy) const;

    std::vector<Tensor> parameters() const;

    /// Value-only second-layer embeddings for the (fixed) factual features.
    std::vector<std::vector<double>> embed(const Network& net) const;
    /// Value-only head evaluation for one unit with a fixed embedding.
    double head_value(const std::vector<double>& embedding, double t, double wt,
                      double wy) const;

    const Hyperparams& hyper() const { return hp_; }
    InputScaling scaling;

    std::string to_json(const std::string& config_hash) const;
    static GdisModel from_json(const std::string& json_text);

  private:
    Hyperparams hp_;
    int feature_dim_ = 0;
    AttentionLayer att1_, att2_;
    DenseLayer head1_, head2_, head3_;
};

struct LossRecord {
    int epoch = 0;
    double train_mse = 0.0;
    double hsic_value = 0.0;
    double total = 0.0;
    double val_mse = 0.0;
};

struct TrainResult {
    GdisModel model;
    std::vector<LossRecord> trace;
    int best_epoch = 0;
    double best_val_mse = 0.0;
};

/// Full-batch training of the combined squared-error + weighted HSIC
/// objective over the train part, early-stopped on validation MSE. Messages
/// pass over every edge; the loss sees only the part's nodes.
TrainResult train(const Network& net, const ExposureSummary& exposures,
                  const Partition& part, const Hyperparams& hp);

/// Linear mediator: Wy ~ [1, Wt, Wx], least squares on the train part with a
/// ridge fallback when the normal equations are near-singular.
struct MediatorModel {
    std::vector<double> coef;  // intercept, wt, then feature exposures
    bool ridge_used = false;
    double val_r2 = 0.0;

    double predict(double wt, const std::vector<double>& wx) const;
};

MediatorModel fit_mediator(const ExposureSummary& exposures, const Partition& part);

/// Outcome and mediator surfaces used by the plug-in estimator; the neural
/// model and the mediator regression provide them in production, test
/// oracles may substitute the true structural functions.
using OutcomeFn = std::function<double(int unit, double t, double wt, double wy)>;
using MediatorFn = std::function<double(int unit, double wt_level)>;

OutcomeFn model_outcome_fn(const GdisModel& model, const Network& net);
MediatorFn mediator_fn(const MediatorModel& med, const ExposureSummary& exposures);

struct EffectEstimates {
    std::vector<double> pde, pie, ste, total_peer;
    // Predicted counterfactual outcomes per arm.
    std::vector<double> y_alt_hat, y_nested_hat, y_base_hat;
    std::vector<double> wt_alt, wt_base;
};

/// Plug-in peer/self effect estimates per unit. The embedding (inside f)
/// stays at its factual value; only treatment and exposure inputs move.
EffectEstimates estimate_effects(const OutcomeFn& f, const MediatorFn& g, const Network& net,
                                 const ExposureSummary& exposures,
                                 const ExposureContrast& contrast);

double mse(const std::vector<double>& pred, const std::vector<double>& truth);
double mse_over(const std::vector<double>& pred, const std::vector<double>& truth,
                const std::vector<int>& idx);
/// Root-mean-square error between per-unit effect differences.
double pehe(const std::vector<double>& estimated, const std::vector<double>& truth);
double pehe_over(const std::vector<double>& estimated, const std::vector<double>& truth,
                 const std::vector<int>& idx);
double mean_over(const std::vector<double>& values, const std::vector<int>& idx);

struct FlipRow {
    double rate = 0.0;
    int flipped = 0;
    double within_mse = 0.0;
    double out_mse = 0.0;
};

/// Fig-4 style protocol: toggle treatments at each rate, resimulate outcomes
/// with the factual noise, recompute exposures, predict, and score.
std::vector<FlipRow> flip_rate_experiment(const OutcomeFn& f, const Network& net,
                                          const SimConfig& cfg,
                                          const std::vector<double>& noise,
                                          const Partition& part,
                                          const std::vector<double>& rates);

std::string flip_rows_to_csv(const std::vector<FlipRow>& rows);

}  // namespace gdis
