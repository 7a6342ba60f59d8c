#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <vector>

#include "groupvae/data.hpp"
#include "groupvae/model.hpp"
#include "groupvae/objectives.hpp"

namespace groupvae {

struct ModelConfig {
  std::vector<int> hidden_sizes = {64, 64};
  std::vector<int> partition_sizes = {5, 5};
  Likelihood likelihood = Likelihood::kBernoulli;
};

struct TrainConfig {
  Objective objective = Objective::kGroupVae;
  int batch_size = 64;
  int iterations = 20000;
  double learning_rate = 5e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double gamma_or_beta = 1.0;
  std::uint64_t seed = 0;
  int eval_every = 1000;
  bool pair_allow_self = true;

  void validate() const;  // throws std::invalid_argument
};

struct AdamState {
  std::vector<Eigen::MatrixXd> m;
  std::vector<Eigen::MatrixXd> v;
  long long t = 0;
};

// One Adam update with bias correction, in place over the parameter views.
void adam_update(const std::vector<Eigen::MatrixXd*>& params,
                 const std::vector<Eigen::MatrixXd>& grads, AdamState& state,
                 double lr, double beta1, double beta2, double eps);

struct TrainState {
  ModelParams params;
  AdamState adam;
  long long step = 0;
  std::uint64_t master_seed = 0;
};

TrainState init_train_state(const FactorDataset& ds, const ModelConfig& mc,
                            const TrainConfig& cfg);

// Samples one minibatch (pairs or single observations per the objective),
// computes the loss and applies one Adam step. Per-step noise is derived
// from (master_seed, purpose, step), so trajectories are reproducible.
// Throws std::runtime_error with a term breakdown on non-finite loss.
LossBreakdown train_step(TrainState& state, const FactorDataset& ds,
                         const TrainConfig& cfg);

struct TraceRow {
  long long step = 0;
  LossBreakdown loss;
};

struct TrainResult {
  TrainState state;
  std::vector<TraceRow> trace;
};

using EvalCallback = std::function<void(const TrainState&, const TraceRow&)>;

// Full deterministic training run; records the loss every eval_every steps
// (plus the final step) and forwards each record to the optional callback.
TrainResult train_loop(const FactorDataset& ds, const ModelConfig& mc,
                       const TrainConfig& cfg,
                       const EvalCallback& callback = nullptr);

struct GradCheckReport {
  double max_rel_err = 0.0;
  long long params_checked = 0;
};

// Central-finite-difference verification of the analytic gradient of the
// configured objective, parameter by parameter. Relative error uses
// max(|analytic|, |numeric|, 1e-3) as denominator.
GradCheckReport gradient_check(ModelParams& p, Objective obj,
                               const PairedBatch& batch, double gamma_or_beta,
                               const NoiseBundle& noise, double h = 1e-4);

}  // namespace groupvae
