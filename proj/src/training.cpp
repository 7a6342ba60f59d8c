#include "groupvae/training.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "groupvae/rng.hpp"

namespace groupvae {

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size >= 1");
  if (iterations < 1) throw std::invalid_argument("TrainConfig: iterations >= 1");
  if (!(learning_rate >= 0.0)) {
    throw std::invalid_argument("TrainConfig: learning_rate >= 0");
  }
  if (adam_beta1 < 0.0 || adam_beta1 >= 1.0 || adam_beta2 < 0.0 ||
      adam_beta2 >= 1.0) {
    throw std::invalid_argument("TrainConfig: betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw std::invalid_argument("TrainConfig: adam_eps > 0");
  if (gamma_or_beta < 0.0) {
    throw std::invalid_argument("TrainConfig: gamma/beta >= 0");
  }
  if (eval_every < 1) throw std::invalid_argument("TrainConfig: eval_every >= 1");
}

void adam_update(const std::vector<Eigen::MatrixXd*>& params,
                 const std::vector<Eigen::MatrixXd>& grads, AdamState& state,
                 double lr, double beta1, double beta2, double eps) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument("adam_update: param/grad count mismatch");
  }
  if (state.m.empty()) {
    for (const Eigen::MatrixXd* p : params) {
      state.m.emplace_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
      state.v.emplace_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
    }
  }
  if (state.m.size() != params.size()) {
    throw std::invalid_argument("adam_update: moment shape mismatch");
  }
  ++state.t;
  const double corr1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double corr2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Eigen::MatrixXd& m = state.m[i];
    Eigen::MatrixXd& v = state.v[i];
    const Eigen::MatrixXd& g = grads[i];
    m = beta1 * m + (1.0 - beta1) * g;
    v = (beta2 * v.array() + (1.0 - beta2) * g.array().square()).matrix();
    const Eigen::ArrayXXd m_hat = m.array() / corr1;
    const Eigen::ArrayXXd v_hat = v.array() / corr2;
    params[i]->array() -= lr * m_hat / (v_hat.sqrt() + eps);
  }
}

TrainState init_train_state(const FactorDataset& ds, const ModelConfig& mc,
                            const TrainConfig& cfg) {
  cfg.validate();
  if (static_cast<int>(mc.partition_sizes.size()) != ds.group_spec.num_groups()) {
    throw std::invalid_argument(
        "init_train_state: latent partition and group spec disagree on the "
        "number of groups");
  }
  TrainState state;
  state.params = init_params(ds.obs_dim(), mc.hidden_sizes,
                             LatentPartition{mc.partition_sizes}, mc.likelihood,
                             cfg.seed);
  state.master_seed = cfg.seed;
  return state;
}

namespace {

PairedBatch assemble_batch(const FactorDataset& ds, const TrainConfig& cfg,
                           std::uint64_t pair_seed) {
  if (cfg.objective == Objective::kBetaVae) {
    const std::vector<int> rows = sample_rows(ds, pair_seed, cfg.batch_size);
    PairedBatch batch;
    batch.x = gather_rows(ds.observations, rows);
    batch.x_prime = batch.x;
    batch.shared_group.assign(rows.size(), 0);
    batch.index_x = rows;
    batch.index_x_prime = rows;
    return batch;
  }
  return sample_pair(ds, pair_seed, cfg.batch_size, cfg.pair_allow_self);
}

}  // namespace

LossBreakdown train_step(TrainState& state, const FactorDataset& ds,
                         const TrainConfig& cfg) {
  const std::uint64_t pair_seed = derive_seed(
      state.master_seed, Stream::kPairSampling, static_cast<std::uint64_t>(state.step));
  const std::uint64_t noise_seed = derive_seed(
      state.master_seed, Stream::kReparamNoise, static_cast<std::uint64_t>(state.step));

  const PairedBatch batch = assemble_batch(ds, cfg, pair_seed);
  const NoiseBundle noise =
      make_noise(cfg.batch_size, state.params.latent_dim(), noise_seed);

  std::vector<Eigen::MatrixXd> grads;
  const LossBreakdown loss = loss_gradients(
      state.params, cfg.objective, batch, cfg.gamma_or_beta, noise, &grads);

  if (!std::isfinite(loss.total)) {
    std::ostringstream msg;
    msg << "train_step: non-finite loss at step " << state.step
        << " (recon_x=" << loss.recon_x << ", recon_x_prime=" << loss.recon_x_prime
        << ", kl_prior_x=" << loss.kl_prior_x
        << ", kl_prior_x_prime=" << loss.kl_prior_x_prime
        << ", kl_reg=" << loss.kl_reg << ")";
    throw std::runtime_error(msg.str());
  }

  adam_update(param_list(state.params), grads, state.adam, cfg.learning_rate,
              cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  ++state.step;
  return loss;
}

TrainResult train_loop(const FactorDataset& ds, const ModelConfig& mc,
                       const TrainConfig& cfg, const EvalCallback& callback) {
  TrainResult result;
  result.state = init_train_state(ds, mc, cfg);
  for (int it = 0; it < cfg.iterations; ++it) {
    const LossBreakdown loss = train_step(result.state, ds, cfg);
    if ((it + 1) % cfg.eval_every == 0 || it + 1 == cfg.iterations) {
      TraceRow row{result.state.step, loss};
      result.trace.push_back(row);
      if (callback) callback(result.state, row);
    }
  }
  return result;
}

GradCheckReport gradient_check(ModelParams& p, Objective obj,
                               const PairedBatch& batch, double gamma_or_beta,
                               const NoiseBundle& noise, double h) {
  std::vector<Eigen::MatrixXd> analytic;
  loss_gradients(p, obj, batch, gamma_or_beta, noise, &analytic);

  GradCheckReport report;
  const std::vector<Eigen::MatrixXd*> params = param_list(p);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Eigen::MatrixXd& mat = *params[k];
    for (Eigen::Index i = 0; i < mat.rows(); ++i) {
      for (Eigen::Index j = 0; j < mat.cols(); ++j) {
        const double saved = mat(i, j);
        mat(i, j) = saved + h;
        const double fp = eval_loss(p, obj, batch, gamma_or_beta, noise).total;
        mat(i, j) = saved - h;
        const double fm = eval_loss(p, obj, batch, gamma_or_beta, noise).total;
        mat(i, j) = saved;
        const double fd = (fp - fm) / (2.0 * h);
        const double a = analytic[k](i, j);
        const double denom = std::max({std::abs(a), std::abs(fd), 1e-3});
        report.max_rel_err = std::max(report.max_rel_err, std::abs(a - fd) / denom);
        ++report.params_checked;
      }
    }
  }
  return report;
}

}  // namespace groupvae
