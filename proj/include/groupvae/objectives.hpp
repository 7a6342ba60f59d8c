#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "groupvae/autodiff.hpp"
#include "groupvae/data.hpp"
#include "groupvae/model.hpp"

namespace groupvae {

enum class Objective { kPairedElbo, kGroupVae, kMlvae, kGvae, kBetaVae };

// Per-batch reparameterization noise, standard normal. eps_shared drives the
// shared-slice latent of combined posteriors (one draw used by both
// reconstructions); eps_x / eps_x_prime drive everything else.
struct NoiseBundle {
  Eigen::MatrixXd eps_x;
  Eigen::MatrixXd eps_x_prime;
  Eigen::MatrixXd eps_shared;
};

NoiseBundle make_noise(int batch, int latent_dim, std::uint64_t seed);

// All terms are batch means in nats. Composition by objective:
//   paired ELBO / GroupVAE: total = recon_x + recon_x_prime + kl_prior_x
//                                   + kl_prior_x_prime + gamma * kl_reg
//   MLVAE / GVAE:           total = recon_x + recon_x_prime
//                                   + beta * (kl_prior_x + kl_prior_x_prime)
//   beta-VAE:               total = recon_x + beta * kl_prior_x
struct LossBreakdown {
  double recon_x = 0.0;
  double recon_x_prime = 0.0;
  double kl_prior_x = 0.0;
  double kl_prior_x_prime = 0.0;
  double kl_reg = 0.0;
  double total = 0.0;
};

// Evaluates the configured loss on a paired minibatch. gamma_or_beta is the
// KL-regularizer weight for GroupVAE and the KL scale for the baselines.
LossBreakdown eval_loss(const ModelParams& p, Objective obj,
                        const PairedBatch& batch, double gamma_or_beta,
                        const NoiseBundle& noise);

// Same loss with gradients w.r.t. every parameter, aligned with param_list().
LossBreakdown loss_gradients(const ModelParams& p, Objective obj,
                             const PairedBatch& batch, double gamma_or_beta,
                             const NoiseBundle& noise,
                             std::vector<Eigen::MatrixXd>* grads);

// Named wrappers mirroring the individual objectives.
LossBreakdown paired_elbo_loss(const ModelParams& p, const Eigen::MatrixXd& x,
                               const Eigen::MatrixXd& x_prime,
                               const NoiseBundle& noise);
LossBreakdown groupvae_loss(const ModelParams& p, const PairedBatch& batch,
                            double gamma, const NoiseBundle& noise);
LossBreakdown mlvae_loss(const ModelParams& p, const PairedBatch& batch,
                         double beta, const NoiseBundle& noise);
LossBreakdown gvae_loss(const ModelParams& p, const PairedBatch& batch,
                        double beta, const NoiseBundle& noise);
LossBreakdown betavae_loss(const ModelParams& p, const Eigen::MatrixXd& x,
                           double beta, const NoiseBundle& noise);

// Batch-mean KL(q(z_g|x) || q(z_g|x')) on one group's slice, closed form.
double kl_reg_loss(const GroupedPosterior& qx, const GroupedPosterior& qx_prime,
                   int shared_group);

// Reusable pieces for graph construction (exposed for the training module).
namespace graph {

// One tracked tape leaf per parameter, aligned with param_list().
std::vector<ad::Value> make_leaves(ad::Tape& tape, const ModelParams& p);

struct LossNodes {
  ad::Value recon_x, recon_x_prime, kl_prior_x, kl_prior_x_prime, kl_reg,
      total;
};

// Builds the full loss graph for an objective on one batch. The returned
// nodes expose the breakdown terms; backward(total) yields gradients on the
// leaves.
LossNodes build_loss(ad::Tape& tape, const std::vector<ad::Value>& leaves,
                     const ModelParams& p, Objective obj,
                     const PairedBatch& batch, double gamma_or_beta,
                     const NoiseBundle& noise);

}  // namespace graph

}  // namespace groupvae
