#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "groupvae/distributions.hpp"

namespace groupvae {

// Contiguous per-group slices of the latent vector, in group order.
struct LatentPartition {
  std::vector<int> sizes;

  int num_groups() const { return static_cast<int>(sizes.size()); }
  int latent_dim() const;
  int offset(int group) const;  // first latent index of the group's slice
  int width(int group) const { return sizes.at(group); }
  void validate() const;  // throws std::invalid_argument

  bool operator==(const LatentPartition&) const = default;
};

// Batch of factorized posteriors q(z|x) = prod_g q(z_g|x), stored as full
// mean / log-variance matrices with the partition describing group slices.
struct GroupedPosterior {
  LatentPartition partition;
  Eigen::MatrixXd mean;     // B x latent_dim
  Eigen::MatrixXd log_var;  // B x latent_dim, clamped

  int batch_size() const { return static_cast<int>(mean.rows()); }
  // Single-example, single-group marginal as a DiagGaussian.
  DiagGaussian group(int row, int g) const;
  void validate() const;
};

enum class Likelihood { kBernoulli, kGaussian };

// MLP encoder (obs -> 2*latent: mean and log-variance heads) and decoder
// (latent -> obs). Weight layout: row-vector activations, h' = relu(h*W + b).
struct ModelParams {
  std::vector<Eigen::MatrixXd> enc_w;
  std::vector<Eigen::MatrixXd> enc_b;  // 1 x fan_out each
  std::vector<Eigen::MatrixXd> dec_w;
  std::vector<Eigen::MatrixXd> dec_b;  // 1 x fan_out each
  LatentPartition partition;
  Likelihood likelihood = Likelihood::kBernoulli;
  int obs_dim = 0;

  int latent_dim() const { return partition.latent_dim(); }
  long long num_params() const;
  void validate() const;  // checks the layer shapes chain correctly
};

// Deterministic scaled-uniform (Glorot) initialization, biases zero.
ModelParams init_params(int obs_dim, const std::vector<int>& hidden_sizes,
                        const LatentPartition& partition, Likelihood likelihood,
                        std::uint64_t seed);

// Pure forward pass through the encoder; log-variances clamped.
GroupedPosterior encode(const ModelParams& p, const Eigen::MatrixXd& x);

// Pure forward pass through the decoder: Bernoulli logits or Gaussian means.
Eigen::MatrixXd decode(const ModelParams& p, const Eigen::MatrixXd& z);

// Expected observation under the likelihood: sigmoid of the logits for
// Bernoulli, the decoder output itself for Gaussian.
Eigen::MatrixXd reconstruction_mean(const ModelParams& p,
                                    const Eigen::MatrixXd& z);

// Per-example log p(x|z) of decoder outputs against the observations:
// Bernoulli: sum_d [x*logit - softplus(logit)]; Gaussian: unit-variance
// log-density of the residual.
Eigen::VectorXd log_likelihood(const ModelParams& p,
                               const Eigen::MatrixXd& decoded,
                               const Eigen::MatrixXd& x);

// All parameter arrays in a fixed order (encoder then decoder, weight then
// bias per layer); the mutable view backs in-place optimizer updates.
std::vector<Eigen::MatrixXd*> param_list(ModelParams& p);
std::vector<const Eigen::MatrixXd*> param_list(const ModelParams& p);

// Versioned checkpoint; load(save(p)) reproduces every parameter bitwise.
void save_checkpoint(const ModelParams& p, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

}  // namespace groupvae
