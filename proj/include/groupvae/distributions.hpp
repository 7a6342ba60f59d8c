#pragma once

#include <Eigen/Core>

namespace groupvae {

// log-variances are clamped to this range before exponentiation.
inline constexpr double kLogVarMin = -15.0;
inline constexpr double kLogVarMax = 15.0;
// Floor applied to categorical probabilities before taking logs.
inline constexpr double kProbFloor = 1e-12;
// Constant Gumbel-Softmax temperature used when none is configured.
inline constexpr double kDefaultGumbelTemperature = 0.67;

// Factorized Normal distribution parameterized by mean and log-variance.
struct DiagGaussian {
  Eigen::VectorXd mean;
  Eigen::VectorXd log_var;

  DiagGaussian(Eigen::VectorXd mean_in, Eigen::VectorXd log_var_in);

  Eigen::Index dim() const { return mean.size(); }
  Eigen::VectorXd variance() const;
};

// Categorical distribution over a finite support.
struct CategoricalDist {
  Eigen::VectorXd probs;

  explicit CategoricalDist(Eigen::VectorXd probs_in);

  Eigen::Index support() const { return probs.size(); }
};

// mean + sigma * noise, where noise is standard normal.
Eigen::VectorXd sample_reparam_gaussian(const DiagGaussian& d,
                                        const Eigen::VectorXd& noise);

// KL(p || q) for factorized Gaussians, in nats.
double kl_gaussian(const DiagGaussian& p, const DiagGaussian& q);

// KL(d || N(0, I)), in nats.
double kl_gaussian_to_std_prior(const DiagGaussian& d);

// KL(p || q) = sum_i p_i log(p_i / q_i), in nats.
double kl_categorical(const CategoricalDist& p, const CategoricalDist& q);

// Normalized product of two factorized Gaussians (precision-weighted).
DiagGaussian product_of_gaussians(const DiagGaussian& a, const DiagGaussian& b);

// Elementwise parameter average of two factorized Gaussians (not a mixture).
DiagGaussian average_gaussians(const DiagGaussian& a, const DiagGaussian& b);

// Relaxed one-hot sample: softmax((log pi + gumbel(noise)) / temperature).
// uniform_noise entries must lie in (0, 1).
Eigen::VectorXd gumbel_softmax_sample(const CategoricalDist& d,
                                      double temperature,
                                      const Eigen::VectorXd& uniform_noise);

}  // namespace groupvae
