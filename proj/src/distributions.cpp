#include "groupvae/distributions.hpp"

#include <cmath>
#include <stdexcept>

namespace groupvae {

namespace {

double clamped_var(double log_var) {
  return std::exp(std::clamp(log_var, kLogVarMin, kLogVarMax));
}

void check_same_dim(Eigen::Index a, Eigen::Index b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string(what) + ": dimension mismatch (" +
                                std::to_string(a) + " vs " + std::to_string(b) +
                                ")");
  }
}

}  // namespace

DiagGaussian::DiagGaussian(Eigen::VectorXd mean_in, Eigen::VectorXd log_var_in)
    : mean(std::move(mean_in)), log_var(std::move(log_var_in)) {
  if (mean.size() != log_var.size() || mean.size() < 1) {
    throw std::invalid_argument("DiagGaussian: mean and log_var must have equal length >= 1");
  }
  if (!mean.allFinite() || !log_var.allFinite()) {
    throw std::invalid_argument("DiagGaussian: parameters must be finite");
  }
}

Eigen::VectorXd DiagGaussian::variance() const {
  return log_var.unaryExpr([](double lv) { return clamped_var(lv); });
}

CategoricalDist::CategoricalDist(Eigen::VectorXd probs_in)
    : probs(std::move(probs_in)) {
  if (probs.size() < 1) {
    throw std::invalid_argument("CategoricalDist: empty support");
  }
  if ((probs.array() <= 0.0).any() || (probs.array() > 1.0).any()) {
    throw std::invalid_argument("CategoricalDist: probabilities must lie in (0, 1]");
  }
  if (std::abs(probs.sum() - 1.0) > 1e-9) {
    throw std::invalid_argument("CategoricalDist: probabilities must sum to 1");
  }
}

Eigen::VectorXd sample_reparam_gaussian(const DiagGaussian& d,
                                        const Eigen::VectorXd& noise) {
  check_same_dim(d.dim(), noise.size(), "sample_reparam_gaussian");
  Eigen::VectorXd sigma =
      d.log_var.unaryExpr([](double lv) { return std::sqrt(clamped_var(lv)); });
  return d.mean + sigma.cwiseProduct(noise);
}

double kl_gaussian(const DiagGaussian& p, const DiagGaussian& q) {
  check_same_dim(p.dim(), q.dim(), "kl_gaussian");
  double total = 0.0;
  for (Eigen::Index i = 0; i < p.dim(); ++i) {
    const double lvp = std::clamp(p.log_var[i], kLogVarMin, kLogVarMax);
    const double lvq = std::clamp(q.log_var[i], kLogVarMin, kLogVarMax);
    const double vp = std::exp(lvp);
    const double vq = std::exp(lvq);
    const double dm = p.mean[i] - q.mean[i];
    total += 0.5 * (lvq - lvp) + (vp + dm * dm) / (2.0 * vq) - 0.5;
  }
  return total;
}

double kl_gaussian_to_std_prior(const DiagGaussian& d) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < d.dim(); ++i) {
    const double lv = std::clamp(d.log_var[i], kLogVarMin, kLogVarMax);
    total += -0.5 * (1.0 + lv - d.mean[i] * d.mean[i] - std::exp(lv));
  }
  return total;
}

double kl_categorical(const CategoricalDist& p, const CategoricalDist& q) {
  check_same_dim(p.support(), q.support(), "kl_categorical");
  double total = 0.0;
  for (Eigen::Index i = 0; i < p.support(); ++i) {
    const double pi = std::max(p.probs[i], kProbFloor);
    const double qi = std::max(q.probs[i], kProbFloor);
    total += pi * std::log(pi / qi);
  }
  return total;
}

DiagGaussian product_of_gaussians(const DiagGaussian& a,
                                  const DiagGaussian& b) {
  check_same_dim(a.dim(), b.dim(), "product_of_gaussians");
  const Eigen::Index n = a.dim();
  Eigen::VectorXd mean(n), log_var(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double va = clamped_var(a.log_var[i]);
    const double vb = clamped_var(b.log_var[i]);
    const double v = va * vb / (va + vb);
    mean[i] = (a.mean[i] * vb + b.mean[i] * va) / (va + vb);
    log_var[i] = std::log(v);
  }
  return {std::move(mean), std::move(log_var)};
}

DiagGaussian average_gaussians(const DiagGaussian& a, const DiagGaussian& b) {
  check_same_dim(a.dim(), b.dim(), "average_gaussians");
  const Eigen::Index n = a.dim();
  Eigen::VectorXd mean(n), log_var(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double va = clamped_var(a.log_var[i]);
    const double vb = clamped_var(b.log_var[i]);
    mean[i] = 0.5 * (a.mean[i] + b.mean[i]);
    log_var[i] = std::log(0.5 * (va + vb));
  }
  return {std::move(mean), std::move(log_var)};
}

Eigen::VectorXd gumbel_softmax_sample(const CategoricalDist& d,
                                      double temperature,
                                      const Eigen::VectorXd& uniform_noise) {
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("gumbel_softmax_sample: temperature must be positive");
  }
  check_same_dim(d.support(), uniform_noise.size(), "gumbel_softmax_sample");
  if ((uniform_noise.array() <= 0.0).any() ||
      (uniform_noise.array() >= 1.0).any()) {
    throw std::invalid_argument("gumbel_softmax_sample: noise must lie in (0, 1)");
  }
  const Eigen::Index k = d.support();
  Eigen::VectorXd logits(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const double g = -std::log(-std::log(uniform_noise[i]));
    logits[i] = (std::log(std::max(d.probs[i], kProbFloor)) + g) / temperature;
  }
  const double m = logits.maxCoeff();
  Eigen::VectorXd out = (logits.array() - m).exp();
  out /= out.sum();
  return out;
}

}  // namespace groupvae
