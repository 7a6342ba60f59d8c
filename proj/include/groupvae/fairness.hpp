#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "groupvae/data.hpp"
#include "groupvae/model.hpp"

namespace groupvae {

// Downstream fair-classification setup: predict a binary target factor from
// the latent slice of one group while the sensitive factors live in another.
struct FairTask {
  int target_factor = 0;
  std::vector<int> sensitive_factors;
  int sensitive_group = 0;   // group housing the sensitive factors
  int predictive_group = 1;  // group whose slice feeds the classifier
  double train_frac = 0.80;
  double val_frac = 0.05;

  void validate(const FactorDataset& ds) const;
};

struct SplitIndices {
  std::vector<int> train;
  std::vector<int> val;
  std::vector<int> test;
};

// Deterministic shuffled split of [0, n) into train/val/test fractions.
SplitIndices split_dataset(int n, double train_frac, double val_frac,
                           std::uint64_t seed);

// Posterior means of the selected group's latent slice; no sampling.
Eigen::MatrixXd extract_representation(const ModelParams& p,
                                       const Eigen::MatrixXd& observations,
                                       int which_group);

struct ClassifierConfig {
  std::vector<int> hidden = {128, 128, 128};
  int iterations = 1000;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
};

// ReLU MLP with a single output logit.
struct FairClassifier {
  std::vector<Eigen::MatrixXd> w;
  std::vector<Eigen::MatrixXd> b;  // 1 x fan_out each
};

// Minibatch Adam on the binary cross-entropy with logits; deterministic per
// cfg.seed. Throws std::invalid_argument when labels are single-class.
FairClassifier train_fair_classifier(const Eigen::MatrixXd& reps,
                                     const std::vector<int>& labels,
                                     const ClassifierConfig& cfg);

Eigen::VectorXd classifier_logits(const FairClassifier& c,
                                  const Eigen::MatrixXd& reps);

// Predicted probability thresholded at 0.5 (logit at 0).
std::vector<int> classify(const FairClassifier& c, const Eigen::MatrixXd& reps);

struct FairReport {
  double accuracy = 0.0;
  std::vector<double> dp;  // one entry per sensitive attribute column
  double fair_gap = 0.0;
};

// Accuracy, per-attribute demographic parity, and FairGap on a test set.
FairReport evaluate_fairness(const FairClassifier& c,
                             const Eigen::MatrixXd& test_reps,
                             const std::vector<int>& labels,
                             const Eigen::MatrixXi& sensitive_values);

}  // namespace groupvae
