#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "groupvae/data.hpp"
#include "groupvae/model.hpp"

namespace groupvae {

enum class BinningMode { kEqualWidth, kEqualCount };

// Histogram mutual information between every latent dimension and every
// discrete factor, plus factor entropies. All values in nats.
struct MIMatrix {
  Eigen::MatrixXd values;          // latent_dim x num_factors
  Eigen::VectorXd factor_entropy;  // num_factors
  int sample_count = 0;
};

// Discretizes each latent dimension into `bins` bins (equal-width over the
// empirical range, or equal-count for rank-based binning) and estimates MI
// from the joint histogram. A constant latent dimension has MI 0.
MIMatrix estimate_mi(const Eigen::MatrixXd& latents,
                     const Eigen::MatrixXi& factors, int bins = 20,
                     BinningMode mode = BinningMode::kEqualWidth);

// Mutual information gap: mean over factors of the normalized gap between
// the highest and second-highest per-dimension MI. Factors with zero entropy
// are skipped. Argmax ties break toward the lowest dimension index.
double mig(const MIMatrix& mi);

struct GroupMIReport {
  Eigen::VectorXd group_entropy;  // per group, H of the joint factor variable
  Eigen::VectorXd mi_inside;     // max MI over dims in the group's slice
  Eigen::VectorXd mi_outside;    // max MI over dims outside the slice
  double group_mig = 0.0;
  double mig = 0.0;  // plain per-factor MIG on the same latents
};

// Group-level disentanglement score. For each group, the joint variable over
// its factors is compared against latent dimensions inside vs outside the
// group's designated slice:
//   score_i = |max_in - max_out| / H(g_i),  group_mig = mean_i score_i.
// sum_entropy replaces the joint entropy H(g_i) by the sum of the group's
// per-factor entropies.
GroupMIReport group_mig(const Eigen::MatrixXd& latents,
                        const Eigen::MatrixXi& factors,
                        const GroupSpec& group_spec,
                        const LatentPartition& partition, int bins = 20,
                        BinningMode mode = BinningMode::kEqualWidth,
                        bool sum_entropy = false);

// Fully enumerable discrete model: N equally likely data points, D latent
// dimensions, each with a categorical posterior row per point and a
// categorical prior row. Rows sum to 1.
struct CategoricalToy {
  std::vector<Eigen::MatrixXd> posteriors;  // N entries, each D x V
  Eigen::MatrixXd prior;                    // D x V, strictly positive

  void validate() const;  // also enforces the enumeration size guard
};

CategoricalToy random_categorical_toy(std::uint64_t seed, int n, int dims,
                                      int values);

struct DecompositionReport {
  double full_kl = 0.0;
  double index_code_mi = 0.0;
  double dimension_wise_kl = 0.0;
  double total_correlation = 0.0;
};

// Exact enumeration of E_n[KL(q(z|n)||p(z))] and its three-term split:
// index-code MI + total correlation + dimension-wise KL.
DecompositionReport kl_decomposition_check(const CategoricalToy& toy);

// |P(pred=1 | s=1) - P(pred=1 | s=0)|; both subgroups must be nonempty.
double demographic_parity(const std::vector<int>& predictions,
                          const std::vector<int>& sensitive);

// accuracy - mean(dps); an empty dp list returns the accuracy unchanged.
double fair_gap(double accuracy, const std::vector<double>& dps);

// Tab-separated table of the MI matrix, one row per latent dimension, with a
// trailing entropy row.
std::string mi_table_tsv(const MIMatrix& mi,
                         const std::vector<std::string>& factor_names);

}  // namespace groupvae
