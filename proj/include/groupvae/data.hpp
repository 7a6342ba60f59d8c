#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "groupvae/rng.hpp"

namespace groupvae {

// Underlying discrete factors of variation: names plus per-factor cardinality.
struct FactorSpec {
  std::vector<std::string> factor_names;
  std::vector<int> cardinalities;

  int num_factors() const { return static_cast<int>(cardinalities.size()); }
  long long grid_size() const;
  void validate() const;  // throws std::invalid_argument
};

// A partition of the factors into named, disjoint, covering groups.
struct GroupSpec {
  struct Group {
    std::string name;
    std::vector<int> factor_indices;
  };
  std::vector<Group> groups;

  int num_groups() const { return static_cast<int>(groups.size()); }
  void validate(const FactorSpec& spec) const;  // throws std::invalid_argument
};

// Full factor grid rendered to real-valued observations in [0,1].
struct FactorDataset {
  FactorSpec spec;
  GroupSpec group_spec;
  Eigen::MatrixXd observations;   // N x obs_dim
  Eigen::MatrixXi factor_values;  // N x num_factors
  std::uint64_t render_seed = 0;

  int size() const { return static_cast<int>(observations.rows()); }
  int obs_dim() const { return static_cast<int>(observations.cols()); }

  // Mixed-radix code of a row's factor values restricted to one group.
  // Ranges over [0, prod of the group's cardinalities).
  long long group_key(int row, int group) const;
  long long group_key_space(int group) const;

  // Row indices sharing each group-key, used by pair sampling.
  const std::vector<std::vector<int>>& matches(int group) const;
  void rebuild_match_index();

 private:
  std::vector<std::vector<std::vector<int>>> match_index_;  // [group][key]
};

struct PairedBatch {
  Eigen::MatrixXd x;        // B x obs_dim
  Eigen::MatrixXd x_prime;  // B x obs_dim
  std::vector<int> shared_group;
  std::vector<int> index_x;        // dataset rows backing x
  std::vector<int> index_x_prime;  // dataset rows backing x_prime

  int batch_size() const { return static_cast<int>(shared_group.size()); }
};

// Enumerates the full factor grid and renders every combination through a
// fixed random one-hot -> linear -> sigmoid map. Deterministic per seed and
// injective (verified at build time).
FactorDataset build_grid_dataset(const FactorSpec& spec,
                                 const GroupSpec& group_spec, int obs_dim,
                                 std::uint64_t render_seed);

// Weak supervision sampler: per pair, a uniform group g, a uniform x, and a
// uniform x' among all rows that agree with x on every factor in g. When
// allow_self is false, x' != x whenever another match exists.
PairedBatch sample_pair(const FactorDataset& ds, std::uint64_t rng_seed,
                        int batch, bool allow_self = true);

// Uniform rows without pairing (single-observation objectives).
std::vector<int> sample_rows(const FactorDataset& ds, std::uint64_t rng_seed,
                             int count);

// Biased sampler: draws rows with weight exp(-(s-x)^2 / (2 sigma^2)) on two
// designated binary factors, uniform over everything else. The pool overload
// restricts candidate rows (e.g. to a train split).
std::vector<int> sample_unfair(const FactorDataset& ds, int s_idx, int x_idx,
                               double sigma, std::uint64_t rng_seed, int count);
std::vector<int> sample_unfair(const FactorDataset& ds,
                               const std::vector<int>& pool, int s_idx,
                               int x_idx, double sigma, std::uint64_t rng_seed,
                               int count);

// Maps each factor value v to 1 if v >= threshold else 0; observations are
// untouched. Every threshold must leave at least one value on each side.
FactorDataset binarize_factors(const FactorDataset& ds,
                               const std::vector<int>& thresholds);

// Dataset restricted to the given rows (same spec and groups).
FactorDataset subset(const FactorDataset& ds, const std::vector<int>& rows);

// Versioned binary container; load(save(ds)) is bitwise exact.
void save_dataset(const FactorDataset& ds, const std::string& path);
FactorDataset load_dataset(const std::string& path);

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& m,
                            const std::vector<int>& rows);

}  // namespace groupvae
