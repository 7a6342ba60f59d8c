#include "groupvae/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "groupvae/rng.hpp"

namespace groupvae {

namespace {

// Bin assignments for one latent dimension.
std::vector<int> discretize(const Eigen::VectorXd& column, int bins,
                            BinningMode mode) {
  const int n = static_cast<int>(column.size());
  std::vector<int> out(n, 0);
  if (mode == BinningMode::kEqualWidth) {
    const double lo = column.minCoeff();
    const double hi = column.maxCoeff();
    if (hi <= lo) return out;  // constant dimension: single bin
    const double scale = bins / (hi - lo);
    for (int i = 0; i < n; ++i) {
      int b = static_cast<int>((column(i) - lo) * scale);
      out[i] = std::min(b, bins - 1);
    }
    return out;
  }
  // Equal-count: bin by rank so any strictly monotone transform of the
  // column produces identical assignments (ties share a bin).
  std::vector<double> sorted(column.data(), column.data() + n);
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < n; ++i) {
    const auto pos =
        std::lower_bound(sorted.begin(), sorted.end(), column(i)) -
        sorted.begin();
    out[i] = static_cast<int>(pos * static_cast<long long>(bins) / n);
    out[i] = std::min(out[i], bins - 1);
  }
  return out;
}

double entropy_from_counts(const std::vector<double>& counts, double total) {
  double h = 0.0;
  for (double c : counts) {
    if (c > 0.0) {
      const double p = c / total;
      h -= p * std::log(p);
    }
  }
  return h;
}

// MI between two discrete assignments with known cardinalities.
double histogram_mi(const std::vector<int>& a, int ka, const std::vector<int>& b,
                    int kb) {
  const double n = static_cast<double>(a.size());
  std::vector<double> joint(static_cast<std::size_t>(ka) * kb, 0.0);
  std::vector<double> pa(ka, 0.0), pb(kb, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[static_cast<std::size_t>(a[i]) * kb + b[i]] += 1.0;
    pa[a[i]] += 1.0;
    pb[b[i]] += 1.0;
  }
  double mi = 0.0;
  for (int x = 0; x < ka; ++x) {
    for (int y = 0; y < kb; ++y) {
      const double j = joint[static_cast<std::size_t>(x) * kb + y];
      if (j > 0.0) {
        mi += (j / n) * std::log(j * n / (pa[x] * pb[y]));
      }
    }
  }
  return std::max(mi, 0.0);
}

std::vector<int> column_values(const Eigen::MatrixXi& factors, int k) {
  std::vector<int> v(factors.rows());
  for (Eigen::Index i = 0; i < factors.rows(); ++i) v[i] = factors(i, k);
  return v;
}

void check_mi_inputs(const Eigen::MatrixXd& latents,
                     const Eigen::MatrixXi& factors, int bins) {
  if (latents.rows() != factors.rows() || latents.rows() == 0) {
    throw std::invalid_argument("estimate_mi: row counts must match and be > 0");
  }
  if (bins < 2) throw std::invalid_argument("estimate_mi: bins >= 2");
  if (factors.minCoeff() < 0) {
    throw std::invalid_argument("estimate_mi: factor values must be >= 0");
  }
}

}  // namespace

MIMatrix estimate_mi(const Eigen::MatrixXd& latents,
                     const Eigen::MatrixXi& factors, int bins,
                     BinningMode mode) {
  check_mi_inputs(latents, factors, bins);
  const int latent_dim = static_cast<int>(latents.cols());
  const int num_factors = static_cast<int>(factors.cols());
  const int n = static_cast<int>(latents.rows());

  std::vector<std::vector<int>> latent_bins(latent_dim);
  for (int j = 0; j < latent_dim; ++j) {
    latent_bins[j] = discretize(latents.col(j), bins, mode);
  }

  MIMatrix out;
  out.values.resize(latent_dim, num_factors);
  out.factor_entropy.resize(num_factors);
  out.sample_count = n;
  for (int k = 0; k < num_factors; ++k) {
    const std::vector<int> vals = column_values(factors, k);
    const int card = *std::max_element(vals.begin(), vals.end()) + 1;
    std::vector<double> counts(card, 0.0);
    for (int v : vals) counts[v] += 1.0;
    out.factor_entropy(k) = entropy_from_counts(counts, n);
    for (int j = 0; j < latent_dim; ++j) {
      out.values(j, k) = histogram_mi(latent_bins[j], bins, vals, card);
    }
  }
  return out;
}

double mig(const MIMatrix& mi) {
  const int latent_dim = static_cast<int>(mi.values.rows());
  const int num_factors = static_cast<int>(mi.values.cols());
  if (latent_dim < 2) throw std::invalid_argument("mig: need >= 2 latent dims");
  double sum = 0.0;
  int used = 0;
  for (int k = 0; k < num_factors; ++k) {
    if (mi.factor_entropy(k) <= 0.0) continue;  // uninformative factor: skip
    int best = 0;
    for (int j = 1; j < latent_dim; ++j) {
      if (mi.values(j, k) > mi.values(best, k)) best = j;
    }
    double second = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < latent_dim; ++j) {
      if (j != best) second = std::max(second, mi.values(j, k));
    }
    sum += (mi.values(best, k) - second) / mi.factor_entropy(k);
    ++used;
  }
  return used > 0 ? sum / used : 0.0;
}

GroupMIReport group_mig(const Eigen::MatrixXd& latents,
                        const Eigen::MatrixXi& factors,
                        const GroupSpec& group_spec,
                        const LatentPartition& partition, int bins,
                        BinningMode mode, bool sum_entropy) {
  check_mi_inputs(latents, factors, bins);
  partition.validate();
  const int num_groups = group_spec.num_groups();
  if (num_groups != partition.num_groups()) {
    throw std::invalid_argument("group_mig: group count mismatch");
  }
  if (latents.cols() != partition.latent_dim()) {
    throw std::invalid_argument("group_mig: latent width mismatch");
  }
  const int latent_dim = static_cast<int>(latents.cols());
  const int n = static_cast<int>(latents.rows());

  std::vector<std::vector<int>> latent_bins(latent_dim);
  for (int j = 0; j < latent_dim; ++j) {
    latent_bins[j] = discretize(latents.col(j), bins, mode);
  }

  GroupMIReport report;
  report.group_entropy.resize(num_groups);
  report.mi_inside.resize(num_groups);
  report.mi_outside.resize(num_groups);

  double score_sum = 0.0;
  int used = 0;
  for (int g = 0; g < num_groups; ++g) {
    const std::vector<int>& idxs = group_spec.groups[g].factor_indices;
    // Joint variable over the group's factors, mixed-radix coded.
    std::vector<int> joint(n, 0);
    double entropy_sum = 0.0;
    for (int f : idxs) {
      const std::vector<int> vals = column_values(factors, f);
      const int card = *std::max_element(vals.begin(), vals.end()) + 1;
      for (int i = 0; i < n; ++i) joint[i] = joint[i] * card + vals[i];
      if (sum_entropy) {
        std::vector<double> counts(card, 0.0);
        for (int v : vals) counts[v] += 1.0;
        entropy_sum += entropy_from_counts(counts, n);
      }
    }
    const int joint_card = *std::max_element(joint.begin(), joint.end()) + 1;
    std::vector<double> joint_counts(joint_card, 0.0);
    for (int v : joint) joint_counts[v] += 1.0;
    const double h =
        sum_entropy ? entropy_sum : entropy_from_counts(joint_counts, n);
    report.group_entropy(g) = h;

    const int off = partition.offset(g);
    const int w = partition.width(g);
    double in_max = 0.0, out_max = 0.0;
    for (int j = 0; j < latent_dim; ++j) {
      const double v = histogram_mi(latent_bins[j], bins, joint, joint_card);
      if (j >= off && j < off + w) {
        in_max = std::max(in_max, v);
      } else {
        out_max = std::max(out_max, v);
      }
    }
    report.mi_inside(g) = in_max;
    report.mi_outside(g) = out_max;
    if (h > 0.0) {
      score_sum += std::abs(in_max - out_max) / h;
      ++used;
    }
  }
  report.group_mig = used > 0 ? score_sum / used : 0.0;
  report.mig = mig(estimate_mi(latents, factors, bins, mode));
  return report;
}

void CategoricalToy::validate() const {
  const int n = static_cast<int>(posteriors.size());
  if (n < 1 || n > 6) {
    throw std::invalid_argument("CategoricalToy: 1..6 data points");
  }
  const Eigen::Index dims = prior.rows();
  const Eigen::Index values = prior.cols();
  if (dims < 1 || dims > 3 || values < 2 || values > 4) {
    throw std::invalid_argument("CategoricalToy: <=3 dims of 2..4 values");
  }
  auto check_rows = [values](const Eigen::MatrixXd& m, bool strictly_positive) {
    for (Eigen::Index d = 0; d < m.rows(); ++d) {
      double sum = 0.0;
      for (Eigen::Index v = 0; v < values; ++v) {
        if (m(d, v) < 0.0 || (strictly_positive && m(d, v) <= 0.0)) {
          throw std::invalid_argument("CategoricalToy: invalid probability");
        }
        sum += m(d, v);
      }
      if (std::abs(sum - 1.0) > 1e-9) {
        throw std::invalid_argument("CategoricalToy: row does not sum to 1");
      }
    }
  };
  check_rows(prior, true);
  for (const auto& q : posteriors) {
    if (q.rows() != dims || q.cols() != values) {
      throw std::invalid_argument("CategoricalToy: posterior shape mismatch");
    }
    check_rows(q, false);
  }
}

CategoricalToy random_categorical_toy(std::uint64_t seed, int n, int dims,
                                      int values) {
  RngStream rng(seed);
  auto random_rows = [&](int r, int c) {
    Eigen::MatrixXd m(r, c);
    for (int i = 0; i < r; ++i) {
      double sum = 0.0;
      for (int j = 0; j < c; ++j) {
        m(i, j) = 0.05 + rng.uniform();
        sum += m(i, j);
      }
      m.row(i) /= sum;
    }
    return m;
  };
  CategoricalToy toy;
  toy.prior = random_rows(dims, values);
  for (int i = 0; i < n; ++i) toy.posteriors.push_back(random_rows(dims, values));
  toy.validate();
  return toy;
}

DecompositionReport kl_decomposition_check(const CategoricalToy& toy) {
  toy.validate();
  const int n = static_cast<int>(toy.posteriors.size());
  const int dims = static_cast<int>(toy.prior.rows());
  const int values = static_cast<int>(toy.prior.cols());
  long long states = 1;
  for (int d = 0; d < dims; ++d) states *= values;

  auto state_value = [values](long long s, int d) {
    for (int k = 0; k < d; ++k) s /= values;
    return static_cast<int>(s % values);
  };
  auto joint_prob = [&](const Eigen::MatrixXd& rows, long long s) {
    double p = 1.0;
    for (int d = 0; d < dims; ++d) p *= rows(d, state_value(s, d));
    return p;
  };

  // Aggregated posterior over the full joint state space and its marginals.
  std::vector<double> aggregated(states, 0.0);
  Eigen::MatrixXd marginal = Eigen::MatrixXd::Zero(dims, values);
  for (int i = 0; i < n; ++i) {
    for (long long s = 0; s < states; ++s) {
      aggregated[s] += joint_prob(toy.posteriors[i], s) / n;
    }
    marginal += toy.posteriors[i] / n;
  }

  DecompositionReport report;
  for (int i = 0; i < n; ++i) {
    for (long long s = 0; s < states; ++s) {
      const double q = joint_prob(toy.posteriors[i], s);
      if (q > 0.0) {
        report.full_kl += (q / n) * std::log(q / joint_prob(toy.prior, s));
        report.index_code_mi += (q / n) * std::log(q / aggregated[s]);
      }
    }
  }
  for (long long s = 0; s < states; ++s) {
    const double q = aggregated[s];
    if (q > 0.0) {
      report.total_correlation += q * std::log(q / joint_prob(marginal, s));
    }
  }
  for (int d = 0; d < dims; ++d) {
    for (int v = 0; v < values; ++v) {
      const double q = marginal(d, v);
      if (q > 0.0) {
        report.dimension_wise_kl += q * std::log(q / toy.prior(d, v));
      }
    }
  }
  return report;
}

double demographic_parity(const std::vector<int>& predictions,
                          const std::vector<int>& sensitive) {
  if (predictions.size() != sensitive.size() || predictions.empty()) {
    throw std::invalid_argument("demographic_parity: length mismatch");
  }
  double pos[2] = {0.0, 0.0};
  double count[2] = {0.0, 0.0};
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if ((sensitive[i] != 0 && sensitive[i] != 1) ||
        (predictions[i] != 0 && predictions[i] != 1)) {
      throw std::invalid_argument("demographic_parity: values must be 0/1");
    }
    count[sensitive[i]] += 1.0;
    pos[sensitive[i]] += predictions[i];
  }
  if (count[0] == 0.0 || count[1] == 0.0) {
    throw std::invalid_argument("demographic_parity: empty subgroup");
  }
  return std::abs(pos[1] / count[1] - pos[0] / count[0]);
}

double fair_gap(double accuracy, const std::vector<double>& dps) {
  if (accuracy < 0.0 || accuracy > 1.0) {
    throw std::invalid_argument("fair_gap: accuracy must lie in [0,1]");
  }
  if (dps.empty()) return accuracy;
  double sum = 0.0;
  for (double dp : dps) {
    if (dp < 0.0 || dp > 1.0) {
      throw std::invalid_argument("fair_gap: DP values must lie in [0,1]");
    }
    sum += dp;
  }
  return accuracy - sum / static_cast<double>(dps.size());
}

std::string mi_table_tsv(const MIMatrix& mi,
                         const std::vector<std::string>& factor_names) {
  if (static_cast<Eigen::Index>(factor_names.size()) != mi.values.cols()) {
    throw std::invalid_argument("mi_table_tsv: factor name count mismatch");
  }
  std::ostringstream out;
  out.precision(12);
  out << "latent_dim";
  for (const std::string& name : factor_names) out << '\t' << name;
  out << '\n';
  for (Eigen::Index j = 0; j < mi.values.rows(); ++j) {
    out << 'z' << j;
    for (Eigen::Index k = 0; k < mi.values.cols(); ++k) {
      out << '\t' << mi.values(j, k);
    }
    out << '\n';
  }
  out << "entropy";
  for (Eigen::Index k = 0; k < mi.factor_entropy.size(); ++k) {
    out << '\t' << mi.factor_entropy(k);
  }
  out << '\n';
  return out.str();
}

}  // namespace groupvae
