#include "groupvae/fairness.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "groupvae/autodiff.hpp"
#include "groupvae/metrics.hpp"
#include "groupvae/rng.hpp"
#include "groupvae/training.hpp"

namespace groupvae {

void FairTask::validate(const FactorDataset& ds) const {
  const int F = ds.spec.num_factors();
  if (target_factor < 0 || target_factor >= F) {
    throw std::invalid_argument("FairTask: target factor out of range");
  }
  if (sensitive_factors.empty()) {
    throw std::invalid_argument("FairTask: at least one sensitive factor");
  }
  const auto& groups = ds.group_spec.groups;
  if (sensitive_group < 0 || sensitive_group >= static_cast<int>(groups.size()) ||
      predictive_group < 0 || predictive_group >= static_cast<int>(groups.size())) {
    throw std::invalid_argument("FairTask: group index out of range");
  }
  const std::vector<int>& sg = groups[sensitive_group].factor_indices;
  for (int s : sensitive_factors) {
    if (s < 0 || s >= F) {
      throw std::invalid_argument("FairTask: sensitive factor out of range");
    }
    if (s == target_factor) {
      throw std::invalid_argument("FairTask: target cannot be sensitive");
    }
    if (std::find(sg.begin(), sg.end(), s) == sg.end()) {
      throw std::invalid_argument(
          "FairTask: sensitive factor outside the sensitive group");
    }
  }
  if (!(train_frac > 0.0) || !(val_frac >= 0.0) || train_frac + val_frac >= 1.0) {
    throw std::invalid_argument("FairTask: invalid split fractions");
  }
}

SplitIndices split_dataset(int n, double train_frac, double val_frac,
                           std::uint64_t seed) {
  if (n < 3) throw std::invalid_argument("split_dataset: n >= 3");
  if (!(train_frac > 0.0) || !(val_frac >= 0.0) || train_frac + val_frac >= 1.0) {
    throw std::invalid_argument("split_dataset: invalid fractions");
  }
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  RngStream rng(seed);
  for (int i = n - 1; i > 0; --i) {
    std::swap(order[i], order[rng.uniform_int(i + 1)]);
  }
  const int n_train = std::max(1, static_cast<int>(train_frac * n));
  const int n_val = std::max(1, static_cast<int>(val_frac * n));
  if (n_train + n_val >= n) {
    throw std::invalid_argument("split_dataset: empty test split");
  }
  SplitIndices split;
  split.train.assign(order.begin(), order.begin() + n_train);
  split.val.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  split.test.assign(order.begin() + n_train + n_val, order.end());
  return split;
}

Eigen::MatrixXd extract_representation(const ModelParams& p,
                                       const Eigen::MatrixXd& observations,
                                       int which_group) {
  if (which_group < 0 || which_group >= p.partition.num_groups()) {
    throw std::invalid_argument("extract_representation: invalid group");
  }
  const GroupedPosterior q = encode(p, observations);
  return q.mean.middleCols(p.partition.offset(which_group),
                           p.partition.width(which_group));
}

namespace {

namespace adg = groupvae::ad;

Eigen::VectorXd forward_logits(const std::vector<Eigen::MatrixXd>& ws,
                               const std::vector<Eigen::MatrixXd>& bs,
                               const Eigen::MatrixXd& input) {
  Eigen::MatrixXd h = input;
  for (std::size_t l = 0; l < ws.size(); ++l) {
    Eigen::MatrixXd pre = h * ws[l];
    pre.rowwise() += bs[l].row(0);
    h = (l + 1 < ws.size()) ? pre.cwiseMax(0.0) : pre;
  }
  return h.col(0);
}

}  // namespace

FairClassifier train_fair_classifier(const Eigen::MatrixXd& reps,
                                     const std::vector<int>& labels,
                                     const ClassifierConfig& cfg) {
  const int n = static_cast<int>(reps.rows());
  if (n == 0 || static_cast<int>(labels.size()) != n) {
    throw std::invalid_argument("train_fair_classifier: shape mismatch");
  }
  int positives = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) {
      throw std::invalid_argument("train_fair_classifier: labels must be 0/1");
    }
    positives += y;
  }
  if (positives == 0 || positives == n) {
    throw std::invalid_argument("train_fair_classifier: single-class labels");
  }
  if (cfg.iterations < 1 || cfg.batch_size < 1 || !(cfg.learning_rate > 0.0)) {
    throw std::invalid_argument("train_fair_classifier: invalid config");
  }

  RngStream init_rng(derive_seed(cfg.seed, Stream::kClassifier, 0));
  FairClassifier c;
  std::vector<int> dims = {static_cast<int>(reps.cols())};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(1);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const double bound = std::sqrt(6.0 / (dims[l] + dims[l + 1]));
    Eigen::MatrixXd w(dims[l], dims[l + 1]);
    for (int i = 0; i < dims[l]; ++i) {
      for (int j = 0; j < dims[l + 1]; ++j) {
        w(i, j) = bound * (2.0 * init_rng.uniform() - 1.0);
      }
    }
    c.w.push_back(std::move(w));
    c.b.push_back(Eigen::MatrixXd::Zero(1, dims[l + 1]));
  }

  AdamState adam;
  RngStream batch_rng(derive_seed(cfg.seed, Stream::kClassifier, 1));
  Eigen::MatrixXd y(n, 1);
  for (int i = 0; i < n; ++i) y(i, 0) = labels[i];

  std::vector<Eigen::MatrixXd*> params;
  for (std::size_t l = 0; l < c.w.size(); ++l) {
    params.push_back(&c.w[l]);
    params.push_back(&c.b[l]);
  }

  for (int it = 0; it < cfg.iterations; ++it) {
    const int bsz = std::min(cfg.batch_size, n);
    Eigen::MatrixXd bx(bsz, reps.cols());
    Eigen::MatrixXd by(bsz, 1);
    for (int i = 0; i < bsz; ++i) {
      const int r = batch_rng.uniform_int(n);
      bx.row(i) = reps.row(r);
      by(i, 0) = y(r, 0);
    }

    adg::Tape tape;
    std::vector<adg::Value> leaves;
    for (Eigen::MatrixXd* m : params) leaves.push_back(tape.leaf(*m));
    adg::Value h = tape.constant(bx);
    for (std::size_t l = 0; l < c.w.size(); ++l) {
      adg::Value pre =
          adg::add_rowvec(adg::matmul(h, leaves[2 * l]), leaves[2 * l + 1]);
      h = (l + 1 < c.w.size()) ? adg::relu(pre) : pre;
    }
    // mean over batch of [softplus(logit) - y*logit]
    adg::Value nll = adg::sub(adg::softplus(h), adg::mul(tape.constant(by), h));
    adg::Value loss = adg::scale(adg::sum_all(nll), 1.0 / bsz);
    tape.backward(loss);

    std::vector<Eigen::MatrixXd> grads;
    for (const adg::Value& leaf : leaves) grads.push_back(leaf.grad());
    adam_update(params, grads, adam, cfg.learning_rate, cfg.adam_beta1,
                cfg.adam_beta2, cfg.adam_eps);
  }
  return c;
}

Eigen::VectorXd classifier_logits(const FairClassifier& c,
                                  const Eigen::MatrixXd& reps) {
  if (c.w.empty() || reps.cols() != c.w.front().rows()) {
    throw std::invalid_argument("classifier_logits: width mismatch");
  }
  return forward_logits(c.w, c.b, reps);
}

std::vector<int> classify(const FairClassifier& c, const Eigen::MatrixXd& reps) {
  const Eigen::VectorXd logits = classifier_logits(c, reps);
  std::vector<int> out(logits.size());
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    out[i] = logits(i) > 0.0 ? 1 : 0;  // sigmoid(logit) > 0.5
  }
  return out;
}

FairReport evaluate_fairness(const FairClassifier& c,
                             const Eigen::MatrixXd& test_reps,
                             const std::vector<int>& labels,
                             const Eigen::MatrixXi& sensitive_values) {
  const int n = static_cast<int>(test_reps.rows());
  if (static_cast<int>(labels.size()) != n || sensitive_values.rows() != n ||
      n == 0) {
    throw std::invalid_argument("evaluate_fairness: shape mismatch");
  }
  const std::vector<int> preds = classify(c, test_reps);
  double correct = 0.0;
  for (int i = 0; i < n; ++i) {
    if (preds[i] == labels[i]) correct += 1.0;
  }
  FairReport report;
  report.accuracy = correct / n;
  for (Eigen::Index k = 0; k < sensitive_values.cols(); ++k) {
    std::vector<int> attr(n);
    for (int i = 0; i < n; ++i) attr[i] = sensitive_values(i, k);
    report.dp.push_back(demographic_parity(preds, attr));
  }
  report.fair_gap = fair_gap(report.accuracy, report.dp);
  return report;
}

}  // namespace groupvae
