#include "groupvae/objectives.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "groupvae/distributions.hpp"
#include "groupvae/rng.hpp"

namespace groupvae {

namespace {

using ad::Tape;
using ad::Value;
using Eigen::MatrixXd;

struct EncoderOut {
  Value mean;
  Value log_var;
};

EncoderOut encoder_graph(const std::vector<Value>& leaves,
                         const ModelParams& p, Value x) {
  Value h = x;
  const int layers = static_cast<int>(p.enc_w.size());
  for (int l = 0; l < layers; ++l) {
    Value pre = ad::add_rowvec(ad::matmul(h, leaves[2 * l]), leaves[2 * l + 1]);
    h = (l + 1 < layers) ? ad::relu(pre) : pre;
  }
  const int latent = p.latent_dim();
  return {ad::slice_cols(h, 0, latent),
          ad::clamp(ad::slice_cols(h, latent, latent), kLogVarMin, kLogVarMax)};
}

Value decoder_graph(const std::vector<Value>& leaves, const ModelParams& p,
                    Value z) {
  const int off = 2 * static_cast<int>(p.enc_w.size());
  Value h = z;
  const int layers = static_cast<int>(p.dec_w.size());
  for (int l = 0; l < layers; ++l) {
    Value pre = ad::add_rowvec(ad::matmul(h, leaves[off + 2 * l]),
                               leaves[off + 2 * l + 1]);
    h = (l + 1 < layers) ? ad::relu(pre) : pre;
  }
  return h;
}

// Batch-mean negative log-likelihood of decoder outputs against x_const.
Value recon_loss(Tape& tape, const ModelParams& p, Value decoded, Value x_const,
                 int batch) {
  if (p.likelihood == Likelihood::kBernoulli) {
    Value nll = ad::sub(ad::softplus(decoded), ad::mul(x_const, decoded));
    return ad::scale(ad::sum_all(nll), 1.0 / batch);
  }
  const double c =
      0.5 * std::log(2.0 * std::numbers::pi) * static_cast<double>(p.obs_dim);
  Value sq = ad::square(ad::sub(x_const, decoded));
  return ad::add_scalar(ad::scale(ad::sum_all(sq), 0.5 / batch), c);
}

// Batch-mean KL(N(mean, exp(log_var)) || N(0, I)).
Value kl_prior_from_log_var(Value mean, Value log_var, int batch) {
  Value inner = ad::sub(ad::add(ad::square(mean), ad::exp(log_var)),
                        ad::add_scalar(log_var, 1.0));
  return ad::scale(ad::sum_all(inner), 0.5 / batch);
}

// Batch-mean KL(N(mean, var) || N(0, I)) with variances given directly.
Value kl_prior_from_var(Value mean, Value var, int batch) {
  Value inner = ad::sub(ad::add(ad::square(mean), var),
                        ad::add_scalar(ad::log(var), 1.0));
  return ad::scale(ad::sum_all(inner), 0.5 / batch);
}

Value reparam_from_log_var(Value mean, Value log_var, Value eps) {
  return ad::add(mean, ad::mul(ad::exp(ad::scale(log_var, 0.5)), eps));
}

Value reparam_from_var(Value mean, Value var, Value eps) {
  return ad::add(mean, ad::mul(ad::exp(ad::scale(ad::log(var), 0.5)), eps));
}

// 1.0 on each pair's shared-group latent slice, 0.0 elsewhere.
MatrixXd shared_slice_mask(const LatentPartition& partition,
                           const std::vector<int>& shared_group) {
  MatrixXd mask = MatrixXd::Zero(shared_group.size(), partition.latent_dim());
  for (std::size_t r = 0; r < shared_group.size(); ++r) {
    const int g = shared_group[r];
    if (g < 0 || g >= partition.num_groups()) {
      throw std::invalid_argument("shared_group index out of range");
    }
    mask.row(r).segment(partition.offset(g), partition.width(g)).setOnes();
  }
  return mask;
}

// Batch-mean KL(q(z|x) || q(z|x')) restricted to masked entries.
Value kl_reg_graph(Value mask, const EncoderOut& q, const EncoderOut& qp,
                   int batch) {
  Value t1 = ad::scale(ad::sub(qp.log_var, q.log_var), 0.5);
  Value num = ad::add(ad::exp(q.log_var), ad::square(ad::sub(q.mean, qp.mean)));
  Value t2 = ad::div(num, ad::scale(ad::exp(qp.log_var), 2.0));
  Value per_dim = ad::add_scalar(ad::add(t1, t2), -0.5);
  return ad::scale(ad::sum_all(ad::mul(per_dim, mask)), 1.0 / batch);
}

void check_batch(const ModelParams& p, const PairedBatch& batch,
                 const NoiseBundle& noise, bool needs_prime) {
  const int b = static_cast<int>(batch.x.rows());
  if (b < 1) throw std::invalid_argument("loss: empty batch");
  if (batch.x.cols() != p.obs_dim) {
    throw std::invalid_argument("loss: observation width mismatch");
  }
  if (needs_prime &&
      (batch.x_prime.rows() != b || batch.x_prime.cols() != p.obs_dim)) {
    throw std::invalid_argument("loss: x/x' shape mismatch");
  }
  const int latent = p.latent_dim();
  auto ok = [&](const MatrixXd& m) {
    return m.rows() == b && m.cols() == latent;
  };
  if (!ok(noise.eps_x) || (needs_prime && !ok(noise.eps_x_prime))) {
    throw std::invalid_argument("loss: noise shape mismatch");
  }
}

}  // namespace

NoiseBundle make_noise(int batch, int latent_dim, std::uint64_t seed) {
  if (batch < 1 || latent_dim < 1) {
    throw std::invalid_argument("make_noise: positive dims required");
  }
  RngStream rng(seed);
  NoiseBundle n;
  auto fill = [&rng](MatrixXd& m, int r, int c) {
    m.resize(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) m(i, j) = rng.normal();
  };
  fill(n.eps_x, batch, latent_dim);
  fill(n.eps_x_prime, batch, latent_dim);
  fill(n.eps_shared, batch, latent_dim);
  return n;
}

namespace graph {

std::vector<Value> make_leaves(Tape& tape, const ModelParams& p) {
  std::vector<Value> leaves;
  for (const MatrixXd* m : param_list(p)) {
    leaves.push_back(tape.leaf(*m));
  }
  return leaves;
}

LossNodes build_loss(Tape& tape, const std::vector<Value>& leaves,
                     const ModelParams& p, Objective obj,
                     const PairedBatch& batch, double gamma_or_beta,
                     const NoiseBundle& noise) {
  if (gamma_or_beta < 0.0) {
    throw std::invalid_argument("loss: gamma/beta must be >= 0");
  }
  const bool paired = obj != Objective::kBetaVae;
  check_batch(p, batch, noise, paired);
  const int b = static_cast<int>(batch.x.rows());

  Value x_const = tape.constant(batch.x);
  Value zero = tape.constant_scalar(0.0);
  LossNodes nodes;
  nodes.kl_reg = zero;

  if (obj == Objective::kBetaVae) {
    EncoderOut q = encoder_graph(leaves, p, x_const);
    Value z = reparam_from_log_var(q.mean, q.log_var, tape.constant(noise.eps_x));
    nodes.recon_x = recon_loss(tape, p, decoder_graph(leaves, p, z), x_const, b);
    nodes.kl_prior_x = kl_prior_from_log_var(q.mean, q.log_var, b);
    nodes.recon_x_prime = zero;
    nodes.kl_prior_x_prime = zero;
    nodes.total = ad::add(nodes.recon_x, ad::scale(nodes.kl_prior_x, gamma_or_beta));
    return nodes;
  }

  Value xp_const = tape.constant(batch.x_prime);
  EncoderOut q = encoder_graph(leaves, p, x_const);
  EncoderOut qp = encoder_graph(leaves, p, xp_const);

  if (obj == Objective::kPairedElbo || obj == Objective::kGroupVae) {
    Value z = reparam_from_log_var(q.mean, q.log_var, tape.constant(noise.eps_x));
    Value zp = reparam_from_log_var(qp.mean, qp.log_var,
                                    tape.constant(noise.eps_x_prime));
    nodes.recon_x = recon_loss(tape, p, decoder_graph(leaves, p, z), x_const, b);
    nodes.recon_x_prime =
        recon_loss(tape, p, decoder_graph(leaves, p, zp), xp_const, b);
    nodes.kl_prior_x = kl_prior_from_log_var(q.mean, q.log_var, b);
    nodes.kl_prior_x_prime = kl_prior_from_log_var(qp.mean, qp.log_var, b);
    Value elbo = ad::add(ad::add(nodes.recon_x, nodes.recon_x_prime),
                         ad::add(nodes.kl_prior_x, nodes.kl_prior_x_prime));
    if (obj == Objective::kGroupVae) {
      Value mask =
          tape.constant(shared_slice_mask(p.partition, batch.shared_group));
      nodes.kl_reg = kl_reg_graph(mask, q, qp, b);
      // gamma == 0 must reduce to the paired ELBO exactly, so the weighted
      // term is only added when it can contribute.
      nodes.total = gamma_or_beta > 0.0
                        ? ad::add(elbo, ad::scale(nodes.kl_reg, gamma_or_beta))
                        : elbo;
    } else {
      nodes.total = elbo;
    }
    return nodes;
  }

  // MLVAE / GVAE: combined posterior on each pair's shared slice.
  const MatrixXd mask_m = shared_slice_mask(p.partition, batch.shared_group);
  Value mask = tape.constant(mask_m);
  Value inv_mask = tape.constant(MatrixXd((1.0 - mask_m.array()).matrix()));

  Value var = ad::exp(q.log_var);
  Value varp = ad::exp(qp.log_var);
  Value comb_mean, comb_var;
  if (obj == Objective::kMlvae) {
    Value denom = ad::add(var, varp);
    comb_var = ad::div(ad::mul(var, varp), denom);
    comb_mean = ad::div(
        ad::add(ad::mul(q.mean, varp), ad::mul(qp.mean, var)), denom);
  } else {  // kGvae: parameter averaging
    comb_var = ad::scale(ad::add(var, varp), 0.5);
    comb_mean = ad::scale(ad::add(q.mean, qp.mean), 0.5);
  }

  auto mixed = [&](Value combined, Value own) {
    return ad::add(ad::mul(mask, combined), ad::mul(inv_mask, own));
  };
  Value mean_x = mixed(comb_mean, q.mean);
  Value var_x = mixed(comb_var, var);
  Value mean_xp = mixed(comb_mean, qp.mean);
  Value var_xp = mixed(comb_var, varp);

  // The shared slice uses one common noise draw in both reconstructions.
  auto mixed_noise = [&](const MatrixXd& own) {
    return tape.constant(MatrixXd(
        (mask_m.array() * noise.eps_shared.array() +
         (1.0 - mask_m.array()) * own.array())
            .matrix()));
  };
  Value z_x = reparam_from_var(mean_x, var_x, mixed_noise(noise.eps_x));
  Value z_xp = reparam_from_var(mean_xp, var_xp, mixed_noise(noise.eps_x_prime));

  nodes.recon_x = recon_loss(tape, p, decoder_graph(leaves, p, z_x), x_const, b);
  nodes.recon_x_prime =
      recon_loss(tape, p, decoder_graph(leaves, p, z_xp), xp_const, b);
  nodes.kl_prior_x = kl_prior_from_var(mean_x, var_x, b);
  nodes.kl_prior_x_prime = kl_prior_from_var(mean_xp, var_xp, b);
  nodes.total = ad::add(
      ad::add(nodes.recon_x, nodes.recon_x_prime),
      ad::scale(ad::add(nodes.kl_prior_x, nodes.kl_prior_x_prime),
                gamma_or_beta));
  return nodes;
}

}  // namespace graph

namespace {

LossBreakdown read_nodes(const graph::LossNodes& nodes) {
  LossBreakdown out;
  out.recon_x = nodes.recon_x.scalar();
  out.recon_x_prime = nodes.recon_x_prime.scalar();
  out.kl_prior_x = nodes.kl_prior_x.scalar();
  out.kl_prior_x_prime = nodes.kl_prior_x_prime.scalar();
  out.kl_reg = nodes.kl_reg.scalar();
  out.total = nodes.total.scalar();
  return out;
}

}  // namespace

LossBreakdown eval_loss(const ModelParams& p, Objective obj,
                        const PairedBatch& batch, double gamma_or_beta,
                        const NoiseBundle& noise) {
  Tape tape;
  const std::vector<Value> leaves = graph::make_leaves(tape, p);
  return read_nodes(
      graph::build_loss(tape, leaves, p, obj, batch, gamma_or_beta, noise));
}

LossBreakdown loss_gradients(const ModelParams& p, Objective obj,
                             const PairedBatch& batch, double gamma_or_beta,
                             const NoiseBundle& noise,
                             std::vector<Eigen::MatrixXd>* grads) {
  Tape tape;
  const std::vector<Value> leaves = graph::make_leaves(tape, p);
  const graph::LossNodes nodes =
      graph::build_loss(tape, leaves, p, obj, batch, gamma_or_beta, noise);
  tape.backward(nodes.total);
  if (grads != nullptr) {
    grads->resize(leaves.size());
    for (std::size_t i = 0; i < leaves.size(); ++i) {
      (*grads)[i] = leaves[i].grad();
    }
  }
  return read_nodes(nodes);
}

LossBreakdown paired_elbo_loss(const ModelParams& p, const Eigen::MatrixXd& x,
                               const Eigen::MatrixXd& x_prime,
                               const NoiseBundle& noise) {
  PairedBatch batch;
  batch.x = x;
  batch.x_prime = x_prime;
  batch.shared_group.assign(x.rows(), 0);
  return eval_loss(p, Objective::kPairedElbo, batch, 0.0, noise);
}

LossBreakdown groupvae_loss(const ModelParams& p, const PairedBatch& batch,
                            double gamma, const NoiseBundle& noise) {
  return eval_loss(p, Objective::kGroupVae, batch, gamma, noise);
}

LossBreakdown mlvae_loss(const ModelParams& p, const PairedBatch& batch,
                         double beta, const NoiseBundle& noise) {
  return eval_loss(p, Objective::kMlvae, batch, beta, noise);
}

LossBreakdown gvae_loss(const ModelParams& p, const PairedBatch& batch,
                        double beta, const NoiseBundle& noise) {
  return eval_loss(p, Objective::kGvae, batch, beta, noise);
}

LossBreakdown betavae_loss(const ModelParams& p, const Eigen::MatrixXd& x,
                           double beta, const NoiseBundle& noise) {
  PairedBatch batch;
  batch.x = x;
  batch.x_prime = x;
  batch.shared_group.assign(x.rows(), 0);
  return eval_loss(p, Objective::kBetaVae, batch, beta, noise);
}

double kl_reg_loss(const GroupedPosterior& qx, const GroupedPosterior& qx_prime,
                   int shared_group) {
  qx.validate();
  qx_prime.validate();
  if (!(qx.partition == qx_prime.partition) ||
      qx.batch_size() != qx_prime.batch_size()) {
    throw std::invalid_argument("kl_reg_loss: posterior batches incompatible");
  }
  if (shared_group < 0 || shared_group >= qx.partition.num_groups()) {
    throw std::invalid_argument("kl_reg_loss: invalid group index");
  }
  double total = 0.0;
  for (int r = 0; r < qx.batch_size(); ++r) {
    total += kl_gaussian(qx.group(r, shared_group),
                         qx_prime.group(r, shared_group));
  }
  return total / qx.batch_size();
}

}  // namespace groupvae
