#include <doctest.h>

#include <Eigen/Core>
#include <cmath>
#include <cstdio>
#include <vector>

#include "groupvae/model.hpp"
#include "groupvae/rng.hpp"

using namespace groupvae;

namespace {

// Identity decoder, no hidden layers: decode(z) == z. Lets likelihood values
// be checked against hand-computed numbers.
ModelParams identity_decoder_model(Likelihood lik) {
  LatentPartition part{{2, 2}};
  ModelParams p = init_params(4, {}, part, lik, 3);
  p.dec_w[0] = Eigen::MatrixXd::Identity(4, 4);
  p.dec_b[0].setZero();
  return p;
}

}  // namespace

TEST_CASE("latent partition offsets and widths") {
  LatentPartition part{{5, 5}};
  CHECK(part.latent_dim() == 10);
  CHECK(part.offset(0) == 0);
  CHECK(part.offset(1) == 5);
  CHECK(part.width(1) == 5);

  LatentPartition uneven{{2, 3, 4}};
  CHECK(uneven.latent_dim() == 9);
  CHECK(uneven.offset(2) == 5);
  CHECK_THROWS_AS(uneven.offset(3), std::invalid_argument);

  LatentPartition bad{{2, 0}};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CHECK_THROWS_AS(LatentPartition{{}}.validate(), std::invalid_argument);
}

TEST_CASE("initialization produces a valid glorot-bounded network") {
  LatentPartition part{{5, 5}};
  const ModelParams p = init_params(32, {64, 64}, part, Likelihood::kBernoulli, 0);
  p.validate();
  CHECK(p.obs_dim == 32);
  CHECK(p.latent_dim() == 10);
  REQUIRE(p.enc_w.size() == 3);  // 32 -> 64 -> 64 -> 20
  CHECK(p.enc_w[0].rows() == 32);
  CHECK(p.enc_w[2].cols() == 20);
  REQUIRE(p.dec_w.size() == 3);  // 10 -> 64 -> 64 -> 32
  CHECK(p.dec_w[0].rows() == 10);
  CHECK(p.dec_w[2].cols() == 32);
  CHECK(p.num_params() == 32 * 64 + 64 + 64 * 64 + 64 + 64 * 20 + 20 +
                              10 * 64 + 64 + 64 * 64 + 64 + 64 * 32 + 32);

  for (std::size_t l = 0; l < p.enc_w.size(); ++l) {
    CHECK(p.enc_b[l].isZero());
    const double limit =
        std::sqrt(6.0 / (p.enc_w[l].rows() + p.enc_w[l].cols()));
    CHECK(p.enc_w[l].cwiseAbs().maxCoeff() <= limit);
    CHECK(p.enc_w[l].cwiseAbs().maxCoeff() > 0.0);
  }
  for (std::size_t l = 0; l < p.dec_w.size(); ++l) {
    CHECK(p.dec_b[l].isZero());
    const double limit =
        std::sqrt(6.0 / (p.dec_w[l].rows() + p.dec_w[l].cols()));
    CHECK(p.dec_w[l].cwiseAbs().maxCoeff() <= limit);
  }

  const ModelParams q = init_params(32, {64, 64}, part, Likelihood::kBernoulli, 0);
  CHECK(q.enc_w[0] == p.enc_w[0]);
  const ModelParams r = init_params(32, {64, 64}, part, Likelihood::kBernoulli, 1);
  CHECK(r.enc_w[0] != p.enc_w[0]);
}

TEST_CASE("encode returns clamped grouped posteriors") {
  LatentPartition part{{2, 2}};
  ModelParams p = init_params(6, {8}, part, Likelihood::kBernoulli, 4);
  RngStream rng(12);
  Eigen::MatrixXd x(3, 6);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 6; ++j) x(i, j) = rng.uniform();
  }
  const GroupedPosterior q = encode(p, x);
  q.validate();
  CHECK(q.mean.rows() == 3);
  CHECK(q.mean.cols() == 4);
  CHECK(q.log_var.minCoeff() >= -15.0);
  CHECK(q.log_var.maxCoeff() <= 15.0);

  // Slicing matches block views of the full matrices.
  const DiagGaussian g1 = q.group(1, 1);
  CHECK(g1.mean == q.mean.row(1).segment(2, 2).transpose());
  CHECK(g1.log_var == q.log_var.row(1).segment(2, 2).transpose());

  // Extreme inputs saturate the log-variance clamp.
  p.enc_w[0] *= 1e6;
  const GroupedPosterior saturated = encode(p, x);
  CHECK(saturated.log_var.maxCoeff() == 15.0);
  CHECK(saturated.log_var.minCoeff() == -15.0);
}

TEST_CASE("encoding a batch equals encoding rows one at a time") {
  LatentPartition part{{3, 2}};
  const ModelParams p = init_params(7, {9, 5}, part, Likelihood::kBernoulli, 8);
  RngStream rng(77);
  Eigen::MatrixXd x(4, 7);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 7; ++j) x(i, j) = rng.uniform();
  }
  const GroupedPosterior q = encode(p, x);
  for (int i = 0; i < 4; ++i) {
    const GroupedPosterior qi = encode(p, x.row(i));
    CHECK((q.mean.row(i) - qi.mean.row(0)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((q.log_var.row(i) - qi.log_var.row(0)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("bernoulli log-likelihood matches a hand-computed value") {
  const ModelParams p = identity_decoder_model(Likelihood::kBernoulli);
  Eigen::MatrixXd z(1, 4);
  z << 0.5, -0.3, 0.2, -0.1;
  Eigen::MatrixXd x(1, 4);
  x << 1, 0, 1, 1;
  const Eigen::MatrixXd logits = decode(p, z);
  CHECK((logits - z).cwiseAbs().maxCoeff() < 1e-15);
  const Eigen::VectorXd ll = log_likelihood(p, logits, x);
  CHECK(ll(0) == doctest::Approx(-2.3709677581037965).epsilon(1e-12));

  const Eigen::MatrixXd mean = reconstruction_mean(p, z);
  CHECK(mean(0, 0) == doctest::Approx(0.6224593312018546).epsilon(1e-12));
  CHECK(mean.minCoeff() > 0.0);
  CHECK(mean.maxCoeff() < 1.0);
}

TEST_CASE("gaussian log-likelihood matches a hand-computed value") {
  const ModelParams p = identity_decoder_model(Likelihood::kGaussian);
  Eigen::MatrixXd z(1, 4);
  z << 0.5, -0.3, 0.2, -0.1;
  Eigen::MatrixXd x(1, 4);
  x << 1, 0, 1, 1;
  const Eigen::MatrixXd decoded = decode(p, z);
  const Eigen::VectorXd ll = log_likelihood(p, decoded, x);
  CHECK(ll(0) == doctest::Approx(-4.770754132818691).epsilon(1e-12));
  // Gaussian reconstruction mean is the decoder output itself.
  CHECK(reconstruction_mean(p, z) == decoded);
}

TEST_CASE("param_list walks encoder then decoder, weight then bias") {
  LatentPartition part{{2, 2}};
  ModelParams p = init_params(6, {8}, part, Likelihood::kBernoulli, 5);
  const std::vector<Eigen::MatrixXd*> list = param_list(p);
  REQUIRE(list.size() == 8);  // 2 encoder layers + 2 decoder layers, w and b
  CHECK(list[0] == &p.enc_w[0]);
  CHECK(list[1] == &p.enc_b[0]);
  CHECK(list[2] == &p.enc_w[1]);
  CHECK(list[3] == &p.enc_b[1]);
  CHECK(list[4] == &p.dec_w[0]);
  CHECK(list[5] == &p.dec_b[0]);
  CHECK(list[6] == &p.dec_w[1]);
  CHECK(list[7] == &p.dec_b[1]);

  const ModelParams& cp = p;
  const std::vector<const Eigen::MatrixXd*> clist = param_list(cp);
  REQUIRE(clist.size() == 8);
  for (int i = 0; i < 8; ++i) CHECK(clist[i] == list[i]);
}

TEST_CASE("checkpoints round-trip bitwise") {
  LatentPartition part{{3, 2}};
  const ModelParams p = init_params(7, {9, 5}, part, Likelihood::kGaussian, 13);
  const std::string path = "test_checkpoint_roundtrip.bin";
  save_checkpoint(p, path);
  const ModelParams r = load_checkpoint(path);
  CHECK(r.obs_dim == p.obs_dim);
  CHECK(r.partition == p.partition);
  CHECK(r.likelihood == p.likelihood);
  REQUIRE(r.enc_w.size() == p.enc_w.size());
  REQUIRE(r.dec_w.size() == p.dec_w.size());
  for (std::size_t l = 0; l < p.enc_w.size(); ++l) {
    CHECK(r.enc_w[l] == p.enc_w[l]);
    CHECK(r.enc_b[l] == p.enc_b[l]);
  }
  for (std::size_t l = 0; l < p.dec_w.size(); ++l) {
    CHECK(r.dec_w[l] == p.dec_w[l]);
    CHECK(r.dec_b[l] == p.dec_b[l]);
  }
  std::remove(path.c_str());

  const std::string bad = "test_checkpoint_bad.bin";
  {
    std::FILE* f = std::fopen(bad.c_str(), "wb");
    std::fputs("GVDSnot a checkpoint", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_checkpoint(bad), std::runtime_error);
  std::remove(bad.c_str());
}

TEST_CASE("model validation rejects broken shape chains") {
  LatentPartition part{{2, 2}};
  ModelParams p = init_params(6, {8}, part, Likelihood::kBernoulli, 6);
  p.validate();
  ModelParams broken = p;
  broken.enc_w[1] = Eigen::MatrixXd::Zero(8, 9);  // must end at 2 * latent
  CHECK_THROWS_AS(broken.validate(), std::invalid_argument);
  broken = p;
  broken.dec_b[0] = Eigen::MatrixXd::Zero(2, 8);
  CHECK_THROWS_AS(broken.validate(), std::invalid_argument);
}
