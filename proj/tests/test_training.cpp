#include <doctest.h>

#include <Eigen/Core>
#include <cmath>
#include <vector>

#include "groupvae/data.hpp"
#include "groupvae/objectives.hpp"
#include "groupvae/training.hpp"

using namespace groupvae;

namespace {

FactorDataset tiny_dataset(std::uint64_t seed = 2) {
  FactorSpec s;
  s.factor_names = {"a", "b", "c"};
  s.cardinalities = {3, 2, 2};
  GroupSpec g;
  g.groups = {{"content", {0}}, {"style", {1, 2}}};
  return build_grid_dataset(s, g, 12, seed);
}

ModelConfig tiny_model_config() {
  ModelConfig mc;
  mc.hidden_sizes = {16};
  mc.partition_sizes = {2, 2};
  mc.likelihood = Likelihood::kBernoulli;
  return mc;
}

TrainConfig tiny_train_config(Objective obj, int iterations) {
  TrainConfig tc;
  tc.objective = obj;
  tc.batch_size = 8;
  tc.iterations = iterations;
  tc.learning_rate = 1e-3;
  tc.gamma_or_beta = 1.0;
  tc.seed = 0;
  tc.eval_every = 100;
  return tc;
}

}  // namespace

TEST_CASE("train config validation") {
  TrainConfig tc = tiny_train_config(Objective::kGroupVae, 100);
  tc.validate();
  tc.batch_size = 0;
  CHECK_THROWS_AS(tc.validate(), std::invalid_argument);
  tc = tiny_train_config(Objective::kGroupVae, 100);
  tc.learning_rate = -1.0;
  CHECK_THROWS_AS(tc.validate(), std::invalid_argument);
  tc = tiny_train_config(Objective::kGroupVae, 100);
  tc.adam_beta1 = 1.0;
  CHECK_THROWS_AS(tc.validate(), std::invalid_argument);
  tc = tiny_train_config(Objective::kGroupVae, 100);
  tc.gamma_or_beta = -0.5;
  CHECK_THROWS_AS(tc.validate(), std::invalid_argument);
  tc = tiny_train_config(Objective::kGroupVae, 0);
  CHECK_THROWS_AS(tc.validate(), std::invalid_argument);
}

TEST_CASE("adam takes a learning-rate-sized first step and minimizes a quadratic") {
  Eigen::MatrixXd theta(1, 3);
  theta << 1.0, -2.0, 0.5;
  const Eigen::MatrixXd theta0 = theta;
  AdamState state;
  const double lr = 0.05;

  {
    std::vector<Eigen::MatrixXd> grads = {theta};
    adam_update({&theta}, grads, state, lr, 0.9, 0.999, 1e-8);
  }
  CHECK(state.t == 1);
  // Bias-corrected Adam's first update is lr * sign(gradient) up to epsilon.
  for (int j = 0; j < 3; ++j) {
    const double expect = theta0(0, j) - lr * (theta0(0, j) > 0 ? 1.0 : -1.0);
    CHECK(theta(0, j) == doctest::Approx(expect).epsilon(1e-6));
  }

  for (int step = 1; step < 2000; ++step) {
    std::vector<Eigen::MatrixXd> grads = {theta};
    adam_update({&theta}, grads, state, lr, 0.9, 0.999, 1e-8);
  }
  CHECK(state.t == 2000);
  CHECK(theta.cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("adam with zero learning rate leaves parameters untouched") {
  Eigen::MatrixXd theta(2, 2);
  theta << 1, 2, 3, 4;
  const Eigen::MatrixXd before = theta;
  AdamState state;
  std::vector<Eigen::MatrixXd> grads = {Eigen::MatrixXd::Ones(2, 2)};
  adam_update({&theta}, grads, state, 0.0, 0.9, 0.999, 1e-8);
  CHECK(theta == before);
  CHECK(state.t == 1);
}

TEST_CASE("init_train_state requires matching partition and group counts") {
  const FactorDataset ds = tiny_dataset();
  ModelConfig mc = tiny_model_config();
  const TrainConfig tc = tiny_train_config(Objective::kGroupVae, 100);
  const TrainState state = init_train_state(ds, mc, tc);
  CHECK(state.step == 0);
  CHECK(state.params.obs_dim == ds.obs_dim());
  CHECK(state.params.latent_dim() == 4);

  mc.partition_sizes = {2, 2, 2};  // three slices, two factor groups
  CHECK_THROWS_AS(init_train_state(ds, mc, tc), std::invalid_argument);
}

TEST_CASE("train_step advances the counter and keeps losses finite") {
  const FactorDataset ds = tiny_dataset();
  const ModelConfig mc = tiny_model_config();
  const TrainConfig tc = tiny_train_config(Objective::kGroupVae, 50);
  TrainState state = init_train_state(ds, mc, tc);
  for (int i = 0; i < 5; ++i) {
    const LossBreakdown loss = train_step(state, ds, tc);
    CHECK(std::isfinite(loss.total));
    CHECK(loss.recon_x > 0.0);
  }
  CHECK(state.step == 5);
}

TEST_CASE("zero learning rate trains to bitwise-identical parameters") {
  const FactorDataset ds = tiny_dataset();
  const ModelConfig mc = tiny_model_config();
  TrainConfig tc = tiny_train_config(Objective::kGroupVae, 10);
  tc.learning_rate = 0.0;
  TrainState state = init_train_state(ds, mc, tc);
  const Eigen::MatrixXd w0 = state.params.enc_w[0];
  for (int i = 0; i < 10; ++i) train_step(state, ds, tc);
  CHECK(state.params.enc_w[0] == w0);
  CHECK(state.step == 10);
}

TEST_CASE("corrupted parameters raise instead of training on NaN") {
  const FactorDataset ds = tiny_dataset();
  const ModelConfig mc = tiny_model_config();
  const TrainConfig tc = tiny_train_config(Objective::kGroupVae, 10);
  TrainState state = init_train_state(ds, mc, tc);
  state.params.enc_w[0](0, 0) = std::nan("");
  CHECK_THROWS_AS(train_step(state, ds, tc), std::runtime_error);
}

TEST_CASE("train_loop traces on schedule and is deterministic") {
  const FactorDataset ds = tiny_dataset();
  const ModelConfig mc = tiny_model_config();
  TrainConfig tc = tiny_train_config(Objective::kGroupVae, 250);
  tc.eval_every = 100;

  int callbacks = 0;
  const TrainResult a = train_loop(ds, mc, tc, [&](const TrainState&, const TraceRow&) {
    ++callbacks;
  });
  REQUIRE(a.trace.size() == 3);  // steps 100, 200 and the final 250
  CHECK(a.trace[0].step == 100);
  CHECK(a.trace[1].step == 200);
  CHECK(a.trace[2].step == 250);
  CHECK(callbacks == 3);
  CHECK(a.state.step == 250);

  const TrainResult b = train_loop(ds, mc, tc);
  CHECK(a.state.params.enc_w[0] == b.state.params.enc_w[0]);
  CHECK(a.state.params.dec_w.back() == b.state.params.dec_w.back());
  CHECK(a.trace.back().loss.total == b.trace.back().loss.total);

  TrainConfig other = tc;
  other.seed = 1;
  const TrainResult c = train_loop(ds, mc, other);
  CHECK(a.state.params.enc_w[0] != c.state.params.enc_w[0]);
}

TEST_CASE("training reduces the loss on every objective") {
  const FactorDataset ds = tiny_dataset();
  const ModelConfig mc = tiny_model_config();
  // Held-out comparison batch with frozen noise, so before/after is exact.
  const PairedBatch probe = sample_pair(ds, 999, 48);
  for (Objective obj : {Objective::kGroupVae, Objective::kMlvae,
                        Objective::kGvae, Objective::kBetaVae}) {
    CAPTURE(static_cast<int>(obj));
    TrainConfig tc = tiny_train_config(obj, 1200);
    tc.eval_every = 400;
    tc.learning_rate = 2e-3;
    const TrainState init = init_train_state(ds, mc, tc);
    const NoiseBundle noise = make_noise(48, init.params.latent_dim(), 17);
    const double before =
        eval_loss(init.params, obj, probe, tc.gamma_or_beta, noise).total;
    const TrainResult r = train_loop(ds, mc, tc);
    const double after =
        eval_loss(r.state.params, obj, probe, tc.gamma_or_beta, noise).total;
    CHECK(after < before);
  }
}
