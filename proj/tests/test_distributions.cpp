#include <doctest.h>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "groupvae/distributions.hpp"
#include "groupvae/rng.hpp"

using groupvae::CategoricalDist;
using groupvae::DiagGaussian;
using groupvae::RngStream;
using Eigen::VectorXd;

namespace {

VectorXd vec(std::initializer_list<double> xs) {
  VectorXd v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

DiagGaussian gauss(std::initializer_list<double> mean,
                   std::initializer_list<double> var) {
  VectorXd m = vec(mean);
  VectorXd v = vec(var);
  return DiagGaussian{m, v.array().log().matrix()};
}

// log N(x; mean, var) summed over dimensions
double log_density(const DiagGaussian& d, const VectorXd& x) {
  const VectorXd var = d.variance();
  double lp = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double diff = x(i) - d.mean(i);
    lp += -0.5 * (std::log(2.0 * std::numbers::pi * var(i)) +
                  diff * diff / var(i));
  }
  return lp;
}

struct McEstimate {
  double mean;
  double stderr_;
};

// Monte Carlo estimate of KL(p || q) = E_p[log p - log q]
McEstimate mc_kl_gaussian(const DiagGaussian& p, const DiagGaussian& q,
                          int n, std::uint64_t seed) {
  RngStream rng(seed);
  double sum = 0.0, sumsq = 0.0;
  for (int s = 0; s < n; ++s) {
    VectorXd noise(p.dim());
    for (Eigen::Index i = 0; i < noise.size(); ++i) noise(i) = rng.normal();
    const VectorXd x = groupvae::sample_reparam_gaussian(p, noise);
    const double v = log_density(p, x) - log_density(q, x);
    sum += v;
    sumsq += v * v;
  }
  const double mean = sum / n;
  const double var = (sumsq / n - mean * mean) * n / (n - 1.0);
  return {mean, std::sqrt(var / n)};
}

DiagGaussian random_gaussian(RngStream& rng, int dim) {
  VectorXd mean(dim), log_var(dim);
  for (int i = 0; i < dim; ++i) {
    mean(i) = 3.0 * (rng.uniform() - 0.5);
    log_var(i) = 2.0 * (rng.uniform() - 0.5);
  }
  return DiagGaussian{mean, log_var};
}

}  // namespace

TEST_SUITE("distributions") {

TEST_CASE("DiagGaussian validates its parameters") {
  CHECK_THROWS_AS(DiagGaussian(vec({0.0, 0.0}), vec({0.0})),
                  std::invalid_argument);
  CHECK_THROWS_AS(DiagGaussian(VectorXd(), VectorXd()), std::invalid_argument);
  CHECK_THROWS_AS(
      DiagGaussian(vec({0.0}), vec({std::numeric_limits<double>::infinity()})),
      std::invalid_argument);
  const DiagGaussian d = gauss({1.0, -2.0}, {0.5, 4.0});
  CHECK(d.dim() == 2);
  CHECK(d.variance()(0) == doctest::Approx(0.5));
  CHECK(d.variance()(1) == doctest::Approx(4.0));
}

TEST_CASE("CategoricalDist validates the simplex") {
  CHECK_NOTHROW(CategoricalDist(vec({0.5, 0.5})));
  CHECK_THROWS_AS(CategoricalDist(vec({0.5, 0.6})), std::invalid_argument);
  CHECK_THROWS_AS(CategoricalDist(vec({1.2, -0.2})), std::invalid_argument);
  CHECK_THROWS_AS(CategoricalDist(vec({0.0, 1.0})), std::invalid_argument);
  CHECK(CategoricalDist(vec({0.25, 0.25, 0.5})).support() == 3);
}

TEST_CASE("sample_reparam_gaussian transforms noise by mean and scale") {
  CHECK(groupvae::sample_reparam_gaussian(gauss({0.0, 0.0}, {1.0, 1.0}),
                                          vec({0.0, 0.0}))
            .isApprox(vec({0.0, 0.0})));
  const VectorXd s = groupvae::sample_reparam_gaussian(
      gauss({1.0}, {4.0}), vec({1.0}));
  CHECK(s(0) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK_THROWS_AS(groupvae::sample_reparam_gaussian(gauss({0.0}, {1.0}),
                                                    vec({0.0, 0.0})),
                  std::invalid_argument);
}

TEST_CASE("sample_reparam_gaussian matches target moments over 1e5 draws") {
  const DiagGaussian d = gauss({2.0}, {1.0});
  RngStream rng(123);
  const int n = 100000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x =
        groupvae::sample_reparam_gaussian(d, vec({rng.normal()}))(0);
    sum += x;
    sumsq += x * x;
  }
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  CHECK(std::abs(mean - 2.0) < 0.05);
  CHECK(std::abs(var - 1.0) < 0.1);
}

TEST_CASE("kl_gaussian closed form matches hand-computed values") {
  const DiagGaussian std1 = gauss({0.0}, {1.0});
  CHECK(groupvae::kl_gaussian(std1, std1) == doctest::Approx(0.0));
  const DiagGaussian p2 = gauss({1.5, -0.5}, {0.3, 2.0});
  CHECK(groupvae::kl_gaussian(p2, p2) == doctest::Approx(0.0));

  CHECK(groupvae::kl_gaussian(gauss({1.0}, {1.0}), std1) ==
        doctest::Approx(0.5).epsilon(1e-12));
  // KL(N(0,4) || N(0,1)) = log(1/2) + 4/2 - 1/2 = 1.5 - ln 2
  CHECK(groupvae::kl_gaussian(gauss({0.0}, {4.0}), std1) ==
        doctest::Approx(1.5 - std::log(2.0)).epsilon(1e-12));
  CHECK_THROWS_AS(
      groupvae::kl_gaussian(gauss({0.0}, {1.0}), gauss({0.0, 0.0}, {1.0, 1.0})),
      std::invalid_argument);
}

TEST_CASE("kl_gaussian agrees with Monte Carlo within 3 standard errors") {
  RngStream rng(2024);
  for (int trial = 0; trial < 5; ++trial) {
    const DiagGaussian p = random_gaussian(rng, 3);
    const DiagGaussian q = random_gaussian(rng, 3);
    const double analytic = groupvae::kl_gaussian(p, q);
    const McEstimate mc = mc_kl_gaussian(p, q, 100000, 900 + trial);
    CHECK(std::abs(analytic - mc.mean) < 3.0 * mc.stderr_);
  }
}

TEST_CASE("kl_gaussian with shared constant variance is a scaled L2 distance") {
  RngStream rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const int dim = 1 + static_cast<int>(rng.uniform_int(5));
    const double var = 0.1 + 2.0 * rng.uniform();
    VectorXd ma(dim), mb(dim), lv(dim);
    for (int i = 0; i < dim; ++i) {
      ma(i) = 4.0 * (rng.uniform() - 0.5);
      mb(i) = 4.0 * (rng.uniform() - 0.5);
      lv(i) = std::log(var);
    }
    const double kl =
        groupvae::kl_gaussian(DiagGaussian{ma, lv}, DiagGaussian{mb, lv});
    const double l2 = (ma - mb).squaredNorm() / (2.0 * var);
    CHECK(std::abs(kl - l2) <= 1e-12 * std::max(1.0, l2));
  }
}

TEST_CASE("kl_gaussian_to_std_prior matches the general form") {
  CHECK(groupvae::kl_gaussian_to_std_prior(gauss({0.0, 0.0}, {1.0, 1.0})) ==
        doctest::Approx(0.0));
  CHECK(groupvae::kl_gaussian_to_std_prior(gauss({1.0}, {1.0})) ==
        doctest::Approx(0.5).epsilon(1e-12));
  // 0.5*(4 - 1 - ln 4)
  CHECK(groupvae::kl_gaussian_to_std_prior(gauss({0.0, 0.0}, {1.0, 4.0})) ==
        doctest::Approx(0.5 * (3.0 - std::log(4.0))).epsilon(1e-12));
  RngStream rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const DiagGaussian d = random_gaussian(rng, 4);
    VectorXd zero = VectorXd::Zero(4);
    const double general =
        groupvae::kl_gaussian(d, DiagGaussian{zero, zero});
    CHECK(groupvae::kl_gaussian_to_std_prior(d) ==
          doctest::Approx(general).epsilon(1e-12));
  }
}

TEST_CASE("kl_categorical closed form and limits") {
  const CategoricalDist half(vec({0.5, 0.5}));
  CHECK(groupvae::kl_categorical(half, half) == doctest::Approx(0.0));
  const double eps = 1e-9;
  CHECK(std::abs(groupvae::kl_categorical(CategoricalDist(vec({1.0 - eps, eps})),
                                          half) -
                 std::log(2.0)) < 1e-6);
  CHECK(groupvae::kl_categorical(CategoricalDist(vec({0.25, 0.75})),
                                 CategoricalDist(vec({0.75, 0.25}))) ==
        doctest::Approx(0.5 * std::log(3.0)).epsilon(1e-12));
  CHECK_THROWS_AS(
      groupvae::kl_categorical(half, CategoricalDist(vec({0.2, 0.3, 0.5}))),
      std::invalid_argument);
}

TEST_CASE("KL divergences are nonnegative on random inputs") {
  RngStream rng(31337);
  for (int trial = 0; trial < 50; ++trial) {
    const DiagGaussian p = random_gaussian(rng, 3);
    const DiagGaussian q = random_gaussian(rng, 3);
    CHECK(groupvae::kl_gaussian(p, q) >= 0.0);
    CHECK(groupvae::kl_gaussian_to_std_prior(p) >= 0.0);
    VectorXd pa(3), pb(3);
    for (int i = 0; i < 3; ++i) {
      pa(i) = 0.05 + rng.uniform();
      pb(i) = 0.05 + rng.uniform();
    }
    const CategoricalDist cp(pa / pa.sum());
    const CategoricalDist cq(pb / pb.sum());
    const double fwd = groupvae::kl_categorical(cp, cq);
    const double bwd = groupvae::kl_categorical(cq, cp);
    CHECK(fwd >= 0.0);
    CHECK(fwd + bwd >= 0.0);
  }
  const CategoricalDist same(vec({0.3, 0.7}));
  CHECK(groupvae::kl_categorical(same, same) +
            groupvae::kl_categorical(same, same) ==
        doctest::Approx(0.0));
}

TEST_CASE("product_of_gaussians is the precision-weighted product") {
  const DiagGaussian r1 =
      groupvae::product_of_gaussians(gauss({0.0}, {1.0}), gauss({0.0}, {1.0}));
  CHECK(r1.mean(0) == doctest::Approx(0.0));
  CHECK(r1.variance()(0) == doctest::Approx(0.5).epsilon(1e-12));

  const DiagGaussian r2 =
      groupvae::product_of_gaussians(gauss({0.0}, {1.0}), gauss({2.0}, {1.0}));
  CHECK(r2.mean(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r2.variance()(0) == doctest::Approx(0.5).epsilon(1e-12));

  const DiagGaussian r3 = groupvae::product_of_gaussians(
      gauss({1.0}, {1.0}), gauss({1.0}, {1e6}));
  CHECK(r3.mean(0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(r3.variance()(0) == doctest::Approx(1.0).epsilon(1e-5));

  CHECK_THROWS_AS(groupvae::product_of_gaussians(
                      gauss({0.0}, {1.0}), gauss({0.0, 0.0}, {1.0, 1.0})),
                  std::invalid_argument);
}

TEST_CASE("product density is proportional to the normalized product on a grid") {
  const DiagGaussian a = gauss({0.0}, {1.0});
  const DiagGaussian b = gauss({2.0}, {1.0});
  const DiagGaussian prod = groupvae::product_of_gaussians(a, b);
  // log[N(x;a)N(x;b)] - log N(x;prod) must be constant in x.
  double ref = 0.0;
  bool first = true;
  for (double x = -3.0; x <= 5.0; x += 0.5) {
    const VectorXd xv = vec({x});
    const double diff =
        log_density(a, xv) + log_density(b, xv) - log_density(prod, xv);
    if (first) {
      ref = diff;
      first = false;
    } else {
      CHECK(diff == doctest::Approx(ref).epsilon(1e-10));
    }
  }
}

TEST_CASE("product_of_gaussians is commutative and associative") {
  RngStream rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    const DiagGaussian a = random_gaussian(rng, 3);
    const DiagGaussian b = random_gaussian(rng, 3);
    const DiagGaussian c = random_gaussian(rng, 3);
    const DiagGaussian ab = groupvae::product_of_gaussians(a, b);
    const DiagGaussian ba = groupvae::product_of_gaussians(b, a);
    CHECK((ab.mean - ba.mean).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((ab.variance() - ba.variance()).cwiseAbs().maxCoeff() < 1e-12);
    const DiagGaussian ab_c =
        groupvae::product_of_gaussians(ab, c);
    const DiagGaussian a_bc =
        groupvae::product_of_gaussians(a, groupvae::product_of_gaussians(b, c));
    CHECK((ab_c.mean - a_bc.mean).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((ab_c.variance() - a_bc.variance()).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("average_gaussians averages parameters, not densities") {
  const DiagGaussian a = gauss({0.0}, {1.0});
  const DiagGaussian self = groupvae::average_gaussians(a, a);
  CHECK(self.mean(0) == doctest::Approx(0.0));
  CHECK(self.variance()(0) == doctest::Approx(1.0).epsilon(1e-12));

  const DiagGaussian r = groupvae::average_gaussians(a, gauss({2.0}, {3.0}));
  CHECK(r.mean(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.variance()(0) == doctest::Approx(2.0).epsilon(1e-12));

  const DiagGaussian sym =
      groupvae::average_gaussians(gauss({-1.0}, {2.0}), gauss({1.0}, {2.0}));
  CHECK(sym.mean(0) == doctest::Approx(0.0));
  CHECK(sym.variance()(0) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("gumbel_softmax_sample stays on the simplex and sharpens as t -> 0") {
  const CategoricalDist d(vec({0.2, 0.3, 0.5}));
  RngStream rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    VectorXd u(3);
    for (int i = 0; i < 3; ++i) u(i) = rng.uniform_open();
    const VectorXd s = groupvae::gumbel_softmax_sample(d, 0.67, u);
    CHECK(std::abs(s.sum() - 1.0) < 1e-9);
    CHECK(s.minCoeff() >= 0.0);
  }
  // limiting behavior on a fixed draw with well-separated perturbed logits
  const VectorXd sharp =
      groupvae::gumbel_softmax_sample(d, 1e-3, vec({0.3, 0.6, 0.9}));
  CHECK(sharp.maxCoeff() > 0.999);
  CHECK(sharp(2) == doctest::Approx(sharp.maxCoeff()));
  CHECK_THROWS_AS(groupvae::gumbel_softmax_sample(d, 0.0, vec({0.5, 0.5, 0.5})),
                  std::invalid_argument);
  CHECK_THROWS_AS(groupvae::gumbel_softmax_sample(d, -1.0, vec({0.5, 0.5, 0.5})),
                  std::invalid_argument);
  CHECK_THROWS_AS(groupvae::gumbel_softmax_sample(d, 0.67, vec({0.5, 0.5})),
                  std::invalid_argument);
}

TEST_CASE("gumbel_softmax_sample recovers class frequencies via argmax") {
  const CategoricalDist d(vec({0.2, 0.8}));
  RngStream rng(777);
  const int n = 100000;
  int count_second = 0;
  for (int s = 0; s < n; ++s) {
    VectorXd u(2);
    u(0) = rng.uniform_open();
    u(1) = rng.uniform_open();
    const VectorXd out = groupvae::gumbel_softmax_sample(d, 0.5, u);
    if (out(1) > out(0)) ++count_second;
  }
  CHECK(std::abs(count_second / static_cast<double>(n) - 0.8) < 0.02);
}

}  // TEST_SUITE
