#include <doctest.h>

#include <cmath>

#include "../common/test_util.hpp"
#include "sosvae/distributions.hpp"

using namespace sosvae;
using testutil::fd_gradient;
using testutil::max_rel_err;

namespace {
DiagGaussian random_gaussian(Rng& rng, std::size_t dim, double spread = 2.0) {
  DiagGaussian q{Tensor::zeros({dim}), Tensor::zeros({dim})};
  for (std::size_t d = 0; d < dim; ++d) {
    q.mean.at(d) = rng.uniform(-spread, spread);
    q.log_var.at(d) = rng.uniform(-1.5, 1.5);
  }
  return q;
}
}  // namespace

TEST_CASE("reparameterize reference values") {
  DiagGaussian q{Tensor::vec({0.5}), Tensor::vec({0.0})};
  CHECK(reparameterize(q, Tensor::vec({0.0})).at(0) == 0.5);
  CHECK(reparameterize(q, Tensor::vec({1.0})).at(0) == doctest::Approx(1.5));

  DiagGaussian q2{Tensor::vec({0.0}), Tensor::vec({2.0 * std::log(2.0)})};
  CHECK(reparameterize(q2, Tensor::vec({2.0})).at(0) == doctest::Approx(4.0));

  CHECK_THROWS_AS(reparameterize(q, Tensor::vec({1.0, 2.0})), std::invalid_argument);
}

TEST_CASE("log_prob reference values") {
  DiagGaussian std1{Tensor::vec({0.0}), Tensor::vec({0.0})};
  CHECK(log_prob(std1, Tensor::vec({0.0})) == doctest::Approx(-0.918939).epsilon(1e-6));
  CHECK(log_prob(std1, Tensor::vec({1.0})) == doctest::Approx(-1.418939).epsilon(1e-6));
  DiagGaussian wide{Tensor::vec({1.0}), Tensor::vec({2.0})};  // N(1, e^2)
  CHECK(log_prob(wide, Tensor::vec({1.0})) == doctest::Approx(-1.918939).epsilon(1e-6));
}

TEST_CASE("closed-form KL reference values") {
  DiagGaussian std2 = DiagGaussian::standard(2);
  CHECK(kl_to_standard(std2) == 0.0);

  DiagGaussian shifted{Tensor::vec({1.0, 1.0}), Tensor::vec({0.0, 0.0})};
  CHECK(kl_to_standard(shifted) == doctest::Approx(1.0).epsilon(1e-12));

  DiagGaussian wide{Tensor::vec({0.0}), Tensor::vec({1.0})};
  CHECK(kl_to_standard(wide) == doctest::Approx(0.5 * (std::exp(1.0) - 2.0)).epsilon(1e-12));

  DiagGaussian a{Tensor::vec({1.0}), Tensor::vec({0.0})};
  DiagGaussian b{Tensor::vec({0.0}), Tensor::vec({0.0})};
  CHECK(kl_between(a, a) == 0.0);
  CHECK(kl_between(a, b) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(kl_between(wide, DiagGaussian::standard(1)) ==
        doctest::Approx(0.5 * (std::exp(1.0) - 2.0)).epsilon(1e-12));

  CHECK_THROWS_AS(kl_between(a, std2), std::invalid_argument);
}

TEST_CASE("kl_to_standard agrees with kl_between against the standard normal") {
  Rng rng(17);
  for (int i = 0; i < 100; ++i) {
    DiagGaussian q = random_gaussian(rng, 5);
    CHECK(std::fabs(kl_to_standard(q) - kl_between(q, DiagGaussian::standard(5))) < 1e-12);
  }
}

TEST_CASE("KLs nonnegative on random gaussians, zero only at equality") {
  Rng rng(23);
  for (int i = 0; i < 10000; ++i) {
    DiagGaussian q1 = random_gaussian(rng, 3);
    DiagGaussian q2 = random_gaussian(rng, 3);
    CHECK(kl_to_standard(q1) >= 0.0);
    double kl = kl_between(q1, q2);
    CHECK(kl >= 0.0);
    if (kl == 0.0) {
      for (std::size_t d = 0; d < 3; ++d) {
        CHECK(q1.mean.at(d) == q2.mean.at(d));
        CHECK(q1.log_var.at(d) == q2.log_var.at(d));
      }
    }
  }
}

TEST_CASE("Monte-Carlo E_q[log q - log p] matches closed-form KL within 3 SE") {
  Rng rng(41);
  DiagGaussian q{Tensor::vec({0.7, -0.3, 1.1}), Tensor::vec({0.4, -0.6, 0.1})};
  DiagGaussian p{Tensor::vec({-0.2, 0.5, 0.0}), Tensor::vec({-0.1, 0.3, 0.8})};

  const std::size_t n = 100000;
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    Tensor eps = Tensor::vec(rng.normal_vec(3));
    Tensor s = reparameterize(q, eps);
    double v = log_prob(q, s) - log_prob(p, s);
    sum += v;
    sum_sq += v * v;
  }
  double mean_v = sum / n;
  double se = std::sqrt((sum_sq / n - mean_v * mean_v) / n);
  CHECK(std::fabs(mean_v - kl_between(q, p)) < 3.0 * se);

  // same for the prior KL
  sum = 0.0;
  sum_sq = 0.0;
  DiagGaussian std3 = DiagGaussian::standard(3);
  for (std::size_t i = 0; i < n; ++i) {
    Tensor s = reparameterize(q, Tensor::vec(rng.normal_vec(3)));
    double v = log_prob(q, s) - log_prob(std3, s);
    sum += v;
    sum_sq += v * v;
  }
  mean_v = sum / n;
  se = std::sqrt((sum_sq / n - mean_v * mean_v) / n);
  CHECK(std::fabs(mean_v - kl_to_standard(q)) < 3.0 * se);
}

TEST_CASE("reparameterize gradients match finite differences") {
  Rng rng(53);
  Tensor eps = Tensor::vec(rng.normal_vec(4));
  ParamSet ps{{"mean", testutil::random_tensor({1, 4}, rng)},
              {"log_var", testutil::random_tensor({1, 4}, rng)}};

  auto value = [&](const ParamSet& p) {
    Graph g;
    DiagGaussianVars q{g.leaf(p.at("mean"), false), g.leaf(p.at("log_var"), false)};
    Var s = reparameterize(q, g.constant(Tensor::matrix(1, 4, eps.data())));
    return sum(square(s)).value().scalar_value();
  };
  Graph g;
  VarMap leaves = param_leaves(g, ps);
  DiagGaussianVars q{leaves.at("mean"), leaves.at("log_var")};
  Var s = reparameterize(q, g.constant(Tensor::matrix(1, 4, eps.data())));
  GradMap ad = grad_values(gradient(sum(square(s)), leaves));
  GradMap fd = fd_gradient(value, ps, 1e-6);
  CHECK(max_rel_err(ad, fd) < 1e-6);
}

TEST_CASE("batched graph KLs match the value-level closed forms") {
  Rng rng(67);
  DiagGaussian a = random_gaussian(rng, 4);
  DiagGaussian b = random_gaussian(rng, 4);
  Graph g;
  DiagGaussianVars qa{g.constant(Tensor::matrix(1, 4, a.mean.data())),
                      g.constant(Tensor::matrix(1, 4, a.log_var.data()))};
  DiagGaussianVars qb{g.constant(Tensor::matrix(1, 4, b.mean.data())),
                      g.constant(Tensor::matrix(1, 4, b.log_var.data()))};
  CHECK(kl_to_standard(qa).value().at(0) == doctest::Approx(kl_to_standard(a)).epsilon(1e-12));
  CHECK(kl_between(qa, qb).value().at(0) == doctest::Approx(kl_between(a, b)).epsilon(1e-12));
  CHECK(log_prob(qa, qb.mean).value().at(0) ==
        doctest::Approx(log_prob(a, b.mean)).epsilon(1e-12));
}
