#include <doctest.h>

#include <cmath>

#include "../common/test_util.hpp"
#include "sosvae/objectives.hpp"

using namespace sosvae;
using testutil::fd_gradient;
using testutil::max_rel_err;
using testutil::random_tensor;

namespace {

ParamSet zeroed(ParamSet ps) {
  for (auto& [name, t] : ps)
    for (double& v : t.data()) v = 0.0;
  return ps;
}

// 1-dim linear-Gaussian model x = a s + noise with exact posterior encoder
// and exact affine decoder built from paired relu units (relu(x) - relu(-x)
// reproduces x for every input).
struct LinearToy {
  double a = 1.0;
  EncoderArch ea{1, 2, 1};
  DecoderArch da{DecoderKind::Mlp, 1, 2, 1, Likelihood::Gaussian};

  ParamSet posterior_encoder() const {
    double c = a / (a * a + 1.0);
    double lv = std::log(1.0 / (a * a + 1.0));
    return ParamSet{{"enc.W1", Tensor::matrix(2, 1, {1.0, -1.0})},
                    {"enc.b1", Tensor::vec({0.0, 0.0})},
                    {"enc.Wm", Tensor::matrix(1, 2, {c, -c})},
                    {"enc.bm", Tensor::vec({0.0})},
                    {"enc.Wv", Tensor::matrix(1, 2, {0.0, 0.0})},
                    {"enc.bv", Tensor::vec({lv})}};
  }
  ParamSet true_decoder() const {
    return ParamSet{{"dec.W1", Tensor::matrix(2, 1, {1.0, -1.0})},
                    {"dec.b1", Tensor::vec({0.0, 0.0})},
                    {"dec.W2", Tensor::matrix(1, 2, {a, -a})},
                    {"dec.b2", Tensor::vec({0.0})}};
  }
  double log_marginal(double x) const {
    double var = a * a + 1.0;
    return -0.5 * std::log(2.0 * M_PI * var) - x * x / (2.0 * var);
  }
};

}  // namespace

TEST_CASE("zero-network Bernoulli ELBO on a zero input") {
  EncoderArch ea{4, 8, 2};
  DecoderArch da{DecoderKind::Mlp, 2, 8, 4, Likelihood::Bernoulli};
  Rng rng(2);
  ParamSet enc = zeroed(init_encoder(ea, rng));
  ParamSet dec = zeroed(init_decoder(da, rng));
  LossBreakdown lb = elbo_value(dec, enc, Tensor::vec({0, 0, 0, 0}), Tensor::vec({0, 0}), da, ea);
  CHECK(lb.reconstruction == doctest::Approx(4.0 * std::log(0.5)).epsilon(1e-12));
  CHECK(lb.prior_kl == 0.0);
  CHECK(lb.total == doctest::Approx(-2.7726).epsilon(1e-4));
}

TEST_CASE("prior-KL component equals the closed-form encoder KL") {
  Rng rng(3);
  EncoderArch ea{5, 8, 3};
  DecoderArch da{DecoderKind::Mlp, 3, 8, 5, Likelihood::Gaussian};
  ParamSet enc = init_encoder(ea, rng);
  ParamSet dec = init_decoder(da, rng);
  Tensor x = random_tensor({5}, rng);
  LossBreakdown lb = elbo_value(dec, enc, x, Tensor::vec(rng.normal_vec(3)), da, ea);
  DiagGaussian q = encode_one(enc, ea, x);
  CHECK(lb.prior_kl == doctest::Approx(kl_to_standard(q)).epsilon(1e-12));
}

TEST_CASE("svae with lambda 0 is bitwise the ELBO") {
  Rng rng(4);
  EncoderArch ea{6, 8, 2};
  DecoderArch da{DecoderKind::Mlp, 2, 8, 6, Likelihood::Gaussian};
  ClassifierArch ca{2, 3};
  ParamSet enc = init_encoder(ea, rng);
  ParamSet dec = init_decoder(da, rng);
  ParamSet cls = init_classifier(ca, rng);
  Tensor x = random_tensor({6}, rng);
  Tensor eps = Tensor::vec(rng.normal_vec(2));
  LossBreakdown e = elbo_value(dec, enc, x, eps, da, ea);
  LossBreakdown s = svae_loss_value(dec, enc, cls, x, 1, eps, 0.0, da, ea);
  CHECK(e.total == s.total);  // bitwise
  CHECK(e.reconstruction == s.reconstruction);
  CHECK(s.supervised == 0.0);
}

TEST_CASE("uniform classifier gives supervised term -ln C") {
  Rng rng(5);
  EncoderArch ea{4, 8, 2};
  DecoderArch da{DecoderKind::Mlp, 2, 8, 4, Likelihood::Gaussian};
  ParamSet enc = init_encoder(ea, rng);
  ParamSet dec = init_decoder(da, rng);
  ParamSet cls = zeroed(init_classifier(ClassifierArch{2, 3}, rng));
  LossBreakdown s = svae_loss_value(dec, enc, cls, random_tensor({4}, rng), 2,
                                    Tensor::vec(rng.normal_vec(2)), 1.0, da, ea);
  CHECK(s.supervised == doctest::Approx(-std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("doubling lambda doubles the supervised share of the total") {
  Rng rng(6);
  EncoderArch ea{4, 8, 2};
  DecoderArch da{DecoderKind::Mlp, 2, 8, 4, Likelihood::Gaussian};
  ParamSet enc = init_encoder(ea, rng);
  ParamSet dec = init_decoder(da, rng);
  ParamSet cls = init_classifier(ClassifierArch{2, 3}, rng);
  Tensor x = random_tensor({4}, rng);
  Tensor eps = Tensor::vec(rng.normal_vec(2));
  LossBreakdown e = elbo_value(dec, enc, x, eps, da, ea);
  LossBreakdown s1 = svae_loss_value(dec, enc, cls, x, 1, eps, 2.5, da, ea);
  LossBreakdown s2 = svae_loss_value(dec, enc, cls, x, 1, eps, 5.0, da, ea);
  CHECK(s2.total - e.total == doctest::Approx(2.0 * (s1.total - e.total)).epsilon(1e-12));
}

TEST_CASE("loss breakdown totals reproduce from components") {
  Rng rng(7);
  EncoderArch ea{5, 8, 3};
  DecoderArch da{DecoderKind::Mlp, 3, 8, 5, Likelihood::Gaussian};
  ParamSet enc = init_encoder(ea, rng);
  ParamSet enc2 = init_encoder(ea, rng, "enc2");
  ParamSet dec = init_decoder(da, rng);
  ParamSet cls = init_classifier(ClassifierArch{3, 3}, rng);
  Tensor X = random_tensor({4, 5}, rng);
  Tensor E = random_tensor({4, 3}, rng);
  auto y = std::make_shared<const std::vector<int>>(std::vector<int>{0, 2, 1, 1});

  double lambda = 3.0, mu = 0.7;
  {
    Graph g;
    LossVars lv = svae_loss(param_constants(g, dec), param_constants(g, enc),
                            param_constants(g, cls), g.constant(X), y, g.constant(E), lambda, da,
                            EncoderArch{5, 8, 3});
    LossBreakdown b = lv.values(lambda, mu);
    CHECK(std::fabs(b.total - (b.reconstruction - b.prior_kl + lambda * b.supervised)) <= 1e-12);
  }
  {
    Graph g;
    auto [m1, lv1] = encode_batch(enc, ea, X);
    DiagGaussianVars q1{g.constant(m1), g.constant(lv1)};
    LossVars lv = dvae_loss(param_constants(g, dec), q1, param_constants(g, enc2),
                            param_constants(g, cls), g.constant(X), y, g.constant(E), lambda, mu,
                            da, ea, "enc2");
    LossBreakdown b = lv.values(lambda, mu);
    CHECK(std::fabs(b.total -
                    (lambda * b.supervised + b.reconstruction - mu * b.coupling_kl)) <= 1e-12);
  }
}

TEST_CASE("dvae coupling KL vanishes when the encoders coincide") {
  Rng rng(8);
  EncoderArch ea{5, 8, 3};
  DecoderArch da{DecoderKind::Mlp, 3, 8, 5, Likelihood::Gaussian};
  ParamSet enc = init_encoder(ea, rng);
  ParamSet dec = init_decoder(da, rng);
  ParamSet cls = init_classifier(ClassifierArch{3, 2}, rng);
  // phi2 = phi1 values under the enc2 prefix
  ParamSet enc2;
  for (const auto& [name, t] : enc) enc2.emplace("enc2" + name.substr(3), t);
  Tensor X = random_tensor({3, 5}, rng);
  Tensor E = random_tensor({3, 3}, rng);
  auto y = std::make_shared<const std::vector<int>>(std::vector<int>{0, 1, 0});

  Graph g;
  auto [m1, lv1] = encode_batch(enc, ea, X);
  DiagGaussianVars q1{g.constant(m1), g.constant(lv1)};
  VarMap e2 = param_leaves(g, enc2);
  LossVars lv = dvae_loss(param_constants(g, dec), q1, e2, param_constants(g, cls),
                          g.constant(X), y, g.constant(E), 0.0, 4.0, da, ea, "enc2");
  CHECK(lv.coupling_kl.value().scalar_value() == doctest::Approx(0.0).epsilon(1e-14));

  // At equality, the phi2 gradient of (0 * supervised - mu * coupling) is
  // exactly zero: the spec's lambda = 0 fixed point.
  Var objective = sub(scale(lv.supervised, 0.0), scale(lv.coupling_kl, 4.0));
  GradMap grads = grad_values(gradient(objective, e2));
  for (const auto& [name, t] : grads)
    for (double v : t.data()) CHECK(std::fabs(v) < 1e-14);
}

TEST_CASE("large mu drives the trained predictive encoder toward the generative one") {
  Rng rng(9);
  EncoderArch ea{4, 6, 2};
  DecoderArch da{DecoderKind::Mlp, 2, 6, 4, Likelihood::Gaussian};
  ParamSet enc1 = init_encoder(ea, rng);
  ParamSet enc2 = init_encoder(ea, rng, "enc2");
  ParamSet dec = init_decoder(da, rng);
  ParamSet cls = init_classifier(ClassifierArch{2, 2}, rng);
  Tensor X = random_tensor({16, 4}, rng);
  Tensor E = random_tensor({16, 2}, rng);
  std::vector<int> yv(16);
  for (int i = 0; i < 16; ++i) yv[i] = i % 2;
  auto y = std::make_shared<const std::vector<int>>(yv);
  auto [m1, lv1] = encode_batch(enc1, ea, X);

  auto coupling_now = [&]() {
    Graph g;
    DiagGaussianVars q1{g.constant(m1), g.constant(lv1)};
    LossVars lv = dvae_loss(param_constants(g, dec), q1, param_constants(g, enc2),
                            param_constants(g, cls), g.constant(X), y, g.constant(E), 1.0, 100.0,
                            da, ea, "enc2");
    return lv.coupling_kl.value().scalar_value();
  };

  double before = coupling_now();
  Adam adam;
  for (int step = 0; step < 60; ++step) {
    Graph g;
    DiagGaussianVars q1{g.constant(m1), g.constant(lv1)};
    VarMap e2 = param_leaves(g, enc2);
    LossVars lv = dvae_loss(param_constants(g, dec), q1, e2, param_constants(g, cls),
                            g.constant(X), y, g.constant(E), 1.0, 100.0, da, ea, "enc2");
    Var objective = sub(scale(lv.supervised, 1.0), scale(lv.coupling_kl, 100.0));
    adam.step(enc2, grad_values(gradient(neg(objective), e2)), 1e-2);
  }
  CHECK(coupling_now() < before);
}

TEST_CASE("masked reconstruction log-likelihood") {
  Rng rng(10);
  DecoderArch da{DecoderKind::Mlp, 2, 6, 6, Likelihood::Gaussian};
  ParamSet dec = init_decoder(da, rng);
  Tensor S = random_tensor({3, 2}, rng);
  Tensor X = random_tensor({3, 6}, rng);

  Graph g;
  VarMap dv = param_constants(g, dec);
  Var pre = decode_pre(dv, g.constant(S), da);
  Var x = g.constant(X);

  auto full = std::make_shared<const std::vector<int>>(std::vector<int>{0, 1, 2, 3, 4, 5});
  Var full_masked = masked_recon_log_lik(g, pre, x, full, da.head);
  Var unmasked = recon_log_lik(pre, x, da.head);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(full_masked.value().at(i) == unmasked.value().at(i));

  auto empty = std::make_shared<const std::vector<int>>(std::vector<int>{});
  Var none = masked_recon_log_lik(g, pre, x, empty, da.head);
  for (std::size_t i = 0; i < 3; ++i) CHECK(none.value().at(i) == 0.0);

  // complementary masks sum to the full value (Gaussian head is additive
  // over coordinates)
  auto a = std::make_shared<const std::vector<int>>(std::vector<int>{0, 2, 4});
  auto b = std::make_shared<const std::vector<int>>(std::vector<int>{1, 3, 5});
  Tensor Xa = Tensor::zeros({3, 3}), Xb = Tensor::zeros({3, 3});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      Xa.at(i, j) = X.at(i, (*a)[j]);
      Xb.at(i, j) = X.at(i, (*b)[j]);
    }
  Var la = masked_recon_log_lik(g, pre, g.constant(Xa), a, da.head);
  Var lb = masked_recon_log_lik(g, pre, g.constant(Xb), b, da.head);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(la.value().at(i) + lb.value().at(i) ==
          doctest::Approx(unmasked.value().at(i)).epsilon(1e-12));

  auto bad = std::make_shared<const std::vector<int>>(std::vector<int>{7});
  CHECK_THROWS_AS(masked_recon_log_lik(g, pre, x, bad, da.head), std::invalid_argument);
}

TEST_CASE("losses are differentiable w.r.t. every parameter set") {
  Rng rng(11);
  EncoderArch ea{5, 6, 2};
  DecoderArch da{DecoderKind::Mlp, 2, 6, 5, Likelihood::Bernoulli};
  ParamSet all;
  for (auto& [k, v] : init_encoder(ea, rng)) all.emplace(k, v);
  for (auto& [k, v] : init_decoder(da, rng)) all.emplace(k, v);
  for (auto& [k, v] : init_classifier(ClassifierArch{2, 3}, rng)) all.emplace(k, v);
  Tensor X = random_tensor({3, 5}, rng, 0.1, 0.9);
  Tensor E = random_tensor({3, 2}, rng);
  auto y = std::make_shared<const std::vector<int>>(std::vector<int>{2, 0, 1});

  auto value = [&](const ParamSet& p) {
    Graph g;
    VarMap v = param_constants(g, p);
    return svae_loss(v, v, v, g.constant(X), y, g.constant(E), 2.0, da, ea)
        .total.value()
        .scalar_value();
  };
  Graph g;
  VarMap v = param_leaves(g, all);
  LossVars lv = svae_loss(v, v, v, g.constant(X), y, g.constant(E), 2.0, da, ea);
  GradMap ad = grad_values(gradient(lv.total, v));
  CHECK(max_rel_err(ad, fd_gradient(value, all)) < 1e-5);
}

TEST_CASE("single-sample ELBO equals the exact log marginal at the analytic optimum") {
  LinearToy toy;
  toy.a = 1.3;
  ParamSet enc = toy.posterior_encoder();
  ParamSet dec = toy.true_decoder();
  const double x = 0.8;

  // Pointwise entropy-form identity: log p(x|s) + log p(s) - log q(s|x) is
  // the log marginal for every eps when q is the exact posterior.
  Rng rng(12);
  for (int i = 0; i < 10; ++i) {
    double eps = rng.normal();
    DiagGaussian q = encode_one(enc, toy.ea, Tensor::vec({x}));
    Tensor s = reparameterize(q, Tensor::vec({eps}));
    Tensor recon = decode_batch(dec, toy.da, Tensor::matrix(1, 1, s.data()));
    double log_lik = -0.5 * std::log(2.0 * M_PI) - 0.5 * (x - recon.at(0, 0)) * (x - recon.at(0, 0));
    double log_prior = log_prob(DiagGaussian::standard(1), s);
    double log_q = log_prob(q, s);
    CHECK(log_lik + log_prior - log_q == doctest::Approx(toy.log_marginal(x)).epsilon(1e-10));
  }

  // The closed-form-KL estimator matches in expectation: integrate over eps
  // by trapezoid quadrature against the standard normal density.
  const int nodes = 4001;
  const double lo = -8.0, hi = 8.0, h = (hi - lo) / (nodes - 1);
  double integral = 0.0, mass = 0.0;
  for (int k = 0; k < nodes; ++k) {
    double eps = lo + k * h;
    double w = std::exp(-0.5 * eps * eps) / std::sqrt(2.0 * M_PI) * h;
    if (k == 0 || k == nodes - 1) w *= 0.5;
    LossBreakdown lb = elbo_value(dec, enc, Tensor::vec({x}), Tensor::vec({eps}), toy.da, toy.ea);
    integral += w * lb.total;
    mass += w;
  }
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(integral == doctest::Approx(toy.log_marginal(x)).epsilon(1e-9));
}

TEST_CASE("averaged single-sample ELBO stays below the exact log marginal") {
  // Perturbed encoder: the bound must hold strictly, within Monte-Carlo error.
  LinearToy toy;
  toy.a = 0.9;
  ParamSet enc = toy.posterior_encoder();
  enc.at("enc.bm").at(0) += 0.3;  // bias the posterior mean
  ParamSet dec = toy.true_decoder();
  const double x = -0.4;

  Rng rng(13);
  const std::size_t n = 100000;
  std::vector<double> eps_all(n);
  for (auto& e : eps_all) e = rng.normal();

  Graph g;
  VarMap ev = param_constants(g, enc);
  VarMap dv = param_constants(g, dec);
  Tensor X = Tensor::full({n, 1}, x);
  Tensor E = Tensor::matrix(n, 1, eps_all);
  DiagGaussianVars q = encode(ev, g.constant(X), toy.ea);
  Var s = reparameterize(q, g.constant(E));
  Var elbo_rows = sub(recon_log_lik(decode_pre(dv, s, toy.da), g.constant(X), toy.da.head),
                      kl_to_standard(q));
  const auto& rows = elbo_rows.value().data();
  double sum = 0, sum_sq = 0;
  for (double v : rows) {
    sum += v;
    sum_sq += v * v;
  }
  double mean_v = sum / n;
  double se = std::sqrt((sum_sq / n - mean_v * mean_v) / n);
  CHECK(mean_v <= toy.log_marginal(x) + 3.0 * se);
  CHECK(mean_v < toy.log_marginal(x));  // strictly below for the biased encoder
}
