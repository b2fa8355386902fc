#include <doctest.h>

#include <cmath>

#include "../common/test_util.hpp"
#include "sosvae/second_order.hpp"

using namespace sosvae;
using testutil::random_tensor;

namespace {

double max_rel(const GradMap& a, const GradMap& b) {
  double worst = 0.0;
  for (const auto& [name, ta] : a) {
    const Tensor& tb = b.at(name);
    for (std::size_t i = 0; i < ta.size(); ++i) {
      double denom = std::max(1.0, std::fabs(tb.data()[i]));
      worst = std::max(worst, std::fabs(ta.data()[i] - tb.data()[i]) / denom);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("hand-derived toy: inner = -(phi-theta)^2, outer = phi+") {
  // phi+ = phi - 2 alpha (phi - theta), d(outer)/d(theta) = 2 alpha
  ParamSet theta{{"t", Tensor::scalar(0.4)}};
  ParamSet phi{{"p", Tensor::scalar(-1.2)}};
  LossBuilder inner = [](Graph&, const VarMap& th, const VarMap& ph) {
    return neg(square(sub(ph.at("p"), th.at("t"))));
  };
  LossBuilder outer = [](Graph&, const VarMap&, const VarMap& ph) { return sum(ph.at("p")); };

  GradMap exact = grad_through_update(inner, outer, theta, phi, 0.1, SecondOrderBackend::Exact);
  CHECK(std::fabs(exact.at("t").scalar_value() - 0.2) < 1e-10);
  GradMap fd = grad_through_update(inner, outer, theta, phi, 0.1, SecondOrderBackend::FiniteDiff);
  CHECK(std::fabs(fd.at("t").scalar_value() - 0.2) < 1e-6);
}

TEST_CASE("outer independent of phi+ gives zero gradient") {
  ParamSet theta{{"t", Tensor::vec({1.0, -2.0})}};
  ParamSet phi{{"p", Tensor::vec({0.3, 0.7})}};
  LossBuilder inner = [](Graph&, const VarMap& th, const VarMap& ph) {
    return neg(sum(square(sub(ph.at("p"), th.at("t")))));
  };
  LossBuilder outer = [](Graph& g, const VarMap&, const VarMap&) { return g.constant(3.0); };
  GradMap grads = grad_through_update(inner, outer, theta, phi, 0.05);
  for (double v : grads.at("t").data()) CHECK(v == 0.0);
}

TEST_CASE("exact and finite-difference backends agree on random quadratics") {
  // inner = -|M phi - theta|^2 (coupled quadratic), outer = q . phi+ + |phi+|^2
  Rng rng(123);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = 10;
    Tensor M = random_tensor({d, d}, rng, -0.6, 0.6);
    Tensor qv = random_tensor({d}, rng);
    ParamSet theta{{"t", random_tensor({d}, rng)}};
    ParamSet phi{{"p", random_tensor({d}, rng)}};

    LossBuilder inner = [&](Graph& g, const VarMap& th, const VarMap& ph) {
      Var p_col = transpose(expand_rows(ph.at("p"), 1));
      Var mp = matmul(g.constant(M), p_col);
      Var diff = sub(mp, transpose(expand_rows(th.at("t"), 1)));
      return neg(sum(square(diff)));
    };
    LossBuilder outer = [&](Graph& g, const VarMap&, const VarMap& ph) {
      Var p = ph.at("p");
      return add(sum(mul(g.constant(qv), p)), sum(square(p)));
    };

    GradMap exact =
        grad_through_update(inner, outer, theta, phi, 0.07, SecondOrderBackend::Exact);
    GradMap fd =
        grad_through_update(inner, outer, theta, phi, 0.07, SecondOrderBackend::FiniteDiff);
    CHECK(max_rel(exact, fd) < 1e-3);
  }
}

TEST_CASE("backends agree on a smooth nonlinear problem") {
  Rng rng(321);
  const std::size_t d = 6;
  ParamSet theta{{"t", random_tensor({d}, rng)}};
  ParamSet phi{{"p", random_tensor({d}, rng)}};
  LossBuilder inner = [](Graph&, const VarMap& th, const VarMap& ph) {
    return neg(sum(softplus(mul(ph.at("p"), th.at("t")))));
  };
  LossBuilder outer = [](Graph&, const VarMap&, const VarMap& ph) {
    return sum(sigmoid(ph.at("p")));
  };
  GradMap exact = grad_through_update(inner, outer, theta, phi, 0.1, SecondOrderBackend::Exact);
  GradMap fd = grad_through_update(inner, outer, theta, phi, 0.1, SecondOrderBackend::FiniteDiff);
  CHECK(max_rel(exact, fd) < 1e-3);
}

TEST_CASE("direct theta dependence of the outer loss is included") {
  ParamSet theta{{"t", Tensor::scalar(0.9)}};
  ParamSet phi{{"p", Tensor::scalar(0.1)}};
  LossBuilder inner = [](Graph&, const VarMap& th, const VarMap& ph) {
    return neg(square(sub(ph.at("p"), th.at("t"))));
  };
  LossBuilder outer = [](Graph&, const VarMap& th, const VarMap& ph) {
    return add(sum(ph.at("p")), scale(sum(th.at("t")), 3.0));
  };
  GradMap exact = grad_through_update(inner, outer, theta, phi, 0.1, SecondOrderBackend::Exact);
  GradMap fd = grad_through_update(inner, outer, theta, phi, 0.1, SecondOrderBackend::FiniteDiff);
  CHECK(exact.at("t").scalar_value() == doctest::Approx(3.2).epsilon(1e-9));
  CHECK(fd.at("t").scalar_value() == doctest::Approx(3.2).epsilon(1e-6));
}

TEST_CASE("multiple recorded updates chain through the exact backend") {
  // Two plain-gradient updates of the quadratic: phi2 = phi - 2a(1-2a)(phi-theta) shifted;
  // d(phi2)/d(theta) = 1 - (1-2a)^2 for inner = -(phi-theta)^2.
  const double a = 0.1;
  ParamSet theta{{"t", Tensor::scalar(0.25)}};
  ParamSet phi{{"p", Tensor::scalar(-0.75)}};
  LossBuilder inner = [](Graph&, const VarMap& th, const VarMap& ph) {
    return neg(square(sub(ph.at("p"), th.at("t"))));
  };
  LossBuilder outer = [](Graph&, const VarMap&, const VarMap& ph) { return sum(ph.at("p")); };
  GradMap g2 = grad_through_update(inner, outer, theta, phi, a, SecondOrderBackend::Exact, 2);
  double want = 1.0 - (1.0 - 2 * a) * (1.0 - 2 * a);
  CHECK(g2.at("t").scalar_value() == doctest::Approx(want).epsilon(1e-10));
}
