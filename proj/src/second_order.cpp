#include "sosvae/second_order.hpp"

#include <stdexcept>

namespace sosvae {

namespace {

VarMap apply_update(const VarMap& phi, const VarMap& phi_grads, double alpha) {
  VarMap out;
  for (const auto& [name, v] : phi) out.emplace(name, add(v, scale(phi_grads.at(name), alpha)));
  return out;
}

GradMap exact_backend(const LossBuilder& inner, const LossBuilder& outer, const ParamSet& theta,
                      const ParamSet& phi, double alpha, int updates) {
  Graph g;
  VarMap theta_vars = param_leaves(g, theta, true);
  VarMap phi_vars = param_leaves(g, phi, true);

  VarMap phi_plus = phi_vars;
  for (int u = 0; u < updates; ++u) {
    Var inner_loss = inner(g, theta_vars, phi_plus);
    phi_plus = apply_update(phi_plus, gradient(inner_loss, phi_plus), alpha);
  }

  Var outer_loss = outer(g, theta_vars, phi_plus);
  return grad_values(gradient(outer_loss, theta_vars));
}

GradMap fd_backend(const LossBuilder& inner, const LossBuilder& outer, const ParamSet& theta,
                   const ParamSet& phi, double alpha) {
  // Step 1: phi+ values and v = d(outer)/d(phi+), plus the direct theta term.
  ParamSet phi_plus;
  {
    Graph g;
    VarMap theta_vars = param_constants(g, theta);
    VarMap phi_vars = param_leaves(g, phi, true);
    Var inner_loss = inner(g, theta_vars, phi_vars);
    VarMap up = apply_update(phi_vars, gradient(inner_loss, phi_vars), alpha);
    for (const auto& [name, v] : up) phi_plus.emplace(name, v.value());
  }

  GradMap v;
  GradMap direct;
  {
    Graph g;
    VarMap theta_vars = param_leaves(g, theta, true);
    VarMap plus_vars = param_leaves(g, phi_plus, true);
    Var outer_loss = outer(g, theta_vars, plus_vars);
    v = grad_values(gradient(outer_loss, plus_vars));
    direct = grad_values(gradient(outer_loss, theta_vars));
  }

  // Step 2: central difference of d(inner)/d(theta) along v around phi.
  const double r = 1e-4 * (1.0 + max_abs(phi));
  auto theta_grad_at = [&](double sign) {
    ParamSet shifted = phi;
    for (auto& [name, t] : shifted) {
      const Tensor& dv = v.at(name);
      for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] += sign * r * dv.data()[i];
    }
    Graph g;
    VarMap theta_vars = param_leaves(g, theta, true);
    VarMap phi_vars = param_constants(g, shifted);
    Var inner_loss = inner(g, theta_vars, phi_vars);
    return grad_values(gradient(inner_loss, theta_vars));
  };

  GradMap plus = theta_grad_at(+1.0);
  GradMap minus = theta_grad_at(-1.0);

  GradMap out;
  for (const auto& [name, gp] : plus) {
    Tensor t = gp;
    const Tensor& gm = minus.at(name);
    const Tensor& gd = direct.at(name);
    for (std::size_t i = 0; i < t.size(); ++i)
      t.data()[i] = alpha * (t.data()[i] - gm.data()[i]) / (2.0 * r) + gd.data()[i];
    out.emplace(name, std::move(t));
  }
  return out;
}

}  // namespace

GradMap grad_through_update(const LossBuilder& inner, const LossBuilder& outer,
                            const ParamSet& theta, const ParamSet& phi, double alpha,
                            SecondOrderBackend backend, int updates) {
  if (theta.empty() || phi.empty())
    throw std::invalid_argument("grad_through_update: empty parameter set");
  switch (backend) {
    case SecondOrderBackend::Exact:
      return exact_backend(inner, outer, theta, phi, alpha, updates);
    case SecondOrderBackend::FiniteDiff:
      if (updates != 1)
        throw std::invalid_argument("grad_through_update: FD backend supports a single update");
      return fd_backend(inner, outer, theta, phi, alpha);
  }
  throw std::logic_error("grad_through_update: unknown backend");
}

}  // namespace sosvae
