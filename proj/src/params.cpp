#include "sosvae/params.hpp"

#include <cmath>

namespace sosvae {

VarMap param_leaves(Graph& g, const ParamSet& params, bool requires_grad) {
  VarMap out;
  for (const auto& [name, value] : params) out.emplace(name, g.leaf(value, requires_grad));
  return out;
}

VarMap param_constants(Graph& g, const ParamSet& params) {
  VarMap out;
  for (const auto& [name, value] : params) out.emplace(name, g.constant(value));
  return out;
}

VarMap gradient(Var loss, const VarMap& wrt) {
  std::vector<std::string> names;
  std::vector<Var> vars;
  names.reserve(wrt.size());
  vars.reserve(wrt.size());
  for (const auto& [name, v] : wrt) {
    names.push_back(name);
    vars.push_back(v);
  }
  std::vector<Var> grads = gradient(loss, vars);
  VarMap out;
  for (std::size_t i = 0; i < names.size(); ++i) out.emplace(names[i], grads[i]);
  return out;
}

GradMap grad_values(const VarMap& grads) {
  GradMap out;
  for (const auto& [name, v] : grads) out.emplace(name, v.value());
  return out;
}

double max_abs(const ParamSet& params) {
  double m = 0.0;
  for (const auto& [name, t] : params)
    for (double v : t.data()) m = std::max(m, std::fabs(v));
  return m;
}

}  // namespace sosvae
