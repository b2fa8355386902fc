#pragma once

#include <map>
#include <string>

#include "sosvae/graph.hpp"
#include "sosvae/tensor.hpp"

namespace sosvae {

// Named trainable leaves. std::map keeps iteration order deterministic for
// optimizer updates and checkpoint layout.
using ParamSet = std::map<std::string, Tensor>;
using GradMap = std::map<std::string, Tensor>;
using VarMap = std::map<std::string, Var>;

VarMap param_leaves(Graph& g, const ParamSet& params, bool requires_grad = true);
VarMap param_constants(Graph& g, const ParamSet& params);

// gradient() over every entry of a VarMap, name-aligned.
VarMap gradient(Var loss, const VarMap& wrt);
GradMap grad_values(const VarMap& grads);

// max |entry| over a named tensor map (ParamSet or GradMap)
double max_abs(const ParamSet& params);

}  // namespace sosvae
