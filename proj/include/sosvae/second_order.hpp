#pragma once

#include <functional>

#include "sosvae/params.hpp"

namespace sosvae {

// Builders receive freshly created leaves for the two parameter groups and
// return a scalar objective node. The inner builder must connect both groups;
// the outer builder sees theta plus the updated encoder parameters.
using LossBuilder = std::function<Var(Graph&, const VarMap& theta, const VarMap& phi)>;

enum class SecondOrderBackend {
  Exact,       // double backprop through the recorded inner gradient
  FiniteDiff,  // central-difference Hessian-vector product
};

// d(outer)/d(theta) where theta influences the outer loss through the
// recorded plain-gradient update
//     phi+ = phi + alpha * d(inner)/d(phi)
// (applied `updates` times for the exact backend), plus any direct theta
// dependence of the outer loss.
//
// The finite-difference backend implements
//     alpha * [ d(inner)/d(theta) at (theta, phi + r v)
//             - d(inner)/d(theta) at (theta, phi - r v) ] / (2r)
// with v = d(outer)/d(phi+) and r = 1e-4 * (1 + max|phi|); the perturbation
// radius scales with the parameter magnitude to control rounding error. It is
// the training-time cross-check oracle for the exact backend.
GradMap grad_through_update(const LossBuilder& inner, const LossBuilder& outer,
                            const ParamSet& theta, const ParamSet& phi, double alpha,
                            SecondOrderBackend backend = SecondOrderBackend::Exact,
                            int updates = 1);

}  // namespace sosvae
