#pragma once

#include "sosvae/graph.hpp"
#include "sosvae/tensor.hpp"

namespace sosvae {

// Diagonal Gaussian parameterized by mean and log-variance. Log-variance
// keeps the optimization unconstrained; variance is exp(log_var) > 0 by
// construction. All divergences are in nats.
struct DiagGaussian {
  Tensor mean;     // rank 1
  Tensor log_var;  // rank 1, same length

  std::size_t dim() const { return mean.size(); }
  static DiagGaussian standard(std::size_t dim);
};

// s = mean + exp(log_var / 2) * eps
Tensor reparameterize(const DiagGaussian& q, const Tensor& eps);
double log_prob(const DiagGaussian& q, const Tensor& s);
// KL(q || N(0, I)) = 1/2 sum(exp(lv) + m^2 - 1 - lv)
double kl_to_standard(const DiagGaussian& q);
// KL(q1 || q2), closed form
double kl_between(const DiagGaussian& q1, const DiagGaussian& q2);

// ---- graph-level counterparts over batches --------------------------------
// mean/log_var are (B, L) matrices; one row per sample.

struct DiagGaussianVars {
  Var mean;
  Var log_var;
};

// (B, L) sample matrix from (B, L) eps draws.
Var reparameterize(const DiagGaussianVars& q, Var eps);
// per-sample log density, length-B vector
Var log_prob(const DiagGaussianVars& q, Var s);
// per-sample KL to N(0, I), length-B vector
Var kl_to_standard(const DiagGaussianVars& q);
// per-sample KL(q1 || q2), length-B vector
Var kl_between(const DiagGaussianVars& q1, const DiagGaussianVars& q2);

}  // namespace sosvae
