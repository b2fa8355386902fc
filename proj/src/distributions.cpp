#include "sosvae/distributions.hpp"

#include <cmath>
#include <stdexcept>

namespace sosvae {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void check_dims(const DiagGaussian& q) {
  if (q.mean.rank() != 1 || q.log_var.rank() != 1 || q.mean.size() != q.log_var.size())
    throw std::invalid_argument("DiagGaussian: mean/log_var length mismatch");
}
}  // namespace

DiagGaussian DiagGaussian::standard(std::size_t dim) {
  return DiagGaussian{Tensor::zeros({dim}), Tensor::zeros({dim})};
}

Tensor reparameterize(const DiagGaussian& q, const Tensor& eps) {
  check_dims(q);
  if (eps.rank() != 1 || eps.size() != q.dim())
    throw std::invalid_argument("reparameterize: eps length mismatch");
  Tensor s = q.mean;
  for (std::size_t d = 0; d < s.size(); ++d)
    s.at(d) += std::exp(0.5 * q.log_var.at(d)) * eps.at(d);
  return s;
}

double log_prob(const DiagGaussian& q, const Tensor& s) {
  check_dims(q);
  if (s.rank() != 1 || s.size() != q.dim())
    throw std::invalid_argument("log_prob: point length mismatch");
  double lp = 0.0;
  for (std::size_t d = 0; d < s.size(); ++d) {
    double lv = q.log_var.at(d);
    double diff = s.at(d) - q.mean.at(d);
    lp += -0.5 * kLog2Pi - 0.5 * lv - diff * diff / (2.0 * std::exp(lv));
  }
  return lp;
}

double kl_to_standard(const DiagGaussian& q) {
  check_dims(q);
  double kl = 0.0;
  for (std::size_t d = 0; d < q.dim(); ++d) {
    double lv = q.log_var.at(d);
    double m = q.mean.at(d);
    kl += 0.5 * (std::exp(lv) + m * m - 1.0 - lv);
  }
  return kl;
}

double kl_between(const DiagGaussian& q1, const DiagGaussian& q2) {
  check_dims(q1);
  check_dims(q2);
  if (q1.dim() != q2.dim()) throw std::invalid_argument("kl_between: dimension mismatch");
  double kl = 0.0;
  for (std::size_t d = 0; d < q1.dim(); ++d) {
    double lv1 = q1.log_var.at(d), lv2 = q2.log_var.at(d);
    double dm = q1.mean.at(d) - q2.mean.at(d);
    kl += 0.5 * (lv2 - lv1) + (std::exp(lv1) + dm * dm) / (2.0 * std::exp(lv2)) - 0.5;
  }
  return kl;
}

// ---- batched graph versions ------------------------------------------------

Var reparameterize(const DiagGaussianVars& q, Var eps) {
  if (!q.mean.value().same_shape(eps.value()))
    throw std::invalid_argument("reparameterize: eps shape mismatch");
  return add(q.mean, mul(exp(scale(q.log_var, 0.5)), eps));
}

Var log_prob(const DiagGaussianVars& q, Var s) {
  if (!q.mean.value().same_shape(s.value()))
    throw std::invalid_argument("log_prob: point shape mismatch");
  Var diff2 = square(sub(s, q.mean));
  Var quad = mul(diff2, exp(neg(q.log_var)));
  Var per_dim = scale(add(add_scalar(q.log_var, kLog2Pi), quad), -0.5);
  return row_sum(per_dim);
}

Var kl_to_standard(const DiagGaussianVars& q) {
  Var per_dim = sub(add(exp(q.log_var), square(q.mean)), add_scalar(q.log_var, 1.0));
  return scale(row_sum(per_dim), 0.5);
}

Var kl_between(const DiagGaussianVars& q1, const DiagGaussianVars& q2) {
  if (!q1.mean.value().same_shape(q2.mean.value()))
    throw std::invalid_argument("kl_between: dimension mismatch");
  Var half_lv_diff = scale(sub(q2.log_var, q1.log_var), 0.5);
  Var num = add(exp(q1.log_var), square(sub(q1.mean, q2.mean)));
  Var ratio = scale(mul(num, exp(neg(q2.log_var))), 0.5);
  Var per_dim = add_scalar(add(half_lv_diff, ratio), -0.5);
  return row_sum(per_dim);
}

}  // namespace sosvae
