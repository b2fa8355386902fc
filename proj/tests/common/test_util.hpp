#pragma once

#include <cmath>
#include <functional>

#include "sosvae/params.hpp"
#include "sosvae/rng.hpp"

namespace sosvae::testutil {

// Central finite differences of a scalar function over named parameters; the
// independent oracle for every gradient test.
inline GradMap fd_gradient(const std::function<double(const ParamSet&)>& f, ParamSet params,
                           double h = 1e-5) {
  GradMap out;
  for (auto& [name, t] : params) {
    Tensor grad = Tensor::zeros(t.shape());
    for (std::size_t i = 0; i < t.size(); ++i) {
      double saved = t.data()[i];
      t.data()[i] = saved + h;
      double fp = f(params);
      t.data()[i] = saved - h;
      double fm = f(params);
      t.data()[i] = saved;
      grad.data()[i] = (fp - fm) / (2.0 * h);
    }
    out.emplace(name, std::move(grad));
  }
  return out;
}

// max over entries of |a - b| / max(1, |b|)
inline double max_rel_err(const GradMap& a, const GradMap& b) {
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

inline Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1.0,
                            double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace sosvae::testutil
