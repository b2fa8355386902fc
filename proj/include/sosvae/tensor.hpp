#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace sosvae {

// Dense row-major f64 array of rank 0 (scalar), 1 (vector) or 2 (matrix).
// Value type: cheap to copy at desk scale, immutable by convention once
// recorded on a graph.
class Tensor {
 public:
  Tensor() = default;

  static Tensor scalar(double v) { return Tensor({}, {v}); }
  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, double v);
  static Tensor vec(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  bool is_scalar() const { return shape_.empty(); }
  std::size_t rows() const { return shape_.at(0); }
  std::size_t cols() const { return shape_.at(1); }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  double scalar_value() const;
  double& at(std::size_t i) { return values_[i]; }
  double at(std::size_t i) const { return values_[i]; }
  double& at(std::size_t i, std::size_t j) { return values_[i * shape_[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return values_[i * shape_[1] + j]; }

  std::vector<double>& data() { return values_; }
  const std::vector<double>& data() const { return values_; }

  bool all_finite() const;
  std::string shape_str() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

}  // namespace sosvae
