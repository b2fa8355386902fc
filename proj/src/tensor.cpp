#include "sosvae/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace sosvae {

namespace {
std::size_t shape_count(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (shape_.size() > 2) throw std::invalid_argument("Tensor: rank > 2 not supported");
  if (shape_count(shape_) != values_.size())
    throw std::invalid_argument("Tensor: shape/value count mismatch (" + shape_str() + " vs " +
                                std::to_string(values_.size()) + " values)");
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  std::vector<double> v(shape_count(shape), 0.0);
  return Tensor(std::move(shape), std::move(v));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
  std::vector<double> v(shape_count(shape), value);
  return Tensor(std::move(shape), std::move(v));
}

Tensor Tensor::vec(std::vector<double> values) {
  std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

double Tensor::scalar_value() const {
  if (!is_scalar()) throw std::invalid_argument("Tensor: scalar_value on non-scalar " + shape_str());
  return values_[0];
}

bool Tensor::all_finite() const {
  for (double v : values_)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
  os << "]";
  return os.str();
}

}  // namespace sosvae
