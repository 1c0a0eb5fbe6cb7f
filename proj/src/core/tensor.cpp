#include "textres/core/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "textres/core/error.hpp"

namespace textres {
namespace {

std::size_t element_count(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    require(d >= 0, ErrorKind::InvalidInput, "negative tensor dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

void check_same(const Tensor& a, const Tensor& b, const char* op) {
  require(a.same_shape(b), ErrorKind::InvalidInput,
          std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
}

}  // namespace

Tensor::Tensor(std::vector<int> shape, double fill)
    : shape_(std::move(shape)), values_(element_count(shape_), fill) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  require(values_.size() == element_count(shape_), ErrorKind::InvalidInput,
          "tensor value count does not match shape");
}

Tensor Tensor::vector(std::vector<double> values) {
  const int n = static_cast<int>(values.size());
  return Tensor({n}, std::move(values));
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
  require(element_count(shape) == size(), ErrorKind::InvalidInput, "reshape changes element count");
  return Tensor(std::move(shape), values_);
}

void Tensor::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& other) {
  check_same(*this, other, "operator+=");
  std::transform(values_.begin(), values_.end(), other.values_.begin(), values_.begin(), std::plus<>());
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
  check_same(*this, other, "operator-=");
  std::transform(values_.begin(), values_.end(), other.values_.begin(), values_.begin(), std::minus<>());
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : values_) v *= s;
  return *this;
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
  os << ')';
  return os.str();
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(Tensor a, double s) { return a *= s; }

double dot(const Tensor& a, const Tensor& b) {
  check_same(a, b, "dot");
  return std::inner_product(a.values().begin(), a.values().end(), b.values().begin(), 0.0);
}

double l2_norm(const Tensor& t) { return std::sqrt(dot(t, t)); }

double max_abs_diff(const Tensor& a, const Tensor& b) {
  check_same(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

bool all_finite(const Tensor& t) {
  return std::all_of(t.values().begin(), t.values().end(), [](double v) { return std::isfinite(v); });
}

}  // namespace textres
