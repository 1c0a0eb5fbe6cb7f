#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace textres {

/// Dense row-major float64 array. Rank-3 tensors are laid out HWC, which is
/// the layout used for images, latents and feature maps.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, double fill = 0.0);
  Tensor(std::initializer_list<int> shape, double fill = 0.0)
      : Tensor(std::vector<int>(shape), fill) {}
  Tensor(std::vector<int> shape, std::vector<double> values);

  static Tensor hwc(int h, int w, int c, double fill = 0.0) { return Tensor({h, w, c}, fill); }
  static Tensor vector(std::vector<double> values);

  const std::vector<int>& shape() const noexcept { return shape_; }
  int rank() const noexcept { return static_cast<int>(shape_.size()); }
  int dim(int axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  // HWC accessors; only valid for rank-3 tensors.
  int height() const { return dim(0); }
  int width() const { return dim(1); }
  int channels() const { return dim(2); }

  double& operator()(int y, int x, int c) {
    return values_[(static_cast<std::size_t>(y) * shape_[1] + x) * shape_[2] + c];
  }
  double operator()(int y, int x, int c) const {
    return values_[(static_cast<std::size_t>(y) * shape_[1] + x) * shape_[2] + c];
  }
  /// Pointer to the channel vector at (y, x).
  double* pixel(int y, int x) { return values_.data() + (static_cast<std::size_t>(y) * shape_[1] + x) * shape_[2]; }
  const double* pixel(int y, int x) const {
    return values_.data() + (static_cast<std::size_t>(y) * shape_[1] + x) * shape_[2];
  }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }

  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }
  Tensor reshaped(std::vector<int> shape) const;
  void fill(double v);

  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& operator*=(double s);

  bool operator==(const Tensor& other) const = default;

  std::string shape_string() const;

 private:
  std::vector<int> shape_;
  std::vector<double> values_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(Tensor a, double s);

double dot(const Tensor& a, const Tensor& b);
double l2_norm(const Tensor& t);
double max_abs_diff(const Tensor& a, const Tensor& b);
bool all_finite(const Tensor& t);

}  // namespace textres
