#pragma once

#include "textres/core/tensor.hpp"

namespace textres {

enum class ColorSpace { RGB, GRAY, YCbCr };

/// H x W x C raster with values in [0, 1].
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels, double fill = 0.0,
        ColorSpace space = ColorSpace::RGB);
  /// Validates dims and range; values are not clipped.
  Image(Tensor pixels, ColorSpace space);

  /// Clips to [0, 1] then validates.
  static Image clipped(Tensor pixels, ColorSpace space = ColorSpace::RGB);

  int height() const { return pixels_.height(); }
  int width() const { return pixels_.width(); }
  int channels() const { return pixels_.channels(); }
  ColorSpace color_space() const noexcept { return space_; }
  bool is_rgb() const { return space_ == ColorSpace::RGB && channels() == 3; }

  const Tensor& pixels() const noexcept { return pixels_; }
  double operator()(int y, int x, int c) const { return pixels_(y, x, c); }

  bool same_dims(const Image& other) const {
    return height() == other.height() && width() == other.width() && channels() == other.channels();
  }
  bool operator==(const Image& other) const = default;

 private:
  Tensor pixels_;
  ColorSpace space_ = ColorSpace::RGB;
};

void clip_unit(Tensor& t);

/// Bilinear resize with half-pixel centers and edge clamping.
Tensor resize_bilinear(const Tensor& src, int out_h, int out_w);
/// Box-filter downsample by an integer factor.
Tensor area_downsample(const Tensor& src, int factor);

}  // namespace textres
