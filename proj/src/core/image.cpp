#include "textres/core/image.hpp"

#include <algorithm>
#include <cmath>

#include "textres/core/error.hpp"

namespace textres {

Image::Image(int height, int width, int channels, double fill, ColorSpace space)
    : Image(Tensor::hwc(height, width, channels, fill), space) {}

Image::Image(Tensor pixels, ColorSpace space) : pixels_(std::move(pixels)), space_(space) {
  require(pixels_.rank() == 3, ErrorKind::InvalidInput, "image must be H x W x C");
  require(height() >= 8 && width() >= 8, ErrorKind::InvalidInput,
          "image must be at least 8x8, got " + pixels_.shape_string());
  require(channels() == 1 || channels() == 3, ErrorKind::InvalidInput, "image must have 1 or 3 channels");
  for (double v : pixels_.values()) {
    require(std::isfinite(v) && v >= 0.0 && v <= 1.0, ErrorKind::InvalidInput,
            "image values must be finite and in [0,1]");
  }
}

Image Image::clipped(Tensor pixels, ColorSpace space) {
  clip_unit(pixels);
  return Image(std::move(pixels), space);
}

void clip_unit(Tensor& t) {
  for (double& v : t.values()) v = std::isnan(v) ? 0.0 : std::clamp(v, 0.0, 1.0);
}

Tensor resize_bilinear(const Tensor& src, int out_h, int out_w) {
  require(src.rank() == 3 && out_h > 0 && out_w > 0, ErrorKind::InvalidInput, "bad resize request");
  const int h = src.height(), w = src.width(), c = src.channels();
  if (h == out_h && w == out_w) return src;
  Tensor out = Tensor::hwc(out_h, out_w, c);
  const double sy = static_cast<double>(h) / out_h;
  const double sx = static_cast<double>(w) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, h - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, w - 1);
      const double wx = fx - x0;
      for (int ch = 0; ch < c; ++ch) {
        const double top = src(y0, x0, ch) * (1 - wx) + src(y0, x1, ch) * wx;
        const double bot = src(y1, x0, ch) * (1 - wx) + src(y1, x1, ch) * wx;
        out(y, x, ch) = top * (1 - wy) + bot * wy;
      }
    }
  }
  return out;
}

Tensor area_downsample(const Tensor& src, int factor) {
  require(factor >= 1 && src.height() % factor == 0 && src.width() % factor == 0,
          ErrorKind::InvalidInput, "area_downsample: dims not divisible by factor");
  const int h = src.height() / factor, w = src.width() / factor, c = src.channels();
  Tensor out = Tensor::hwc(h, w, c);
  const double inv = 1.0 / (factor * factor);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (int dy = 0; dy < factor; ++dy)
          for (int dx = 0; dx < factor; ++dx) s += src(y * factor + dy, x * factor + dx, ch);
        out(y, x, ch) = s * inv;
      }
  return out;
}

}  // namespace textres
