#include "textres/metrics/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <vector>

#include "textres/core/error.hpp"

namespace textres::metrics {
namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::vector<double> gaussian_window() {
  std::vector<double> w(kWindow * kWindow);
  double total = 0.0;
  for (int y = 0; y < kWindow; ++y) {
    for (int x = 0; x < kWindow; ++x) {
      const double dy = y - kWindow / 2, dx = x - kWindow / 2;
      w[y * kWindow + x] = std::exp(-(dx * dx + dy * dy) / (2 * kSigma * kSigma));
      total += w[y * kWindow + x];
    }
  }
  for (double& v : w) v /= total;
  return w;
}

Tensor ssim_plane(const Image& img) {
  if (img.channels() == 1) return img.pixels();
  return luma(img);
}

}  // namespace

double psnr(const Image& a, const Image& b, PsnrMode mode) {
  require(a.same_dims(b), ErrorKind::InvalidInput, "psnr: image dims differ");
  double mse = 0.0;
  if (mode == PsnrMode::RGB) {
    for (std::size_t i = 0; i < a.pixels().size(); ++i) {
      const double d = a.pixels()[i] - b.pixels()[i];
      mse += d * d;
    }
    mse /= static_cast<double>(a.pixels().size());
  } else {
    require(a.is_rgb() && b.is_rgb(), ErrorKind::InvalidInput, "Y-channel psnr needs RGB inputs");
    const Tensor ya = luma(a), yb = luma(b);
    for (std::size_t i = 0; i < ya.size(); ++i) {
      const double d = ya[i] - yb[i];
      mse += d * d;
    }
    mse /= static_cast<double>(ya.size());
  }
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(mse);
}

Tensor luma(const Image& img) {
  require(img.is_rgb(), ErrorKind::InvalidInput, "luma needs an RGB image");
  Tensor y = Tensor::hwc(img.height(), img.width(), 1);
  for (int r = 0; r < img.height(); ++r) {
    for (int c = 0; c < img.width(); ++c) {
      const double* p = img.pixels().pixel(r, c);
      y(r, c, 0) = (16.0 + 65.481 * p[0] + 128.553 * p[1] + 24.966 * p[2]) / 255.0;
    }
  }
  return y;
}

Image rgb_to_ycbcr(const Image& img) {
  require(img.is_rgb(), ErrorKind::InvalidInput, "rgb_to_ycbcr needs an RGB image");
  Tensor out = Tensor::hwc(img.height(), img.width(), 3);
  for (int r = 0; r < img.height(); ++r) {
    for (int c = 0; c < img.width(); ++c) {
      const double* p = img.pixels().pixel(r, c);
      double* q = out.pixel(r, c);
      q[0] = (16.0 + 65.481 * p[0] + 128.553 * p[1] + 24.966 * p[2]) / 255.0;
      q[1] = (128.0 - 37.797 * p[0] - 74.203 * p[1] + 112.0 * p[2]) / 255.0;
      q[2] = (128.0 + 112.0 * p[0] - 93.786 * p[1] - 18.214 * p[2]) / 255.0;
    }
  }
  return Image::clipped(std::move(out), ColorSpace::YCbCr);
}

double ssim(const Image& a, const Image& b) {
  require(a.same_dims(b), ErrorKind::InvalidInput, "ssim: image dims differ");
  require(a.height() >= kWindow && a.width() >= kWindow, ErrorKind::InvalidInput, "ssim needs at least 11x11");
  const Tensor pa = ssim_plane(a), pb = ssim_plane(b);
  static const std::vector<double> win = gaussian_window();
  const int oh = a.height() - kWindow + 1, ow = a.width() - kWindow + 1;
  double total = 0.0;
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int dy = 0; dy < kWindow; ++dy) {
        for (int dx = 0; dx < kWindow; ++dx) {
          const double w = win[dy * kWindow + dx];
          const double va = pa(y + dy, x + dx, 0), vb = pb(y + dy, x + dx, 0);
          ma += w * va;
          mb += w * vb;
          saa += w * va * va;
          sbb += w * vb * vb;
          sab += w * va * vb;
        }
      }
      const double var_a = saa - ma * ma, var_b = sbb - mb * mb, cov = sab - ma * mb;
      total += ((2 * ma * mb + kC1) * (2 * cov + kC2)) / ((ma * ma + mb * mb + kC1) * (var_a + var_b + kC2));
    }
  }
  return total / (static_cast<double>(oh) * ow);
}

std::string format_db(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace textres::metrics
