#include "textres/degrade/degrade.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "textres/core/error.hpp"

namespace textres::degrade {
namespace {

void check_finite(double v, const char* what) {
  require(std::isfinite(v), ErrorKind::InvalidParam, std::string(what) + " must be finite");
}

int reflect_symmetric(int i, int n) {
  // ... 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

std::vector<std::pair<int, int>> rasterize_segment(double cy, double cx, int length, double angle_deg) {
  const double rad = angle_deg * std::numbers::pi / 180.0;
  const double dy = -std::sin(rad), dx = std::cos(rad);
  std::vector<std::pair<int, int>> pts;
  const double half = (length - 1) / 2.0;
  for (int s = 0; s < length; ++s) {
    const double t = s - half;
    std::pair<int, int> p{static_cast<int>(std::lround(cy + t * dy)), static_cast<int>(std::lround(cx + t * dx))};
    if (pts.empty() || pts.back() != p) pts.push_back(p);
  }
  return pts;
}

}  // namespace

Kind kind_of(const DegradationSpec& spec) { return static_cast<Kind>(spec.index()); }

std::string kind_name(Kind kind) {
  switch (kind) {
    case Kind::GaussianNoise: return "noise";
    case Kind::Rain: return "rain";
    case Kind::Haze: return "haze";
    case Kind::MotionBlur: return "blur";
  }
  return "unknown";
}

Kind parse_kind(const std::string& name) {
  if (name == "noise" || name == "gaussian_noise") return Kind::GaussianNoise;
  if (name == "rain") return Kind::Rain;
  if (name == "haze") return Kind::Haze;
  if (name == "blur" || name == "motion_blur") return Kind::MotionBlur;
  fail(ErrorKind::InvalidParam, "unknown degradation kind '" + name + "'");
}

void validate(const DegradationSpec& spec) {
  std::visit(
      [](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, GaussianNoise>) {
          check_finite(p.sigma, "sigma");
          require(p.sigma >= 0.0 && p.sigma <= 50.0, ErrorKind::InvalidParam, "sigma must lie in [0, 50]");
        } else if constexpr (std::is_same_v<T, Rain>) {
          require(p.num_streaks >= 0, ErrorKind::InvalidParam, "num_streaks must be non-negative");
          require(p.length_px >= 1, ErrorKind::InvalidParam, "length_px must be >= 1");
          check_finite(p.angle_deg, "angle_deg");
          check_finite(p.intensity, "intensity");
          require(p.intensity >= 0.0 && p.intensity <= 1.0, ErrorKind::InvalidParam, "intensity must lie in [0, 1]");
        } else if constexpr (std::is_same_v<T, Haze>) {
          check_finite(p.beta, "beta");
          check_finite(p.airlight, "airlight");
          require(p.beta > 0.0, ErrorKind::InvalidParam, "beta must be > 0");
          require(p.airlight >= 0.6 && p.airlight <= 1.0, ErrorKind::InvalidParam, "airlight must lie in [0.6, 1]");
        } else {
          check_finite(p.angle_deg, "angle_deg");
          require(p.kernel_len >= 3 && p.kernel_len % 2 == 1, ErrorKind::InvalidParam,
                  "kernel_len must be odd and >= 3");
        }
      },
      spec);
}

Tensor gaussian_noise_field(const std::vector<int>& shape, double sigma, Seed seed) {
  validate(GaussianNoise{sigma});
  Rng rng(seed, "degrade.gaussian_noise");
  return rng.normal_tensor(shape, sigma / 255.0);
}

Image add_gaussian_noise(const Image& img, double sigma, Seed seed) {
  Tensor field = gaussian_noise_field(img.pixels().shape(), sigma, seed);
  if (sigma == 0.0) return img;
  return Image::clipped(img.pixels() + field, img.color_space());
}

HazeResult synthesize_haze_logged(const Image& img, const Haze& spec, Seed seed) {
  validate(spec);
  const int h = img.height(), w = img.width();
  // Pseudo-depth: a vertical ramp (far at the top) modulated by a few
  // low-frequency random waves, rescaled to [0.2, 1].
  Rng rng(seed, "degrade.haze_depth");
  constexpr int kWaves = 3;
  double fy[kWaves], fx[kWaves], ph[kWaves], amp[kWaves];
  for (int k = 0; k < kWaves; ++k) {
    fy[k] = rng.uniform(0.5, 2.0);
    fx[k] = rng.uniform(0.5, 2.0);
    ph[k] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    amp[k] = rng.uniform(0.05, 0.2);
  }
  Tensor raw = Tensor::hwc(h, w, 1);
  double lo = 1e300, hi = -1e300;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double v = static_cast<double>(y) / (h - 1), u = static_cast<double>(x) / (w - 1);
      double d = 1.0 - v;
      for (int k = 0; k < kWaves; ++k)
        d += amp[k] * std::sin(2.0 * std::numbers::pi * (fy[k] * v + fx[k] * u) + ph[k]);
      raw(y, x, 0) = d;
      lo = std::min(lo, d);
      hi = std::max(hi, d);
    }
  HazeResult r{img, Tensor::hwc(h, w, 1), Tensor::hwc(h, w, 1)};
  Tensor out = img.pixels();
  const double span = hi > lo ? hi - lo : 1.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double d = 0.2 + 0.8 * (raw(y, x, 0) - lo) / span;
      const double t = std::exp(-spec.beta * d);
      r.depth(y, x, 0) = d;
      r.transmission(y, x, 0) = t;
      for (int c = 0; c < img.channels(); ++c) out(y, x, c) = img(y, x, c) * t + spec.airlight * (1.0 - t);
    }
  r.image = Image::clipped(std::move(out), img.color_space());
  return r;
}

Image synthesize_haze(const Image& img, const Haze& spec, Seed seed) {
  return synthesize_haze_logged(img, spec, seed).image;
}

RainResult synthesize_rain_logged(const Image& img, const Rain& spec, Seed seed) {
  validate(spec);
  const int h = img.height(), w = img.width();
  RainResult r{img, Tensor::hwc(h, w, 1), Tensor::hwc(h, w, 1), true};
  if (spec.num_streaks == 0 || spec.intensity == 0.0) return r;

  // Occupancy grid including a one-pixel halo around each placed streak, so
  // non-overlapping streaks stay separate 8-connected components.
  std::vector<char> occupied(static_cast<std::size_t>(h) * w, 0);
  Rng rng(seed, "degrade.rain");
  constexpr int kAttempts = 64;
  for (int s = 0; s < spec.num_streaks; ++s) {
    std::vector<std::pair<int, int>> best;
    for (int attempt = 0; attempt < kAttempts; ++attempt) {
      const double cy = rng.uniform(0.0, h - 1.0), cx = rng.uniform(0.0, w - 1.0);
      auto pts = rasterize_segment(cy, cx, spec.length_px, spec.angle_deg);
      std::erase_if(pts, [&](auto p) { return p.first < 0 || p.first >= h || p.second < 0 || p.second >= w; });
      if (pts.empty()) continue;
      const bool clear = std::none_of(pts.begin(), pts.end(), [&](auto p) {
        return occupied[static_cast<std::size_t>(p.first) * w + p.second] != 0;
      });
      if (clear) {
        best = std::move(pts);
        break;
      }
      if (attempt == kAttempts - 1) {
        best = std::move(pts);
        r.overlap_free = false;
      }
    }
    for (auto [y, x] : best) {
      r.mask(y, x, 0) = 1.0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy >= 0 && yy < h && xx >= 0 && xx < w) occupied[static_cast<std::size_t>(yy) * w + xx] = 1;
        }
    }
  }

  // 3x3 binomial blur softens the streak edges.
  static constexpr double kBlur[3] = {0.25, 0.5, 0.25};
  Tensor out = img.pixels();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double v = 0.0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
          v += kBlur[dy + 1] * kBlur[dx + 1] * r.mask(reflect_symmetric(y + dy, h), reflect_symmetric(x + dx, w), 0);
      const double add = std::min(1.0, 2.0 * v) * spec.intensity;
      r.layer(y, x, 0) = add;
      for (int c = 0; c < img.channels(); ++c) out(y, x, c) += add;
    }
  r.image = Image::clipped(std::move(out), img.color_space());
  return r;
}

Image synthesize_rain(const Image& img, const Rain& spec, Seed seed) {
  return synthesize_rain_logged(img, spec, seed).image;
}

Tensor motion_blur_kernel(int kernel_len, double angle_deg) {
  validate(MotionBlur{kernel_len, angle_deg});
  Tensor k = Tensor::hwc(kernel_len, kernel_len, 1);
  const double rad = angle_deg * std::numbers::pi / 180.0;
  const double dy = -std::sin(rad), dx = std::cos(rad);
  const double c = (kernel_len - 1) / 2.0;
  const double half = (kernel_len - 1) / 2.0;
  // Bilinear splat of densely sampled points along the segment.
  constexpr int kSub = 16;
  const int samples = (kernel_len - 1) * kSub + 1;
  for (int s = 0; s < samples; ++s) {
    const double t = -half + static_cast<double>(s) / kSub;
    const double py = c + t * dy, px = c + t * dx;
    const int y0 = static_cast<int>(std::floor(py)), x0 = static_cast<int>(std::floor(px));
    const double wy = py - y0, wx = px - x0;
    for (int oy = 0; oy <= 1; ++oy)
      for (int ox = 0; ox <= 1; ++ox) {
        const int yy = y0 + oy, xx = x0 + ox;
        const double wgt = (oy ? wy : 1 - wy) * (ox ? wx : 1 - wx);
        if (yy >= 0 && yy < kernel_len && xx >= 0 && xx < kernel_len && wgt > 0) k(yy, xx, 0) += wgt;
      }
  }
  double total = 0.0;
  for (double v : k.values()) total += v;
  k *= 1.0 / total;
  return k;
}

Image synthesize_motion_blur(const Image& img, const MotionBlur& spec) {
  const Tensor k = motion_blur_kernel(spec.kernel_len, spec.angle_deg);
  const int h = img.height(), w = img.width(), ch = img.channels(), n = spec.kernel_len, r = n / 2;
  Tensor out = Tensor::hwc(h, w, ch);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ky = 0; ky < n; ++ky) {
        const int sy = reflect_symmetric(y + ky - r, h);
        for (int kx = 0; kx < n; ++kx) {
          const double wgt = k(ky, kx, 0);
          if (wgt == 0.0) continue;
          const int sx = reflect_symmetric(x + kx - r, w);
          for (int c = 0; c < ch; ++c) out(y, x, c) += wgt * img(sy, sx, c);
        }
      }
  return Image::clipped(std::move(out), img.color_space());
}

Pair make_pair(const Image& clean, const DegradationSpec& spec, Seed seed) {
  validate(spec);
  Image degraded = std::visit(
      [&](const auto& p) -> Image {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, GaussianNoise>) return add_gaussian_noise(clean, p.sigma, seed);
        else if constexpr (std::is_same_v<T, Rain>) return synthesize_rain(clean, p, seed);
        else if constexpr (std::is_same_v<T, Haze>) return synthesize_haze(clean, p, seed);
        else return synthesize_motion_blur(clean, p);
      },
      spec);
  return Pair{std::move(degraded), clean};
}

}  // namespace textres::degrade
