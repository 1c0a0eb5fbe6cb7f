#pragma once

#include <limits>
#include <string>

#include "textres/core/image.hpp"

namespace textres::metrics {

enum class PsnrMode { RGB, Y };

/// 20 log10(1 / rmse) over the selected channels; +inf when the images match.
double psnr(const Image& a, const Image& b, PsnrMode mode = PsnrMode::RGB);

/// BT.601 with studio-range luma: Y in [16/255, 235/255], chroma in [16/255, 240/255].
Image rgb_to_ycbcr(const Image& img);
/// Luma plane only, as a single-channel tensor.
Tensor luma(const Image& img);

/// Mean SSIM over all valid 11x11 Gaussian (sigma 1.5) windows of the luma
/// (or the single channel of a gray image).
double ssim(const Image& a, const Image& b);

struct MetricReport {
  double psnr_rgb = 0.0;
  double psnr_y = 0.0;
  double ssim = 0.0;
  int n_images = 0;
};

/// "inf" for infinite values, otherwise the shortest round-tripping decimal.
std::string format_db(double v);

}  // namespace textres::metrics
