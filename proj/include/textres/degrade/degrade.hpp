#pragma once

#include <string>
#include <utility>
#include <variant>

#include "textres/core/image.hpp"
#include "textres/core/rng.hpp"

namespace textres::degrade {

/// sigma is on the 0-255 intensity scale; the applied std is sigma / 255.
struct GaussianNoise {
  double sigma = 25.0;
};
struct Rain {
  int num_streaks = 40;
  int length_px = 9;
  double angle_deg = 80.0;
  double intensity = 0.6;
};
struct Haze {
  double beta = 1.5;
  double airlight = 0.85;
};
struct MotionBlur {
  int kernel_len = 7;
  double angle_deg = 0.0;
};

enum class Kind { GaussianNoise, Rain, Haze, MotionBlur };

using DegradationSpec = std::variant<GaussianNoise, Rain, Haze, MotionBlur>;

Kind kind_of(const DegradationSpec& spec);
std::string kind_name(Kind kind);
/// Accepts "noise"/"gaussian_noise", "rain", "haze", "blur"/"motion_blur".
Kind parse_kind(const std::string& name);

/// Throws InvalidParam on out-of-range or non-finite parameters.
void validate(const DegradationSpec& spec);

/// Pre-clip noise field with std sigma / 255, keyed on the seed.
Tensor gaussian_noise_field(const std::vector<int>& shape, double sigma, Seed seed);
Image add_gaussian_noise(const Image& img, double sigma, Seed seed);

struct HazeResult {
  Image image;
  Tensor depth;         // H x W x 1, in [0.2, 1]
  Tensor transmission;  // exp(-beta * depth)
};
HazeResult synthesize_haze_logged(const Image& img, const Haze& spec, Seed seed);
Image synthesize_haze(const Image& img, const Haze& spec, Seed seed);

struct RainResult {
  Image image;
  Tensor mask;    // H x W x 1 binary streak raster before blurring
  Tensor layer;   // blurred, intensity-scaled streak layer added to the image
  bool overlap_free = true;
};
RainResult synthesize_rain_logged(const Image& img, const Rain& spec, Seed seed);
Image synthesize_rain(const Image& img, const Rain& spec, Seed seed);

/// Normalized kernel_len x kernel_len line kernel through the center.
Tensor motion_blur_kernel(int kernel_len, double angle_deg);
/// Convolution with symmetric (edge-repeating) reflection at the borders.
Image synthesize_motion_blur(const Image& img, const MotionBlur& spec);

struct Pair {
  Image degraded;
  Image clean;
};
Pair make_pair(const Image& clean, const DegradationSpec& spec, Seed seed);

}  // namespace textres::degrade
