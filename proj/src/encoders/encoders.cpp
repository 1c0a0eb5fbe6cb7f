#include "textres/encoders/encoders.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <filesystem>

#include "textres/core/error.hpp"

namespace textres::encoders {
namespace {

// Columns are orthonormal: M^T M = I_3.
constexpr double kMix[4][3] = {
    {0.5, 0.5, 0.5},
    {0.5, -0.5, 0.5},
    {0.5, 0.5, -0.5},
    {0.5, -0.5, -0.5},
};

// Constant entry appended to the centered thumbnail so the contrast survives normalization.
constexpr double kAnchor = 1.0;

}  // namespace

Tensor random_orthonormal(int rows, int cols, Seed seed, std::string_view stage) {
  require(rows >= 1 && cols >= 1, ErrorKind::InvalidParam, "orthonormal matrix needs positive dims");
  const int tall = std::max(rows, cols), narrow = std::min(rows, cols);
  Rng rng(seed, stage);
  Eigen::MatrixXd g(tall, narrow);
  for (int j = 0; j < narrow; ++j)
    for (int i = 0; i < tall; ++i) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(tall, narrow);
  Tensor out({rows, cols});
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out[static_cast<std::size_t>(r) * cols + c] = rows >= cols ? q(r, c) : q(c, r);
  return out;
}

NoiseSchedule NoiseSchedule::linear(int timesteps, double beta_start, double beta_end) {
  require(timesteps >= 1, ErrorKind::InvalidParam, "schedule needs at least one step");
  require(beta_start > 0 && beta_end < 1 && beta_start <= beta_end, ErrorKind::InvalidParam, "bad beta range");
  NoiseSchedule s;
  s.timesteps = timesteps;
  s.alphas_cumprod.resize(static_cast<std::size_t>(timesteps));
  double prod = 1.0;
  for (int t = 0; t < timesteps; ++t) {
    const double beta =
        timesteps == 1 ? beta_start : beta_start + (beta_end - beta_start) * t / static_cast<double>(timesteps - 1);
    prod *= 1.0 - beta;
    s.alphas_cumprod[static_cast<std::size_t>(t)] = prod;
  }
  return s;
}

void NoiseSchedule::validate() const {
  require(timesteps >= 1 && alphas_cumprod.size() == static_cast<std::size_t>(timesteps), ErrorKind::InvalidParam,
          "schedule length does not match T");
  for (std::size_t t = 0; t < alphas_cumprod.size(); ++t) {
    const double a = alphas_cumprod[t];
    require(std::isfinite(a) && a > 0.0 && a <= 1.0, ErrorKind::InvalidParam, "alphas_cumprod must lie in (0, 1]");
    if (t > 0) require(a < alphas_cumprod[t - 1], ErrorKind::InvalidParam, "alphas_cumprod must strictly decrease");
  }
}

ToyImageEncoder::ToyImageEncoder(const BackendDescriptor& desc)
    : dim_(desc.image_dim), grid_(desc.embed_grid), id_(desc.id) {
  const int in = grid_ * grid_ * 3 + 1;
  require(dim_ >= 1, ErrorKind::InvalidParam, "image_dim must be positive");
  projection_ = random_orthonormal(dim_, in, Seed{desc.weight_seed}, "encoders.projection");
}

ImageEmbedding ToyImageEncoder::encode(const Image& img) const {
  require(img.is_rgb(), ErrorKind::InvalidInput, "image encoder expects an RGB image");
  const bool exact = img.height() % grid_ == 0 && img.width() % grid_ == 0 && img.height() == img.width();
  const Tensor thumb = exact ? area_downsample(img.pixels(), img.height() / grid_)
                             : resize_bilinear(img.pixels(), grid_, grid_);
  const int in = static_cast<int>(thumb.size()) + 1;
  Eigen::VectorXd x(in);
  for (int i = 0; i + 1 < in; ++i) x(i) = thumb[static_cast<std::size_t>(i)] - 0.5;
  x(in - 1) = kAnchor;
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> q(projection_.data(), dim_,
                                                                                                in);
  Eigen::VectorXd e = q * x;
  const double norm = e.norm();
  Tensor v({dim_});
  for (int i = 0; i < dim_; ++i) v[static_cast<std::size_t>(i)] = e(i) / norm;
  return ImageEmbedding{std::move(v), id_};
}

ToyAutoencoder::ToyAutoencoder(const BackendDescriptor& desc)
    : factor_(desc.downscale), scale_(desc.latent_scale) {
  require(scale_ > 0 && std::isfinite(scale_), ErrorKind::InvalidParam, "latent scale must be positive");
  require(desc.latent_channels == 4, ErrorKind::InvalidParam, "toy autoencoder has exactly 4 latent channels");
  require(factor_ >= 1, ErrorKind::InvalidParam, "downscale factor must be positive");
}

LatentCode ToyAutoencoder::encode(const Image& img) const {
  require(img.is_rgb(), ErrorKind::InvalidInput, "autoencoder expects an RGB image");
  require(img.height() % factor_ == 0 && img.width() % factor_ == 0, ErrorKind::InvalidInput,
          "image dims must be divisible by the downscale factor " + std::to_string(factor_));
  const Tensor pooled = area_downsample(img.pixels(), factor_);
  const int h = pooled.height(), w = pooled.width();
  Tensor z = Tensor::hwc(h, w, 4);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < 4; ++k) {
        double s = 0.0;
        for (int c = 0; c < 3; ++c) s += kMix[k][c] * (pooled(y, x, c) - 0.5);
        z(y, x, k) = scale_ * s;
      }
  return LatentCode{std::move(z), std::nullopt};
}

Image ToyAutoencoder::decode(const LatentCode& z) const {
  require(!z.timestep.has_value(), ErrorKind::InvalidInput, "cannot decode a noised latent");
  require(z.data.rank() == 3 && z.data.channels() == 4, ErrorKind::InvalidInput, "latent must be h x w x 4");
  const int h = z.data.height(), w = z.data.width();
  Tensor small = Tensor::hwc(h, w, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        double s = 0.0;
        for (int k = 0; k < 4; ++k) s += kMix[k][c] * z.data(y, x, k);
        small(y, x, c) = s / scale_ + 0.5;
      }
  return Image::clipped(resize_bilinear(small, h * factor_, w * factor_));
}

LatentCode noise_latent(const LatentCode& z, int t, const Tensor& eps, const NoiseSchedule& sched) {
  require(t >= 0 && t < sched.timesteps, ErrorKind::InvalidInput, "timestep out of range");
  require(z.data.same_shape(eps), ErrorKind::InvalidInput,
          "noise shape " + eps.shape_string() + " does not match latent " + z.data.shape_string());
  const double abar = sched.alphas_cumprod[static_cast<std::size_t>(t)];
  const double a = std::sqrt(abar), b = std::sqrt(1.0 - abar);
  Tensor out(z.data.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * z.data[i] + b * eps[i];
  return LatentCode{std::move(out), t};
}

Backends make_backends(const std::string& selector, const BackendDescriptor& desc) {
  if (selector == "toy") {
    return Backends{desc, std::make_shared<ToyImageEncoder>(desc), std::make_shared<ToyAutoencoder>(desc),
                    NoiseSchedule::linear(desc.timesteps)};
  }
  if (selector.rfind("adapter:", 0) == 0) {
    const std::string path = selector.substr(8);
    require(std::filesystem::exists(path), ErrorKind::DependencyMissing, "adapter weights not found at " + path);
    fail(ErrorKind::DependencyMissing, "no adapter loader is registered for " + path);
  }
  fail(ErrorKind::ConfigError, "unknown backend selector '" + selector + "'");
}

}  // namespace textres::encoders
