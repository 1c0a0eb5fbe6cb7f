#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "textres/core/image.hpp"
#include "textres/core/rng.hpp"

namespace textres::encoders {

/// Self-description of a frozen backend so downstream code never hardcodes
/// embedding widths, downscale factors or step counts.
struct BackendDescriptor {
  std::string id = "toy";
  int image_dim = 256;       // D_img
  int embed_grid = 8;        // toy image encoder samples a grid x grid thumbnail
  int downscale = 4;         // f
  int latent_channels = 4;   // c_lat
  int text_dim = 12;         // D, width of one textual word embedding
  int timesteps = 1000;      // T
  int native_size = 64;      // guidance resolution
  int cond_grid = 8;         // toy denoiser conditions on a cond_grid^2 latent
  double prior_variance = 0.1;
  double latent_scale = 6.0;  // toy autoencoder gain applied after colour mixing
  std::uint64_t weight_seed = 0x7e57'0001;
};

struct ImageEmbedding {
  Tensor vector;  // (D_img)
  std::string backend_id;
};

struct LatentCode {
  Tensor data;  // h x w x c_lat
  std::optional<int> timestep;
};

struct NoiseSchedule {
  int timesteps = 0;
  std::vector<double> alphas_cumprod;

  /// Linear beta ramp; the defaults are the latent-diffusion endpoints.
  static NoiseSchedule linear(int timesteps = 1000, double beta_start = 0.00085, double beta_end = 0.012);
  /// Throws InvalidParam unless values lie in (0, 1] and strictly decrease.
  void validate() const;
};

class ImageEncoder {
 public:
  virtual ~ImageEncoder() = default;
  virtual ImageEmbedding encode(const Image& img) const = 0;
  virtual int dim() const = 0;
};

class LatentAutoencoder {
 public:
  virtual ~LatentAutoencoder() = default;
  virtual LatentCode encode(const Image& img) const = 0;
  virtual Image decode(const LatentCode& z) const = 0;
  virtual int factor() const = 0;
  virtual int latent_channels() const = 0;
};

/// Thumbnail -> fixed random orthogonal projection -> L2 normalization.
class ToyImageEncoder final : public ImageEncoder {
 public:
  explicit ToyImageEncoder(const BackendDescriptor& desc);
  ImageEmbedding encode(const Image& img) const override;
  int dim() const override { return dim_; }

 private:
  int dim_;
  int grid_;
  std::string id_;
  Tensor projection_;  // (D_img, grid * grid * 3 + 1)
};

/// Strided average pool + fixed orthonormal color mixing; decode applies the
/// transpose and a bilinear upsample.
class ToyAutoencoder final : public LatentAutoencoder {
 public:
  explicit ToyAutoencoder(const BackendDescriptor& desc);
  LatentCode encode(const Image& img) const override;
  Image decode(const LatentCode& z) const override;
  int factor() const override { return factor_; }
  int latent_channels() const override { return 4; }

  double latent_scale() const noexcept { return scale_; }

 private:
  int factor_;
  double scale_;
};

/// z_t = sqrt(abar_t) z + sqrt(1 - abar_t) eps.
LatentCode noise_latent(const LatentCode& z, int t, const Tensor& eps, const NoiseSchedule& sched);

/// Backend bundle selected by the `backend` config key.
struct Backends {
  BackendDescriptor descriptor;
  std::shared_ptr<const ImageEncoder> image_encoder;
  std::shared_ptr<const LatentAutoencoder> autoencoder;
  NoiseSchedule schedule;
};

/// Random matrix with orthonormal rows (rows <= cols) or columns (rows > cols).
Tensor random_orthonormal(int rows, int cols, Seed seed, std::string_view stage);

/// "toy" builds the closed-form backends; "adapter:<path>" is reserved for
/// externally supplied weights and currently reports DependencyMissing.

Backends make_backends(const std::string& selector, const BackendDescriptor& desc = {});

}  // namespace textres::encoders
