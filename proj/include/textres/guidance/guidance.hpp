#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "textres/core/checkpoint.hpp"
#include "textres/core/image.hpp"
#include "textres/encoders/encoders.hpp"
#include "textres/nn/graph.hpp"
#include "textres/textual/textual.hpp"

namespace textres::guidance {

/// Frozen epsilon predictor eps_theta(z_t, t, cond).
class DenoiserBackend {
 public:
  virtual ~DenoiserBackend() = default;

  /// Output has the shape of z_t. Differentiable with respect to cond.
  virtual nn::Var predict(nn::Graph& g, nn::Var z_t, int t, nn::Var cond) const = 0;

  Tensor predict(const Tensor& z_t, int t, const textual::TextualEmbedding& cond) const;
  bool frozen() const noexcept { return true; }
};

/// Closed-form stand-in for a conditional UNet: the posterior mean of the
/// noise when the clean latent is assumed Gaussian around a fixed random
/// projection of the conditioning tokens,
///   eps_hat = k_t (z_t - sqrt(abar_t) R(P cond)),
///   k_t = sqrt(1 - abar_t) / (abar_t s + 1 - abar_t),
/// where s is the prior variance and R bilinearly resizes the cond_grid
/// latent to the size of z_t.
class ToyDenoiser final : public DenoiserBackend {
 public:
  ToyDenoiser(const encoders::BackendDescriptor& desc, encoders::NoiseSchedule schedule, int n_words);
  using DenoiserBackend::predict;

  nn::Var predict(nn::Graph& g, nn::Var z_t, int t, nn::Var cond) const override;

  /// R(P cond) at the given latent size; the latent the toy model "draws" for a prompt.
  Tensor prompt_latent(const textual::TextualEmbedding& cond, int h, int w) const;

 private:
  encoders::NoiseSchedule schedule_;
  int grid_;
  int channels_;
  int n_words_;
  int text_dim_;
  double prior_variance_;
  Tensor projection_;  // (grid * grid * c_lat, n_words * text_dim), orthonormal columns when tall
};

enum class Stage { Stage1, Stage2 };

struct StageConfig {
  Stage stage = Stage::Stage1;
  int steps = 200;
  double lr = 1e-3;
  int batch = 4;
  Seed seed{0};
  int image_size = 32;  // images are resized to this before encoding

  void validate() const;
};

struct SamplerConfig {
  int num_steps = 200;
  double guidance_scale = 5.0;
  Seed seed{0};
  int condition_size = 32;  // input is resized to this before embedding; 0 keeps it as is

  void validate() const;
};

struct LossRecord {
  int step;
  double loss;
};

struct StageResult {
  Checkpoint checkpoint;
  std::vector<LossRecord> curve;
};

/// Mean over elements of (eps - eps_theta(noise_latent(z, t, eps), t, cond))^2.
double ldm_loss(const encoders::LatentCode& z, const textual::TextualEmbedding& cond, int t, const Tensor& eps,
                const DenoiserBackend& backend, const encoders::NoiseSchedule& sched);
nn::Var ldm_loss(nn::Graph& g, const encoders::LatentCode& z, nn::Var cond, int t, const Tensor& eps,
                 const DenoiserBackend& backend, const encoders::NoiseSchedule& sched);

/// Trains the image-to-text mapper on clean and degraded images alike, each
/// conditioned on its own projected embedding. Only mapper parameters change.
StageResult train_stage1(const std::vector<Image>& images, const StageConfig& cfg, const encoders::Backends& backends,
                         const DenoiserBackend& denoiser, const textual::Mlp& initial_mapper);

/// Trains the textual restorer so that restored embeddings of degraded images
/// reconstruct the paired clean latents. `mapper` is frozen; nullptr means the
/// stage-1 checkpoint is missing and raises DependencyMissing.
StageResult train_stage2(const std::vector<std::pair<Image, Image>>& degraded_clean_pairs, const StageConfig& cfg,
                         const encoders::Backends& backends, const DenoiserBackend& denoiser,
                         const textual::Mlp* mapper, const textual::Mlp& initial_restorer);

/// Deterministic DDIM (eta = 0) over `num_steps` trailing-spaced timesteps
/// with classifier-free guidance against an all-zero embedding.
encoders::LatentCode ddim_sample(const textual::TextualEmbedding& cond, const DenoiserBackend& backend,
                                 const encoders::NoiseSchedule& sched, const SamplerConfig& cfg,
                                 std::array<int, 3> latent_shape);

/// Timesteps visited by ddim_sample, from noisiest to cleanest.
std::vector<int> ddim_timesteps(int total_steps, int num_steps);

/// G = decode(ddim(restore(map(encode(x))))) resized to x's size. A null
/// restorer skips textual restoration.
Image generate_guidance(const Image& x, const textual::Mlp& mapper, const textual::Mlp* restorer,
                        const encoders::Backends& backends, const DenoiserBackend& denoiser,
                        const SamplerConfig& cfg);

/// Conditioning embedding computed inside generate_guidance (after optional restoration).
textual::TextualEmbedding condition_embedding(const Image& x, const textual::Mlp& mapper,
                                              const textual::Mlp* restorer, const encoders::Backends& backends,
                                              int condition_size);

}  // namespace textres::guidance
