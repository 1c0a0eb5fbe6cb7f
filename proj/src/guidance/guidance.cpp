#include "textres/guidance/guidance.hpp"

#include <cmath>

#include "textres/core/error.hpp"
#include "textres/nn/ops.hpp"

namespace textres::guidance {
namespace {

Image resized(const Image& img, int size) {
  if (size <= 0 || (img.height() == size && img.width() == size)) return img;
  return Image::clipped(resize_bilinear(img.pixels(), size, size), img.color_space());
}

struct Prepared {
  Tensor embedding;
  encoders::LatentCode latent;
};

// Shared loop for both stages: `cond_of(g, item)` builds the conditioning for
// one training item on the graph and `latent_of(item)` supplies its target.
template <typename CondFn, typename LatentFn>
std::vector<LossRecord> run_ldm_training(std::size_t item_count, const StageConfig& cfg,
                                         const encoders::Backends& backends, const DenoiserBackend& denoiser,
                                         nn::ParamSet& params, const char* stage_name, CondFn cond_of,
                                         LatentFn latent_of) {
  nn::Adam adam(params);
  std::vector<LossRecord> curve;
  curve.reserve(static_cast<std::size_t>(cfg.steps));
  const int T = backends.schedule.timesteps;
  for (int step = 0; step < cfg.steps; ++step) {
    Rng rng(cfg.seed, stage_name, static_cast<std::uint64_t>(step));
    nn::Graph g;
    nn::Var total{};
    for (int b = 0; b < cfg.batch; ++b) {
      const std::size_t item = rng.below(item_count);
      const int t = static_cast<int>(rng.below(static_cast<std::uint64_t>(T)));
      const encoders::LatentCode& z = latent_of(item);
      Tensor eps = rng.normal_tensor(z.data.shape());
      nn::Var loss = ldm_loss(g, z, cond_of(g, item), t, eps, denoiser, backends.schedule);
      total = total.valid() ? nn::add(g, total, loss) : loss;
    }
    total = nn::scale(g, total, 1.0 / cfg.batch);
    g.backward(total);
    adam.step(params, g.gradients(params), {{"main", cfg.lr}});
    curve.push_back({step, g.value(total)[0]});
  }
  return curve;
}

}  // namespace

Tensor DenoiserBackend::predict(const Tensor& z_t, int t, const textual::TextualEmbedding& cond) const {
  nn::Graph g;
  return g.value(predict(g, g.constant(z_t), t, g.constant(cond.words)));
}

ToyDenoiser::ToyDenoiser(const encoders::BackendDescriptor& desc, encoders::NoiseSchedule schedule, int n_words)
    : schedule_(std::move(schedule)),
      grid_(desc.cond_grid),
      channels_(desc.latent_channels),
      n_words_(n_words),
      text_dim_(desc.text_dim),
      prior_variance_(desc.prior_variance) {
  schedule_.validate();
  require(n_words_ > 0 && text_dim_ > 0 && grid_ > 0, ErrorKind::InvalidParam, "toy denoiser dims must be positive");
  require(prior_variance_ > 0, ErrorKind::InvalidParam, "prior variance must be positive");
  const int cond = n_words_ * text_dim_;
  projection_ = encoders::random_orthonormal(grid_ * grid_ * channels_, cond, Seed{desc.weight_seed},
                                            "guidance.toy_denoiser." + std::to_string(cond));
}

nn::Var ToyDenoiser::predict(nn::Graph& g, nn::Var z_t, int t, nn::Var cond) const {
  const Tensor& z = g.value(z_t);
  require(z.rank() == 3 && z.channels() == channels_, ErrorKind::InvalidInput, "latent must be h x w x c_lat");
  require(g.value(cond).size() == static_cast<std::size_t>(n_words_ * text_dim_), ErrorKind::InvalidInput,
          "conditioning must be " + std::to_string(n_words_) + " x " + std::to_string(text_dim_));
  require(t >= 0 && t < schedule_.timesteps, ErrorKind::InvalidInput, "timestep out of range");
  const double abar = schedule_.alphas_cumprod[static_cast<std::size_t>(t)];
  const double k = std::sqrt(1.0 - abar) / (abar * prior_variance_ + 1.0 - abar);

  nn::Var drawn = nn::linear(g, cond, g.constant(projection_), nn::Var{});
  drawn = nn::reshape(g, drawn, {grid_, grid_, channels_});
  drawn = nn::resize_bilinear(g, drawn, z.height(), z.width());
  nn::Var residual = nn::sub(g, z_t, nn::scale(g, drawn, std::sqrt(abar)));
  return nn::scale(g, residual, k);
}

Tensor ToyDenoiser::prompt_latent(const textual::TextualEmbedding& cond, int h, int w) const {
  nn::Graph g;
  nn::Var drawn = nn::linear(g, g.constant(cond.words), g.constant(projection_), nn::Var{});
  drawn = nn::reshape(g, drawn, {grid_, grid_, channels_});
  return g.value(nn::resize_bilinear(g, drawn, h, w));
}

void StageConfig::validate() const {
  require(steps >= 1, ErrorKind::InvalidParam, "stage steps must be >= 1");
  require(lr > 0 && std::isfinite(lr), ErrorKind::InvalidParam, "stage lr must be positive");
  require(batch >= 1, ErrorKind::InvalidParam, "stage batch must be >= 1");
  require(image_size >= 8, ErrorKind::InvalidParam, "stage image_size must be >= 8");
}

void SamplerConfig::validate() const {
  require(num_steps >= 1, ErrorKind::InvalidParam, "sampler num_steps must be >= 1");
  require(guidance_scale >= 1 && std::isfinite(guidance_scale), ErrorKind::InvalidParam,
          "guidance scale must be >= 1");
}

double ldm_loss(const encoders::LatentCode& z, const textual::TextualEmbedding& cond, int t, const Tensor& eps,
                const DenoiserBackend& backend, const encoders::NoiseSchedule& sched) {
  nn::Graph g;
  return g.value(ldm_loss(g, z, g.constant(cond.words), t, eps, backend, sched))[0];
}

nn::Var ldm_loss(nn::Graph& g, const encoders::LatentCode& z, nn::Var cond, int t, const Tensor& eps,
                 const DenoiserBackend& backend, const encoders::NoiseSchedule& sched) {
  const encoders::LatentCode z_t = encoders::noise_latent(z, t, eps, sched);
  nn::Var pred = backend.predict(g, g.constant(z_t.data), t, cond);
  require(g.value(pred).same_shape(eps), ErrorKind::InvalidInput, "denoiser output shape differs from the noise");
  return nn::mean_square(g, nn::sub(g, g.constant(eps), pred));
}

StageResult train_stage1(const std::vector<Image>& images, const StageConfig& cfg, const encoders::Backends& backends,
                         const DenoiserBackend& denoiser, const textual::Mlp& initial_mapper) {
  cfg.validate();
  require(!images.empty(), ErrorKind::InvalidInput, "stage 1 needs at least one image");
  std::vector<Prepared> items;
  items.reserve(images.size());
  for (const Image& img : images) {
    const Image x = resized(img, cfg.image_size);
    items.push_back({backends.image_encoder->encode(x).vector, backends.autoencoder->encode(x)});
  }
  textual::Mlp mapper = initial_mapper;
  StageResult result;
  result.curve = run_ldm_training(
      items.size(), cfg, backends, denoiser, mapper.params(), "guidance.stage1",
      [&](nn::Graph& g, std::size_t i) { return textual::i2t_map(g, g.constant(items[i].embedding), mapper); },
      [&](std::size_t i) -> const encoders::LatentCode& { return items[i].latent; });
  result.checkpoint = mapper.params().to_checkpoint(textual::kMapperModuleId, "");
  return result;
}

StageResult train_stage2(const std::vector<std::pair<Image, Image>>& degraded_clean_pairs, const StageConfig& cfg,
                         const encoders::Backends& backends, const DenoiserBackend& denoiser,
                         const textual::Mlp* mapper, const textual::Mlp& initial_restorer) {
  require(mapper != nullptr, ErrorKind::DependencyMissing, "stage 2 requires a trained stage-1 mapper");
  cfg.validate();
  require(!degraded_clean_pairs.empty(), ErrorKind::InvalidInput, "stage 2 needs at least one pair");
  std::vector<Prepared> items;
  items.reserve(degraded_clean_pairs.size());
  for (const auto& [degraded, clean] : degraded_clean_pairs) {
    const Image xd = resized(degraded, cfg.image_size);
    const Image xc = resized(clean, cfg.image_size);
    const auto e_txt = textual::i2t_map(backends.image_encoder->encode(xd), *mapper);
    items.push_back({e_txt.words, backends.autoencoder->encode(xc)});
  }
  textual::Mlp restorer = initial_restorer;
  StageResult result;
  result.curve = run_ldm_training(
      items.size(), cfg, backends, denoiser, restorer.params(), "guidance.stage2",
      [&](nn::Graph& g, std::size_t i) {
        return textual::textual_restore(g, g.constant(items[i].embedding), restorer);
      },
      [&](std::size_t i) -> const encoders::LatentCode& { return items[i].latent; });
  result.checkpoint = restorer.params().to_checkpoint(textual::kRestorerModuleId, "");
  return result;
}

std::vector<int> ddim_timesteps(int total_steps, int num_steps) {
  require(num_steps >= 1 && num_steps <= total_steps, ErrorKind::InvalidParam,
          "num_steps must lie in [1, T]");
  std::vector<int> ts;
  ts.reserve(static_cast<std::size_t>(num_steps));
  const double ratio = static_cast<double>(total_steps) / num_steps;
  for (int i = 0; i < num_steps; ++i) ts.push_back(static_cast<int>(std::lround(total_steps - i * ratio)) - 1);
  return ts;
}

encoders::LatentCode ddim_sample(const textual::TextualEmbedding& cond, const DenoiserBackend& backend,
                                 const encoders::NoiseSchedule& sched, const SamplerConfig& cfg,
                                 std::array<int, 3> latent_shape) {
  cfg.validate();
  sched.validate();
  Rng rng(cfg.seed, "guidance.ddim_init");
  Tensor z = rng.normal_tensor({latent_shape[0], latent_shape[1], latent_shape[2]});
  const auto null_cond = textual::TextualEmbedding::zeros(cond.n_words(), cond.dim());
  const std::vector<int> ts = ddim_timesteps(sched.timesteps, cfg.num_steps);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const int t = ts[i];
    const double abar = sched.alphas_cumprod[static_cast<std::size_t>(t)];
    const double abar_prev = i + 1 < ts.size() ? sched.alphas_cumprod[static_cast<std::size_t>(ts[i + 1])] : 1.0;
    Tensor eps = backend.predict(z, t, cond);
    if (cfg.guidance_scale != 1.0) {
      const Tensor eps_uncond = backend.predict(z, t, null_cond);
      for (std::size_t k = 0; k < eps.size(); ++k)
        eps[k] = eps_uncond[k] + cfg.guidance_scale * (eps[k] - eps_uncond[k]);
    }
    const double sa = std::sqrt(abar), sb = std::sqrt(1.0 - abar);
    const double sa_prev = std::sqrt(abar_prev), sb_prev = std::sqrt(1.0 - abar_prev);
    for (std::size_t k = 0; k < z.size(); ++k) {
      const double x0 = (z[k] - sb * eps[k]) / sa;
      z[k] = sa_prev * x0 + sb_prev * eps[k];
    }
  }
  return encoders::LatentCode{std::move(z), std::nullopt};
}

textual::TextualEmbedding condition_embedding(const Image& x, const textual::Mlp& mapper,
                                              const textual::Mlp* restorer, const encoders::Backends& backends,
                                              int condition_size) {
  const Image small = resized(x, condition_size);
  textual::TextualEmbedding cond = textual::i2t_map(backends.image_encoder->encode(small), mapper);
  if (restorer != nullptr) cond = textual::textual_restore(cond, *restorer);
  return cond;
}

Image generate_guidance(const Image& x, const textual::Mlp& mapper, const textual::Mlp* restorer,
                        const encoders::Backends& backends, const DenoiserBackend& denoiser,
                        const SamplerConfig& cfg) {
  cfg.validate();
  require(x.is_rgb(), ErrorKind::InvalidInput, "guidance generation expects an RGB image");
  const auto cond = condition_embedding(x, mapper, restorer, backends, cfg.condition_size);
  const int f = backends.autoencoder->factor();
  const int side = backends.descriptor.native_size / f;
  const auto z = ddim_sample(cond, denoiser, backends.schedule, cfg,
                             {side, side, backends.autoencoder->latent_channels()});
  const Image g = backends.autoencoder->decode(z);
  return Image::clipped(resize_bilinear(g.pixels(), x.height(), x.width()));
}

}  // namespace textres::guidance
