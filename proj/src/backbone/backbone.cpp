#include "textres/backbone/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "textres/core/error.hpp"
#include "textres/metrics/metrics.hpp"
#include "textres/nn/ops.hpp"

namespace textres::backbone {

using aggregation::add_conv;
using aggregation::add_res_block;
using aggregation::conv;
using aggregation::res_block;

namespace {

std::string stage_name(const char* part, int s) { return std::string(part) + std::to_string(s); }

Tensor crop(const Tensor& t, int y0, int x0, int h, int w) {
  const int c = t.channels();
  Tensor out = Tensor::hwc(h, w, c);
  for (int y = 0; y < h; ++y) std::copy(t.pixel(y0 + y, x0), t.pixel(y0 + y, x0) + w * c, out.pixel(y, 0));
  return out;
}

}  // namespace

InjectSites InjectSites::parse(const std::string& text) {
  if (text == "none") return {false, false};
  if (text == "enc") return {true, false};
  if (text == "dec") return {false, true};
  if (text == "enc,dec" || text == "dec,enc") return {true, true};
  fail(ErrorKind::InvalidParam, "inject_sites must be enc, dec, enc,dec or none (got '" + text + "')");
}

std::string InjectSites::str() const {
  if (encoder && decoder) return "enc,dec";
  if (encoder) return "enc";
  if (decoder) return "dec";
  return "none";
}

void BackboneConfig::validate() const {
  require(width >= 8, ErrorKind::InvalidParam, "backbone width must be >= 8");
  require(n_stages >= 2 && n_stages <= 4, ErrorKind::InvalidParam, "n_stages must lie in [2, 4]");
  require(blocks_per_stage >= 0 && extractor_blocks >= 0, ErrorKind::InvalidParam, "block counts must be >= 0");
  require(std::isfinite(alpha_init), ErrorKind::InvalidParam, "alpha_init must be finite");
  match.validate();
}

Backbone::Backbone(const BackboneConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const int w = cfg_.width;
  const int n = cfg_.n_stages;
  Rng rng(cfg_.seed, "backbone.main");
  add_conv(params_, "intro", 3, 3, w, "main", rng);
  for (int s = 0; s < n; ++s) {
    if (s > 0) add_conv(params_, stage_name("enc", s) + ".down", 2, w << (s - 1), w << s, "main", rng);
    for (int b = 0; b < cfg_.blocks_per_stage; ++b)
      add_res_block(params_, stage_name("enc", s) + ".b" + std::to_string(b), w << s, "main", rng);
  }
  for (int s = n - 2; s >= 0; --s) {
    add_conv(params_, stage_name("dec", s) + ".up", 1, w << (s + 1), w << s, "main", rng);
    for (int b = 0; b < cfg_.blocks_per_stage; ++b)
      add_res_block(params_, stage_name("dec", s) + ".b" + std::to_string(b), w << s, "main", rng);
  }
  add_conv(params_, "tail", 3, w, 3, "main", rng, 0.1);

  enc_fuse_.resize(static_cast<std::size_t>(n));
  dec_fuse_.resize(static_cast<std::size_t>(n));
  if (cfg_.inject_sites.none()) return;
  extractor_.emplace(params_, "extractor", w, n, cfg_.extractor_blocks, cfg_.seed);
  auto add_site = [&](std::vector<std::optional<aggregation::FuseBlock>>& slots, const char* part, int s) {
    const std::string name = stage_name(part, s);
    slots[static_cast<std::size_t>(s)].emplace(params_, name + ".fuse", w << s, cfg_.fuse_kind, cfg_.seed);
    params_.add(name + ".alpha", Tensor({1}, cfg_.alpha_init), "alpha");
  };
  if (cfg_.inject_sites.encoder)
    for (int s = 0; s < n; ++s) add_site(enc_fuse_, "enc", s);
  if (cfg_.inject_sites.decoder)
    for (int s = n - 2; s >= 0; --s) add_site(dec_fuse_, "dec", s);
}

std::vector<std::string> Backbone::alpha_names() const {
  std::vector<std::string> out;
  for (const auto& p : params_)
    if (p.group == "alpha") out.push_back(p.name);
  return out;
}

nn::Var Backbone::forward(nn::Graph& gr, nn::Var x, nn::Var g) const {
  const Tensor& xv = gr.value(x);
  const int n = cfg_.n_stages;
  require(xv.rank() == 3 && xv.channels() == 3, ErrorKind::InvalidInput, "backbone expects an RGB tensor");
  require(xv.height() % cfg_.divisor() == 0 && xv.width() % cfg_.divisor() == 0, ErrorKind::InvalidInput,
          "input dims must be divisible by " + std::to_string(cfg_.divisor()));

  // Guidance features warped onto the query layout of every level.
  std::vector<nn::Var> warped(static_cast<std::size_t>(n));
  if (extractor_) {
    require(g.valid() && gr.value(g).same_shape(xv), ErrorKind::InvalidInput, "guidance must match the input dims");
    const auto fx = extractor_->forward(gr, params_, x);
    const auto fg = extractor_->forward(gr, params_, g);
    const aggregation::FeatureMap qx{gr.value(fx.back()), n - 1};
    const aggregation::FeatureMap qg{gr.value(fg.back()), n - 1};
    const aggregation::MatchResult coarse_level = aggregation::match_coarse_to_fine(qx, qg, cfg_.match);
    for (int s = 0; s < n; ++s) {
      const bool used = enc_fuse_[static_cast<std::size_t>(s)] || dec_fuse_[static_cast<std::size_t>(s)];
      if (!used) continue;
      const auto m = aggregation::upscale_match(coarse_level, 1 << (n - 1 - s));
      warped[static_cast<std::size_t>(s)] = aggregation::warp_guidance(gr, fg[static_cast<std::size_t>(s)], m);
    }
  }
  auto inject = [&](const std::optional<aggregation::FuseBlock>& block, const char* part, int s, nn::Var h) {
    if (!block) return h;
    nn::Var alpha = gr.param(params_.at(stage_name(part, s) + ".alpha"));
    return aggregation::fuse(gr, params_, h, warped[static_cast<std::size_t>(s)], alpha, *block);
  };

  std::vector<nn::Var> skips;
  nn::Var h = conv(gr, params_, "intro", x, 1, 1);
  for (int s = 0; s < n; ++s) {
    const std::string name = stage_name("enc", s);
    if (s > 0) h = conv(gr, params_, name + ".down", h, 2, 0);
    h = inject(enc_fuse_[static_cast<std::size_t>(s)], "enc", s, h);
    for (int b = 0; b < cfg_.blocks_per_stage; ++b) h = res_block(gr, params_, name + ".b" + std::to_string(b), h);
    skips.push_back(h);
  }
  for (int s = n - 2; s >= 0; --s) {
    const std::string name = stage_name("dec", s);
    h = conv(gr, params_, name + ".up", nn::upsample_nearest2(gr, h), 1, 0);
    h = nn::add(gr, h, skips[static_cast<std::size_t>(s)]);
    h = inject(dec_fuse_[static_cast<std::size_t>(s)], "dec", s, h);
    for (int b = 0; b < cfg_.blocks_per_stage; ++b) h = res_block(gr, params_, name + ".b" + std::to_string(b), h);
  }
  return nn::add(gr, x, conv(gr, params_, "tail", h, 1, 1));
}

Image Backbone::restore(const Image& x, const Image& g) const {
  require(x.is_rgb(), ErrorKind::InvalidInput, "restore expects an RGB image");
  require(x.same_dims(g), ErrorKind::InvalidInput, "degraded image and guidance differ in dims");
  const int d = cfg_.divisor();
  const int ph = (x.height() + d - 1) / d * d, pw = (x.width() + d - 1) / d * d;
  nn::Graph gr;
  nn::Var xin = gr.constant(aggregation::reflect_pad(x.pixels(), ph, pw));
  nn::Var gin = extractor_ ? gr.constant(aggregation::reflect_pad(g.pixels(), ph, pw)) : nn::Var{};
  const Tensor& out = gr.value(forward(gr, xin, gin));
  return Image::clipped(crop(out, 0, 0, x.height(), x.width()));
}

Checkpoint Backbone::to_checkpoint(const std::string& config_digest) const {
  return params_.to_checkpoint(kModuleId, config_digest);
}

void Backbone::load(const Checkpoint& ckpt) {
  require(ckpt.module_id == kModuleId, ErrorKind::ModuleMismatch,
          "expected module '" + std::string(kModuleId) + "', got '" + ckpt.module_id + "'");
  params_.load(ckpt);
}

double l1_loss(const Image& y_hat, const Image& y) {
  require(y_hat.same_dims(y), ErrorKind::InvalidInput, "l1_loss: image dims differ");
  double s = 0.0;
  for (std::size_t i = 0; i < y.pixels().size(); ++i) s += std::abs(y_hat.pixels()[i] - y.pixels()[i]);
  return s / static_cast<double>(y.pixels().size());
}

void TrainConfig::validate() const {
  require(steps >= 0 && batch >= 1 && crop >= 8, ErrorKind::InvalidParam, "invalid train steps/batch/crop");
  require(lr > 0 && aggregation_lr > 0 && (!alpha_lr || *alpha_lr > 0), ErrorKind::InvalidParam,
          "learning rates must be positive");
  require(val_fraction >= 0 && val_fraction < 1, ErrorKind::InvalidParam, "val_fraction must lie in [0, 1)");
  require(val_every >= 1, ErrorKind::InvalidParam, "val_every must be >= 1");
}

std::vector<std::size_t> validation_split(std::size_t n, double fraction, Seed seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed, "backbone.split");
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  std::size_t k = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(n)));
  if (fraction > 0 && k == 0 && n >= 2) k = 1;
  if (k >= n) k = n > 0 ? n - 1 : 0;
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(val.begin(), val.end());
  return val;
}

double mean_psnr(const Backbone& model, const std::vector<GuidedSample>& samples,
                 const std::vector<std::size_t>& indices) {
  if (indices.empty()) return std::nan("");
  double total = 0.0;
  for (std::size_t i : indices) {
    const GuidedSample& s = samples[i];
    total += metrics::psnr(model.restore(s.degraded, s.guidance), s.clean);
  }
  return total / static_cast<double>(indices.size());
}

TrainResult train_guided(const std::vector<GuidedSample>& samples, Backbone& model, const TrainConfig& cfg,
                         const std::string& config_digest) {
  cfg.validate();
  require(!samples.empty(), ErrorKind::InvalidInput, "no training samples");
  for (const auto& s : samples) {
    require(s.degraded.same_dims(s.clean) && s.degraded.same_dims(s.guidance) && s.degraded.is_rgb(),
            ErrorKind::DataError, "sample '" + s.id + "': degraded, clean and guidance dims differ");
  }
  TrainResult result;
  result.val_indices = validation_split(samples.size(), cfg.val_fraction, cfg.seed);
  std::vector<std::size_t> train_idx;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (!std::binary_search(result.val_indices.begin(), result.val_indices.end(), i)) train_idx.push_back(i);

  std::map<std::string, double> rates{{"main", cfg.lr}, {"aggregation", cfg.aggregation_lr}};
  if (!cfg.freeze_alpha) rates["alpha"] = cfg.alpha_lr.value_or(cfg.aggregation_lr);
  nn::Adam adam(model.params());
  const int d = model.config().divisor();

  auto validate_now = [&]() { return mean_psnr(model, samples, result.val_indices); };
  std::optional<double> initial_val;
  if (!result.val_indices.empty()) initial_val = validate_now();

  for (int step = 0; step < cfg.steps; ++step) {
    Rng rng(cfg.seed, "backbone.batch", static_cast<std::uint64_t>(step));
    nn::Graph gr;
    nn::Var total{};
    for (int b = 0; b < cfg.batch; ++b) {
      const GuidedSample& s = samples[train_idx[rng.below(train_idx.size())]];
      const int ch = std::min(cfg.crop, s.clean.height()) / d * d;
      const int cw = std::min(cfg.crop, s.clean.width()) / d * d;
      require(ch >= d && cw >= d, ErrorKind::DataError, "sample '" + s.id + "' is smaller than the stage divisor");
      const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(s.clean.height() - ch + 1)));
      const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(s.clean.width() - cw + 1)));
      nn::Var x = gr.constant(crop(s.degraded.pixels(), y0, x0, ch, cw));
      nn::Var g = gr.constant(crop(s.guidance.pixels(), y0, x0, ch, cw));
      nn::Var y = gr.constant(crop(s.clean.pixels(), y0, x0, ch, cw));
      nn::Var loss = nn::mean_abs_diff(gr, model.forward(gr, x, g), y);
      total = total.valid() ? nn::add(gr, total, loss) : loss;
    }
    if (cfg.batch > 1) total = nn::scale(gr, total, 1.0 / cfg.batch);
    gr.backward(total);
    adam.step(model.params(), gr.gradients(model.params()), rates);

    TrainRecord rec{step, gr.value(total)[0], std::nullopt};
    if (step == 0) rec.val_psnr = initial_val;
    if (!result.val_indices.empty() && ((step + 1) % cfg.val_every == 0 || step + 1 == cfg.steps))
      rec.val_psnr = validate_now();
    result.curve.push_back(rec);
  }
  result.checkpoint = model.to_checkpoint(config_digest);
  return result;
}

}  // namespace textres::backbone
