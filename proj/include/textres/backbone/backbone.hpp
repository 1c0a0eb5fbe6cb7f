#pragma once

#include <optional>
#include <string>
#include <vector>

#include "textres/aggregation/aggregation.hpp"
#include "textres/core/checkpoint.hpp"
#include "textres/core/image.hpp"
#include "textres/nn/params.hpp"

namespace textres::backbone {

inline constexpr const char* kModuleId = "guided_backbone";

struct InjectSites {
  bool encoder = true;
  bool decoder = true;

  bool none() const { return !encoder && !decoder; }
  static InjectSites parse(const std::string& text);  // "enc,dec", "enc", "dec" or "none"
  std::string str() const;
  bool operator==(const InjectSites&) const = default;
};

struct BackboneConfig {
  int width = 32;
  int n_stages = 3;
  int blocks_per_stage = 2;
  int extractor_blocks = 1;
  InjectSites inject_sites{};
  double alpha_init = 0.0;
  aggregation::FuseKind fuse_kind = aggregation::FuseKind::Conv;
  aggregation::MatchConfig match{};
  Seed seed{0};

  void validate() const;
  int divisor() const { return 1 << (n_stages - 1); }
};

/// U-shaped residual network. Encoder stage s runs at 1/2^s resolution with
/// width * 2^s channels; guidance is fused before the blocks of each selected
/// stage.
class Backbone {
 public:
  explicit Backbone(const BackboneConfig& cfg);

  /// Unclipped prediction x + tail(...). `g` is ignored when nothing is injected.
  nn::Var forward(nn::Graph& gr, nn::Var x, nn::Var g) const;
  /// Clipped prediction; inputs are reflect-padded to a multiple of the stage divisor.
  Image restore(const Image& x, const Image& g) const;

  const BackboneConfig& config() const noexcept { return cfg_; }
  nn::ParamSet& params() noexcept { return params_; }
  const nn::ParamSet& params() const noexcept { return params_; }

  Checkpoint to_checkpoint(const std::string& config_digest) const;
  void load(const Checkpoint& ckpt);

  std::vector<std::string> alpha_names() const;

 private:
  BackboneConfig cfg_;
  nn::ParamSet params_;
  std::optional<aggregation::FeatureExtractor> extractor_;
  std::vector<std::optional<aggregation::FuseBlock>> enc_fuse_, dec_fuse_;
};

/// Mean absolute difference.
double l1_loss(const Image& y_hat, const Image& y);

struct GuidedSample {
  std::string id;
  Image degraded;
  Image clean;
  Image guidance;
};

struct TrainConfig {
  int steps = 2000;
  int batch = 1;
  int crop = 48;
  double lr = 1e-3;
  double aggregation_lr = 5e-4;
  std::optional<double> alpha_lr;  // defaults to aggregation_lr
  bool freeze_alpha = false;
  double val_fraction = 0.1;
  int val_every = 250;
  Seed seed{0};

  void validate() const;
};

struct TrainRecord {
  int step;
  double l1;
  std::optional<double> val_psnr;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<TrainRecord> curve;
  std::vector<std::size_t> val_indices;
};

/// Sample indices held out for validation, fixed by the seed.
std::vector<std::size_t> validation_split(std::size_t n, double fraction, Seed seed);

/// Trains `model` in place with L1 on unclipped outputs; returns its checkpoint.
TrainResult train_guided(const std::vector<GuidedSample>& samples, Backbone& model, const TrainConfig& cfg,
                         const std::string& config_digest = "");

/// Mean RGB PSNR of `model` over the given samples.
double mean_psnr(const Backbone& model, const std::vector<GuidedSample>& samples,
                 const std::vector<std::size_t>& indices);

}  // namespace textres::backbone
