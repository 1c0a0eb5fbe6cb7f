#pragma once

#include <string>
#include <vector>

#include "textres/core/image.hpp"
#include "textres/core/rng.hpp"
#include "textres/core/tensor.hpp"
#include "textres/nn/graph.hpp"
#include "textres/nn/params.hpp"

namespace textres::aggregation {

struct FeatureMap {
  Tensor data;  // h x w x c
  int scale_index = 0;

  int height() const { return data.height(); }
  int width() const { return data.width(); }
  int channels() const { return data.channels(); }
};

struct Coord {
  int row = 0;
  int col = 0;
  auto operator<=>(const Coord&) const = default;
};

enum class MatchLevel { Coarse, Fine };

/// One correspondence per query cell. Coarse queries are cell x cell blocks
/// addressed by their top-left corner; fine queries are single pixels.
struct MatchResult {
  MatchLevel level = MatchLevel::Fine;
  int cell = 1;
  int grid_h = 0, grid_w = 0;      // query grid
  int source_h = 0, source_w = 0;  // extent of the guidance map
  std::vector<Coord> source;       // row-major over the query grid
  std::vector<double> scores;

  const Coord& at(int qy, int qx) const { return source[static_cast<std::size_t>(qy) * grid_w + qx]; }
  double score(int qy, int qx) const { return scores[static_cast<std::size_t>(qy) * grid_w + qx]; }
};

struct MatchConfig {
  int block = 8;
  std::vector<int> dilations{1, 2, 3};
  int search_radius = 1;  // grid steps per dilation in each direction
  int stride = 0;         // 0 means stride == block
  int patch = 3;
  int fine_radius = 2;

  int resolved_stride() const { return stride > 0 ? stride : block; }
  void validate() const;
};

enum class PatchAnchor {
  TopLeft,  // patch spans [r, r + patch); must lie inside the map
  Center,   // patch centered at (r, c); out-of-range taps replicate the border
};

/// Cosine similarity of two flattened patches; 0 if either is all zeros.
double patch_similarity(const Tensor& a, Coord qa, const Tensor& b, Coord qb, int patch, PatchAnchor anchor);

/// Candidate top-left corners for the coarse block query at (row0, col0).
/// Sorted, unique and in bounds.
std::vector<Coord> coarse_candidates(int map_h, int map_w, Coord query, const MatchConfig& cfg);

/// Candidate pixels for the fine query at `pixel` given its block's coarse match.
std::vector<Coord> fine_candidates(int map_h, int map_w, Coord pixel, const MatchResult& coarse,
                                   const MatchConfig& cfg);

MatchResult coarse_match(const FeatureMap& f_x, const FeatureMap& f_g, const MatchConfig& cfg = {});
MatchResult fine_match(const FeatureMap& f_x, const FeatureMap& f_g, const MatchResult& coarse,
                       const MatchConfig& cfg = {});

/// Exhaustive argmax per query over explicit candidate lists, ties going to the
/// lexicographically smallest source coordinate.
MatchResult brute_force_match(const FeatureMap& f_x, const FeatureMap& f_g, int patch, PatchAnchor anchor,
                              const std::vector<std::vector<Coord>>& candidates, MatchLevel level, int cell);

/// Reflect-pads both maps to a multiple of the block, matches coarse then fine,
/// and returns per-pixel correspondences for the original extent.
MatchResult match_coarse_to_fine(const FeatureMap& f_x, const FeatureMap& f_g, const MatchConfig& cfg = {});

/// Per-pixel correspondences at a level `factor` times finer.
MatchResult upscale_match(const MatchResult& fine, int factor);

/// Flat source indices (row * source_w + col) for every output pixel.
std::vector<int> gather_indices(const MatchResult& match);

FeatureMap warp_guidance(const FeatureMap& f_g, const MatchResult& match);
nn::Var warp_guidance(nn::Graph& g, nn::Var f_g, const MatchResult& match);

/// Writes "qrow,qcol,srow,scol,score" rows.
void export_match_csv(const MatchResult& match, const std::string& path);

/// Symmetric (edge-repeating) reflection of an index into [0, n).
int reflect_index(int i, int n);
Tensor reflect_pad(const Tensor& t, int out_h, int out_w);

/// Conv-style pyramid shared between the degraded input and the guidance image.
class FeatureExtractor {
 public:
  FeatureExtractor() = default;
  /// Registers parameters named `prefix`.* in group "aggregation".
  FeatureExtractor(nn::ParamSet& params, const std::string& prefix, int width, int n_stages, int blocks, Seed seed);

  std::vector<nn::Var> forward(nn::Graph& g, const nn::ParamSet& params, nn::Var img) const;
  std::vector<FeatureMap> extract(const Image& img, const nn::ParamSet& params) const;

  int n_stages() const noexcept { return n_stages_; }
  int width_at(int level) const { return width_ << level; }

 private:
  int width_ = 0, n_stages_ = 0, blocks_ = 0;
  std::string prefix_;
};

enum class FuseKind { Conv, Attention };

/// B in x + alpha * B([x, g_hat]).
class FuseBlock {
 public:
  FuseBlock() = default;
  /// Registers `prefix`.* parameters in group "aggregation". With zero_init
  /// every weight starts at zero.
  FuseBlock(nn::ParamSet& params, const std::string& prefix, int channels, FuseKind kind, Seed seed,
            bool zero_init = false);

  nn::Var branch(nn::Graph& g, const nn::ParamSet& params, nn::Var f_x, nn::Var f_g_hat) const;
  int channels() const noexcept { return channels_; }
  FuseKind kind() const noexcept { return kind_; }

 private:
  std::string prefix_;
  int channels_ = 0;
  FuseKind kind_ = FuseKind::Conv;
};

nn::Var fuse(nn::Graph& g, const nn::ParamSet& params, nn::Var f_x, nn::Var f_g_hat, nn::Var alpha,
             const FuseBlock& block);
FeatureMap fuse(const FeatureMap& f_x, const FeatureMap& f_g_hat, double alpha, const FuseBlock& block,
                const nn::ParamSet& params);

/// Weight init shared by the extractor, fuse blocks and backbone: He-normal
/// with the given fan-in.
Tensor he_normal(std::vector<int> shape, int fan_in, Rng& rng);

/// Residual block h + conv(gelu(conv(h))) using `prefix`.c1 / `prefix`.c2.
void add_res_block(nn::ParamSet& params, const std::string& prefix, int channels, const std::string& group,
                   Rng& rng);
nn::Var res_block(nn::Graph& g, const nn::ParamSet& params, const std::string& prefix, nn::Var h);
/// Convolution with `name`.w / `name`.b.
void add_conv(nn::ParamSet& params, const std::string& name, int k, int cin, int cout, const std::string& group,
              Rng& rng, double gain = 1.0);
nn::Var conv(nn::Graph& g, const nn::ParamSet& params, const std::string& name, nn::Var x, int stride, int pad);

}  // namespace textres::aggregation
