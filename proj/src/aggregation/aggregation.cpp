#include "textres/aggregation/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "textres/core/error.hpp"
#include "textres/nn/ops.hpp"

namespace textres::aggregation {
namespace {

int clamp_index(int i, int n) { return std::clamp(i, 0, n - 1); }

void require_compatible(const FeatureMap& f_x, const FeatureMap& f_g) {
  require(f_x.data.rank() == 3 && f_g.data.rank() == 3, ErrorKind::InvalidInput, "feature maps must be h x w x c");
  require(f_x.channels() == f_g.channels(), ErrorKind::InvalidInput, "feature maps differ in channel count");
  require(f_x.scale_index == f_g.scale_index, ErrorKind::InvalidInput, "feature maps come from different levels");
}

}  // namespace

void MatchConfig::validate() const {
  require(block >= 1, ErrorKind::InvalidParam, "block must be positive");
  require(!dilations.empty(), ErrorKind::InvalidParam, "at least one dilation is required");
  for (int d : dilations) require(d >= 1, ErrorKind::InvalidParam, "dilations must be positive");
  require(search_radius >= 0 && fine_radius >= 0 && stride >= 0, ErrorKind::InvalidParam,
          "search radii and stride must be non-negative");
  require(patch >= 1 && patch % 2 == 1 && patch <= block, ErrorKind::InvalidParam,
          "patch must be odd and no larger than the block");
}

double patch_similarity(const Tensor& a, Coord qa, const Tensor& b, Coord qb, int patch, PatchAnchor anchor) {
  const int c = a.channels();
  const int off = anchor == PatchAnchor::Center ? patch / 2 : 0;
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (int dy = 0; dy < patch; ++dy) {
    for (int dx = 0; dx < patch; ++dx) {
      int ay = qa.row + dy - off, ax = qa.col + dx - off;
      int by = qb.row + dy - off, bx = qb.col + dx - off;
      if (anchor == PatchAnchor::Center) {
        ay = clamp_index(ay, a.height());
        ax = clamp_index(ax, a.width());
        by = clamp_index(by, b.height());
        bx = clamp_index(bx, b.width());
      }
      const double* pa = a.pixel(ay, ax);
      const double* pb = b.pixel(by, bx);
      for (int k = 0; k < c; ++k) {
        ab += pa[k] * pb[k];
        aa += pa[k] * pa[k];
        bb += pb[k] * pb[k];
      }
    }
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
}

std::vector<Coord> coarse_candidates(int map_h, int map_w, Coord query, const MatchConfig& cfg) {
  const int stride = cfg.resolved_stride();
  const int r = cfg.search_radius;
  std::vector<Coord> out;
  for (int d : cfg.dilations) {
    for (int i = -r; i <= r; ++i) {
      for (int j = -r; j <= r; ++j) {
        const Coord c{query.row + i * d * stride, query.col + j * d * stride};
        if (c.row >= 0 && c.col >= 0 && c.row + cfg.block <= map_h && c.col + cfg.block <= map_w) out.push_back(c);
      }
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<Coord> fine_candidates(int map_h, int map_w, Coord pixel, const MatchResult& coarse,
                                   const MatchConfig& cfg) {
  require(coarse.level == MatchLevel::Coarse, ErrorKind::InvalidInput, "fine search needs a coarse match");
  const int by = pixel.row / coarse.cell, bx = pixel.col / coarse.cell;
  require(by < coarse.grid_h && bx < coarse.grid_w, ErrorKind::InvalidInput, "pixel outside the coarse grid");
  const Coord& s = coarse.at(by, bx);
  const int cy = clamp_index(pixel.row + s.row - by * coarse.cell, map_h);
  const int cx = clamp_index(pixel.col + s.col - bx * coarse.cell, map_w);
  std::vector<Coord> out;
  for (int y = std::max(0, cy - cfg.fine_radius); y <= std::min(map_h - 1, cy + cfg.fine_radius); ++y)
    for (int x = std::max(0, cx - cfg.fine_radius); x <= std::min(map_w - 1, cx + cfg.fine_radius); ++x)
      out.push_back({y, x});
  return out;
}

MatchResult brute_force_match(const FeatureMap& f_x, const FeatureMap& f_g, int patch, PatchAnchor anchor,
                              const std::vector<std::vector<Coord>>& candidates, MatchLevel level, int cell) {
  require_compatible(f_x, f_g);
  require(cell >= 1 && f_x.height() % cell == 0 && f_x.width() % cell == 0, ErrorKind::InvalidInput,
          "query map must tile into cells");
  MatchResult res;
  res.level = level;
  res.cell = cell;
  res.grid_h = f_x.height() / cell;
  res.grid_w = f_x.width() / cell;
  res.source_h = f_g.height();
  res.source_w = f_g.width();
  require(candidates.size() == static_cast<std::size_t>(res.grid_h) * res.grid_w, ErrorKind::InvalidInput,
          "one candidate list per query is required");
  res.source.resize(candidates.size());
  res.scores.resize(candidates.size());
  for (int qy = 0; qy < res.grid_h; ++qy) {
    for (int qx = 0; qx < res.grid_w; ++qx) {
      const std::size_t q = static_cast<std::size_t>(qy) * res.grid_w + qx;
      std::vector<Coord> cands = candidates[q];
      require(!cands.empty(), ErrorKind::InvalidInput, "empty candidate list");
      std::sort(cands.begin(), cands.end());
      double best = -2.0;
      Coord best_at{};
      for (const Coord& c : cands) {
        const bool inside = anchor == PatchAnchor::Center
                                ? (c.row >= 0 && c.col >= 0 && c.row < f_g.height() && c.col < f_g.width())
                                : (c.row >= 0 && c.col >= 0 && c.row + patch <= f_g.height() &&
                                   c.col + patch <= f_g.width());
        require(inside, ErrorKind::InvalidInput, "candidate out of bounds");
        const double s = patch_similarity(f_x.data, {qy * cell, qx * cell}, f_g.data, c, patch, anchor);
        if (s > best) {
          best = s;
          best_at = c;
        }
      }
      res.source[q] = best_at;
      res.scores[q] = best;
    }
  }
  return res;
}

MatchResult coarse_match(const FeatureMap& f_x, const FeatureMap& f_g, const MatchConfig& cfg) {
  cfg.validate();
  require_compatible(f_x, f_g);
  const int b = cfg.block;
  require(b <= f_x.height() && b <= f_x.width() && b <= f_g.height() && b <= f_g.width(), ErrorKind::InvalidInput,
          "block larger than the feature map");
  require(f_x.height() % b == 0 && f_x.width() % b == 0, ErrorKind::InvalidInput,
          "feature map not divisible by the block; pad first");
  std::vector<std::vector<Coord>> cands;
  for (int qy = 0; qy < f_x.height() / b; ++qy)
    for (int qx = 0; qx < f_x.width() / b; ++qx)
      cands.push_back(coarse_candidates(f_g.height(), f_g.width(), {qy * b, qx * b}, cfg));
  return brute_force_match(f_x, f_g, b, PatchAnchor::TopLeft, cands, MatchLevel::Coarse, b);
}

MatchResult fine_match(const FeatureMap& f_x, const FeatureMap& f_g, const MatchResult& coarse,
                       const MatchConfig& cfg) {
  cfg.validate();
  require_compatible(f_x, f_g);
  require(coarse.level == MatchLevel::Coarse, ErrorKind::InvalidInput, "fine search needs a coarse match");
  require(cfg.patch <= coarse.cell, ErrorKind::InvalidParam, "patch must be odd and no larger than the block");
  require(coarse.grid_h * coarse.cell == f_x.height() && coarse.grid_w * coarse.cell == f_x.width() &&
              coarse.source_h == f_g.height() && coarse.source_w == f_g.width(),
          ErrorKind::InvalidInput, "coarse match does not belong to these maps");
  std::vector<std::vector<Coord>> cands;
  cands.reserve(static_cast<std::size_t>(f_x.height()) * f_x.width());
  for (int y = 0; y < f_x.height(); ++y)
    for (int x = 0; x < f_x.width(); ++x)
      cands.push_back(fine_candidates(f_g.height(), f_g.width(), {y, x}, coarse, cfg));
  return brute_force_match(f_x, f_g, cfg.patch, PatchAnchor::Center, cands, MatchLevel::Fine, 1);
}

int reflect_index(int i, int n) {
  const int period = 2 * n;
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

Tensor reflect_pad(const Tensor& t, int out_h, int out_w) {
  require(out_h >= t.height() && out_w >= t.width(), ErrorKind::InvalidInput, "reflect_pad cannot shrink");
  const int c = t.channels();
  Tensor out = Tensor::hwc(out_h, out_w, c);
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      const double* src = t.pixel(reflect_index(y, t.height()), reflect_index(x, t.width()));
      std::copy(src, src + c, out.pixel(y, x));
    }
  }
  return out;
}

MatchResult match_coarse_to_fine(const FeatureMap& f_x, const FeatureMap& f_g, const MatchConfig& cfg) {
  cfg.validate();
  require_compatible(f_x, f_g);
  auto padded_extent = [&](int n) { return std::max(cfg.block, (n + cfg.block - 1) / cfg.block * cfg.block); };
  const FeatureMap px{reflect_pad(f_x.data, padded_extent(f_x.height()), padded_extent(f_x.width())),
                      f_x.scale_index};
  const FeatureMap pg{reflect_pad(f_g.data, padded_extent(f_g.height()), padded_extent(f_g.width())),
                      f_g.scale_index};
  const MatchResult fine = fine_match(px, pg, coarse_match(px, pg, cfg), cfg);

  MatchResult out;
  out.level = MatchLevel::Fine;
  out.cell = 1;
  out.grid_h = f_x.height();
  out.grid_w = f_x.width();
  out.source_h = f_g.height();
  out.source_w = f_g.width();
  for (int y = 0; y < out.grid_h; ++y) {
    for (int x = 0; x < out.grid_w; ++x) {
      const Coord& s = fine.at(y, x);
      out.source.push_back({reflect_index(s.row, f_g.height()), reflect_index(s.col, f_g.width())});
      out.scores.push_back(fine.score(y, x));
    }
  }
  return out;
}

MatchResult upscale_match(const MatchResult& fine, int factor) {
  require(fine.level == MatchLevel::Fine, ErrorKind::InvalidInput, "only per-pixel matches can be upscaled");
  require(factor >= 1, ErrorKind::InvalidParam, "upscale factor must be positive");
  if (factor == 1) return fine;
  MatchResult out;
  out.level = MatchLevel::Fine;
  out.cell = 1;
  out.grid_h = fine.grid_h * factor;
  out.grid_w = fine.grid_w * factor;
  out.source_h = fine.source_h * factor;
  out.source_w = fine.source_w * factor;
  out.source.reserve(static_cast<std::size_t>(out.grid_h) * out.grid_w);
  for (int y = 0; y < out.grid_h; ++y) {
    for (int x = 0; x < out.grid_w; ++x) {
      const Coord& s = fine.at(y / factor, x / factor);
      out.source.push_back({s.row * factor + y % factor, s.col * factor + x % factor});
      out.scores.push_back(fine.score(y / factor, x / factor));
    }
  }
  return out;
}

std::vector<int> gather_indices(const MatchResult& match) {
  const int h = match.grid_h * match.cell, w = match.grid_w * match.cell;
  std::vector<int> idx;
  idx.reserve(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Coord& s = match.at(y / match.cell, x / match.cell);
      const int sy = s.row + y % match.cell, sx = s.col + x % match.cell;
      require(sy >= 0 && sx >= 0 && sy < match.source_h && sx < match.source_w, ErrorKind::InternalError,
              "match index out of bounds");
      idx.push_back(sy * match.source_w + sx);
    }
  }
  return idx;
}

FeatureMap warp_guidance(const FeatureMap& f_g, const MatchResult& match) {
  nn::Graph g;
  return {g.value(warp_guidance(g, g.constant(f_g.data), match)), f_g.scale_index};
}

nn::Var warp_guidance(nn::Graph& g, nn::Var f_g, const MatchResult& match) {
  const Tensor& v = g.value(f_g);
  require(v.height() == match.source_h && v.width() == match.source_w, ErrorKind::InternalError,
          "match does not address this feature map");
  return nn::gather_pixels(g, f_g, gather_indices(match), match.grid_h * match.cell, match.grid_w * match.cell);
}

void export_match_csv(const MatchResult& match, const std::string& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path);
  out << "qrow,qcol,srow,scol,score\n";
  out.precision(17);
  for (int y = 0; y < match.grid_h; ++y)
    for (int x = 0; x < match.grid_w; ++x)
      out << y * match.cell << ',' << x * match.cell << ',' << match.at(y, x).row << ',' << match.at(y, x).col
          << ',' << match.score(y, x) << '\n';
  require(static_cast<bool>(out), ErrorKind::Io, "failed writing " + path);
}

Tensor he_normal(std::vector<int> shape, int fan_in, Rng& rng) {
  return rng.normal_tensor(std::move(shape), std::sqrt(2.0 / fan_in));
}

void add_conv(nn::ParamSet& params, const std::string& name, int k, int cin, int cout, const std::string& group,
              Rng& rng, double gain) {
  params.add(name + ".w", he_normal({k, k, cin, cout}, k * k * cin, rng) * gain, group);
  params.add(name + ".b", Tensor({cout}), group);
}

nn::Var conv(nn::Graph& g, const nn::ParamSet& params, const std::string& name, nn::Var x, int stride, int pad) {
  return nn::conv2d(g, x, g.param(params.at(name + ".w")), g.param(params.at(name + ".b")), stride, pad);
}

void add_res_block(nn::ParamSet& params, const std::string& prefix, int channels, const std::string& group,
                   Rng& rng) {
  add_conv(params, prefix + ".c1", 3, channels, channels, group, rng);
  add_conv(params, prefix + ".c2", 3, channels, channels, group, rng, 0.1);
}

nn::Var res_block(nn::Graph& g, const nn::ParamSet& params, const std::string& prefix, nn::Var h) {
  nn::Var t = nn::gelu(g, conv(g, params, prefix + ".c1", h, 1, 1));
  return nn::add(g, h, conv(g, params, prefix + ".c2", t, 1, 1));
}

FeatureExtractor::FeatureExtractor(nn::ParamSet& params, const std::string& prefix, int width, int n_stages,
                                   int blocks, Seed seed)
    : width_(width), n_stages_(n_stages), blocks_(blocks), prefix_(prefix) {
  require(width >= 1 && n_stages >= 1 && blocks >= 0, ErrorKind::InvalidParam, "invalid extractor dims");
  Rng rng(seed, "aggregation.extractor");
  for (int s = 0; s < n_stages; ++s) {
    const std::string lvl = prefix + ".l" + std::to_string(s);
    if (s == 0)
      add_conv(params, lvl + ".in", 3, 3, width, "aggregation", rng);
    else
      add_conv(params, lvl + ".down", 2, width_at(s - 1), width_at(s), "aggregation", rng);
    for (int b = 0; b < blocks; ++b) add_res_block(params, lvl + ".b" + std::to_string(b), width_at(s), "aggregation", rng);
  }
}

std::vector<nn::Var> FeatureExtractor::forward(nn::Graph& g, const nn::ParamSet& params, nn::Var img) const {
  const Tensor& v = g.value(img);
  const int div = 1 << (n_stages_ - 1);
  require(v.height() % div == 0 && v.width() % div == 0, ErrorKind::InvalidInput,
          "image dims must be divisible by " + std::to_string(div));
  std::vector<nn::Var> levels;
  nn::Var h = img;
  for (int s = 0; s < n_stages_; ++s) {
    const std::string lvl = prefix_ + ".l" + std::to_string(s);
    h = s == 0 ? conv(g, params, lvl + ".in", h, 1, 1) : conv(g, params, lvl + ".down", h, 2, 0);
    for (int b = 0; b < blocks_; ++b) h = res_block(g, params, lvl + ".b" + std::to_string(b), h);
    levels.push_back(h);
  }
  return levels;
}

std::vector<FeatureMap> FeatureExtractor::extract(const Image& img, const nn::ParamSet& params) const {
  nn::Graph g;
  const auto levels = forward(g, params, g.constant(img.pixels()));
  std::vector<FeatureMap> out;
  for (std::size_t s = 0; s < levels.size(); ++s) out.push_back({g.value(levels[s]), static_cast<int>(s)});
  return out;
}

FuseBlock::FuseBlock(nn::ParamSet& params, const std::string& prefix, int channels, FuseKind kind, Seed seed,
                     bool zero_init)
    : prefix_(prefix), channels_(channels), kind_(kind) {
  require(channels >= 1, ErrorKind::InvalidParam, "fuse block needs channels");
  Rng rng(seed, "aggregation.fuse." + prefix);
  const double gain = zero_init ? 0.0 : 1.0;
  if (kind == FuseKind::Conv) {
    add_conv(params, prefix + ".c1", 3, 2 * channels, channels, "aggregation", rng, gain);
    add_conv(params, prefix + ".c2", 3, channels, channels, "aggregation", rng, gain);
  } else {
    for (const char* n : {".q", ".k", ".v"}) add_conv(params, prefix + n, 1, 2 * channels, channels, "aggregation", rng, gain);
    add_conv(params, prefix + ".o", 1, channels, channels, "aggregation", rng, gain);
  }
}

nn::Var FuseBlock::branch(nn::Graph& g, const nn::ParamSet& params, nn::Var f_x, nn::Var f_g_hat) const {
  const Tensor& xv = g.value(f_x);
  require(xv.same_shape(g.value(f_g_hat)), ErrorKind::InvalidInput, "fuse inputs differ in shape");
  require(xv.channels() == channels_, ErrorKind::InvalidInput, "fuse input channel count mismatch");
  nn::Var cat = nn::concat_channels(g, f_x, f_g_hat);
  if (kind_ == FuseKind::Conv) {
    nn::Var t = nn::gelu(g, conv(g, params, prefix_ + ".c1", cat, 1, 1));
    return conv(g, params, prefix_ + ".c2", t, 1, 1);
  }
  const int h = xv.height(), w = xv.width(), c = channels_;
  auto flat = [&](nn::Var v) { return nn::reshape(g, v, {h * w, c}); };
  nn::Var q = flat(conv(g, params, prefix_ + ".q", cat, 1, 0));
  nn::Var k = flat(conv(g, params, prefix_ + ".k", cat, 1, 0));
  nn::Var v = flat(conv(g, params, prefix_ + ".v", cat, 1, 0));
  nn::Var attn = nn::softmax_rows(g, nn::scale(g, nn::matmul(g, q, k, true, false), 1.0 / std::sqrt(h * w)));
  nn::Var mixed = nn::reshape(g, nn::matmul(g, v, attn, false, true), {h, w, c});
  return conv(g, params, prefix_ + ".o", mixed, 1, 0);
}

nn::Var fuse(nn::Graph& g, const nn::ParamSet& params, nn::Var f_x, nn::Var f_g_hat, nn::Var alpha,
             const FuseBlock& block) {
  return nn::scaled_residual(g, f_x, alpha, block.branch(g, params, f_x, f_g_hat));
}

FeatureMap fuse(const FeatureMap& f_x, const FeatureMap& f_g_hat, double alpha, const FuseBlock& block,
                const nn::ParamSet& params) {
  require(f_x.data.same_shape(f_g_hat.data), ErrorKind::InvalidInput, "fuse inputs differ in shape");
  nn::Graph g;
  nn::Var out = fuse(g, params, g.constant(f_x.data), g.constant(f_g_hat.data), g.constant(Tensor({1}, alpha)), block);
  return {g.value(out), f_x.scale_index};
}

}  // namespace textres::aggregation
