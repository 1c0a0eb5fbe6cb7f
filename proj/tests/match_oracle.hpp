#pragma once

// Exhaustive reference matcher written independently of the library: plain
// loops over explicitly enumerated candidates, cosine similarity, strict '>'
// scanning in lexicographic order.

#include <algorithm>
#include <cmath>
#include <vector>

#include "textres/aggregation/aggregation.hpp"
#include "textres/core/rng.hpp"

namespace textres::testing {

struct OracleHit {
  int row = 0, col = 0;
  double score = -2.0;
  double runner_up = -2.0;
};

struct OracleMatch {
  int h = 0, w = 0;  // query grid
  std::vector<OracleHit> hits;
  bool has_tie(double gap) const {
    return std::any_of(hits.begin(), hits.end(), [&](const OracleHit& h) { return h.score - h.runner_up < gap; });
  }
};

inline double oracle_cosine(const Tensor& a, int ay, int ax, const Tensor& b, int by, int bx, int patch,
                            bool centered) {
  const int off = centered ? patch / 2 : 0;
  auto clamp = [](int v, int n) { return v < 0 ? 0 : (v >= n ? n - 1 : v); };
  double ab = 0, aa = 0, bb = 0;
  for (int dy = 0; dy < patch; ++dy)
    for (int dx = 0; dx < patch; ++dx) {
      int y1 = ay + dy - off, x1 = ax + dx - off, y2 = by + dy - off, x2 = bx + dx - off;
      if (centered) {
        y1 = clamp(y1, a.height());
        x1 = clamp(x1, a.width());
        y2 = clamp(y2, b.height());
        x2 = clamp(x2, b.width());
      }
      for (int c = 0; c < a.channels(); ++c) {
        const double u = a(y1, x1, c), v = b(y2, x2, c);
        ab += u * v;
        aa += u * u;
        bb += v * v;
      }
    }
  if (aa == 0 || bb == 0) return 0.0;
  return std::max(-1.0, std::min(1.0, ab / std::sqrt(aa * bb)));
}

/// Block grid search: every block x block query at (qy*block, qx*block) against
/// top-left positions q + (i d s, j d s) for each dilation d and |i|, |j| <= radius.
inline OracleMatch oracle_coarse(const Tensor& fx, const Tensor& fg, const aggregation::MatchConfig& cfg) {
  const int b = cfg.block, s = cfg.stride > 0 ? cfg.stride : cfg.block;
  OracleMatch m{fx.height() / b, fx.width() / b, {}};
  for (int qy = 0; qy < m.h; ++qy)
    for (int qx = 0; qx < m.w; ++qx) {
      std::vector<std::pair<int, int>> cands;
      for (int d : cfg.dilations)
        for (int i = -cfg.search_radius; i <= cfg.search_radius; ++i)
          for (int j = -cfg.search_radius; j <= cfg.search_radius; ++j) {
            const int r = qy * b + i * d * s, c = qx * b + j * d * s;
            if (r >= 0 && c >= 0 && r + b <= fg.height() && c + b <= fg.width()) cands.push_back({r, c});
          }
      std::sort(cands.begin(), cands.end());
      cands.erase(std::unique(cands.begin(), cands.end()), cands.end());
      OracleHit hit;
      for (auto [r, c] : cands) {
        const double v = oracle_cosine(fx, qy * b, qx * b, fg, r, c, b, false);
        if (v > hit.score) {
          hit.runner_up = hit.score;
          hit = {r, c, v, hit.runner_up};
        } else {
          hit.runner_up = std::max(hit.runner_up, v);
        }
      }
      m.hits.push_back(hit);
    }
  return m;
}

/// Per-pixel search in a (2 fine_radius + 1)^2 window around the pixel moved
/// by its block's coarse displacement (center clamped into the map, window
/// clipped at the borders).
inline OracleMatch oracle_fine(const Tensor& fx, const Tensor& fg, const OracleMatch& coarse,
                               const aggregation::MatchConfig& cfg) {
  const int b = cfg.block, rad = cfg.fine_radius;
  OracleMatch m{fx.height(), fx.width(), {}};
  for (int y = 0; y < m.h; ++y)
    for (int x = 0; x < m.w; ++x) {
      const OracleHit& ch = coarse.hits[(y / b) * coarse.w + (x / b)];
      const int cy = std::clamp(y + ch.row - (y / b) * b, 0, fg.height() - 1);
      const int cx = std::clamp(x + ch.col - (x / b) * b, 0, fg.width() - 1);
      OracleHit hit;
      for (int r = cy - rad; r <= cy + rad; ++r)
        for (int c = cx - rad; c <= cx + rad; ++c) {
          if (r < 0 || c < 0 || r >= fg.height() || c >= fg.width()) continue;
          const double v = oracle_cosine(fx, y, x, fg, r, c, cfg.patch, true);
          if (v > hit.score) {
            hit.runner_up = hit.score;
            hit = {r, c, v, hit.runner_up};
          } else {
            hit.runner_up = std::max(hit.runner_up, v);
          }
        }
      m.hits.push_back(hit);
    }
  return m;
}

inline Tensor oracle_reflect_pad(const Tensor& t, int out_h, int out_w) {
  auto refl = [](int i, int n) {
    while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
    return i;
  };
  Tensor out = Tensor::hwc(out_h, out_w, t.channels());
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x)
      for (int c = 0; c < t.channels(); ++c) out(y, x, c) = t(refl(y, t.height()), refl(x, t.width()), c);
  return out;
}

/// Random query/guidance pair. Half the instances make the guidance a noisy,
/// shifted copy of the query so that the search has real structure.
inline std::pair<Tensor, Tensor> random_map_pair(std::uint64_t index, int max_side = 16, int channels = 4) {
  Rng rng(Seed{2024}, "test.match_pairs", index);
  const int h = 8 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_side - 7)));
  const int w = 8 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_side - 7)));
  Tensor fx = rng.normal_tensor({h, w, channels});
  Tensor fg = rng.normal_tensor({h, w, channels});
  if (index % 2 == 0) {
    const int sy = static_cast<int>(rng.below(5)) - 2, sx = static_cast<int>(rng.below(5)) - 2;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < channels; ++c)
          fg(y, x, c) = fx((y + sy + h) % h, (x + sx + w) % w, c) + 0.3 * fg(y, x, c);
  }
  return {fx, fg};
}

}  // namespace textres::testing
