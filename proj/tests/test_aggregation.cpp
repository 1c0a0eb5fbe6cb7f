#include <gtest/gtest.h>

#include <fstream>

#include "match_oracle.hpp"
#include "support.hpp"
#include "textres/aggregation/aggregation.hpp"
#include "textres/core/error.hpp"
#include "textres/nn/ops.hpp"

using namespace textres;
using namespace textres::aggregation;
using namespace textres::testing;

namespace {

FeatureMap fm(Tensor t, int level = 0) { return FeatureMap{std::move(t), level}; }

Tensor shifted_rows(const Tensor& t, int dy) {
  Tensor out(t.shape());
  for (int y = 0; y < t.height(); ++y)
    for (int x = 0; x < t.width(); ++x)
      for (int c = 0; c < t.channels(); ++c) out((y + dy) % t.height(), x, c) = t(y, x, c);
  return out;
}

void expect_same_as_oracle(const MatchResult& got, const OracleMatch& want) {
  ASSERT_EQ(got.grid_h, want.h);
  ASSERT_EQ(got.grid_w, want.w);
  for (std::size_t q = 0; q < want.hits.size(); ++q) {
    EXPECT_EQ(got.source[q].row, want.hits[q].row) << "query " << q;
    EXPECT_EQ(got.source[q].col, want.hits[q].col) << "query " << q;
    EXPECT_NEAR(got.scores[q], want.hits[q].score, 1e-12);
  }
}

}  // namespace

TEST(PatchSimilarity, BoundedAndSelfIsOne) {
  const Tensor a = random_tensor({8, 8, 3}, 1);
  const Tensor b = random_tensor({8, 8, 3}, 2);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      EXPECT_NEAR(patch_similarity(a, {y, x}, a, {y, x}, 3, PatchAnchor::Center), 1.0, 1e-12);
      const double s = patch_similarity(a, {y, x}, b, {7 - y, x}, 3, PatchAnchor::Center);
      EXPECT_GE(s, -1.0);
      EXPECT_LE(s, 1.0);
      EXPECT_NEAR(s, oracle_cosine(a, y, x, b, 7 - y, x, 3, true), 1e-14);
    }
  EXPECT_EQ(patch_similarity(Tensor::hwc(8, 8, 3), {0, 0}, a, {0, 0}, 8, PatchAnchor::TopLeft), 0.0);
}

TEST(CoarseMatch, SelfMatchIsIdentity) {
  const FeatureMap f = fm(random_tensor({16, 24, 4}, 3));
  const MatchResult m = coarse_match(f, f);
  ASSERT_EQ(m.grid_h, 2);
  ASSERT_EQ(m.grid_w, 3);
  for (int qy = 0; qy < 2; ++qy)
    for (int qx = 0; qx < 3; ++qx) {
      EXPECT_EQ(m.at(qy, qx), (Coord{qy * 8, qx * 8}));
      EXPECT_NEAR(m.score(qy, qx), 1.0, 1e-6);
    }
}

TEST(CoarseMatch, CircularShiftIsRecovered) {
  const Tensor base = random_tensor({16, 16, 4}, 4);
  const FeatureMap fx = fm(base), fg = fm(shifted_rows(base, 8));
  const MatchResult m = coarse_match(fx, fg);
  for (int qy = 0; qy < 2; ++qy)
    for (int qx = 0; qx < 2; ++qx) {
      EXPECT_EQ(m.at(qy, qx).row, (qy * 8 + 8) % 16);
      EXPECT_EQ(m.at(qy, qx).col, qx * 8);
    }
  EXPECT_EQ(warp_guidance(fg, m).data, base);
}

TEST(CoarseMatch, CandidatesFollowDilatedGrid) {
  const MatchConfig cfg;
  const auto c = coarse_candidates(48, 48, {24, 24}, cfg);
  // stride 8, dilations 1..3, radius 1: offsets {0, +-8, +-16, +-24} per axis, clipped to the map.
  std::vector<Coord> expect;
  for (int dy : {-24, -16, -8, 0, 8, 16})
    for (int dx : {-24, -16, -8, 0, 8, 16})
      if ((dy == 0 || dx == 0 || std::abs(dy) == std::abs(dx))) expect.push_back({24 + dy, 24 + dx});
  std::sort(expect.begin(), expect.end());
  EXPECT_EQ(c, expect);
}

TEST(CoarseMatch, BlockLargerThanMapRejected) {
  const FeatureMap f = fm(random_tensor({6, 6, 2}, 1));
  EXPECT_THROW(coarse_match(f, f), Error);
  const FeatureMap g = fm(random_tensor({8, 8, 2}, 1), 1);
  const FeatureMap h = fm(random_tensor({8, 8, 2}, 1), 0);
  EXPECT_THROW(coarse_match(g, h), Error);
}

TEST(FineMatch, SelfRefinementKeepsIdentity) {
  const FeatureMap f = fm(random_tensor({16, 16, 4}, 5));
  const MatchResult fine = fine_match(f, f, coarse_match(f, f));
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      EXPECT_EQ(fine.at(y, x), (Coord{y, x}));
      EXPECT_NEAR(fine.score(y, x), 1.0, 1e-6);
    }
}

TEST(FineMatch, RefinedScoreAtLeastCoarseImpliedCandidate) {
  for (std::uint64_t i = 0; i < 20; ++i) {
    auto [x, g] = random_map_pair(i);
    const Tensor px = oracle_reflect_pad(x, 16, 16), pg = oracle_reflect_pad(g, 16, 16);
    const MatchResult coarse = coarse_match(fm(px), fm(pg));
    const MatchResult fine = fine_match(fm(px), fm(pg), coarse);
    for (int y = 0; y < 16; ++y)
      for (int xx = 0; xx < 16; ++xx) {
        const Coord& s = coarse.at(y / 8, xx / 8);
        const double implied =
            patch_similarity(px, {y, xx}, pg, {s.row + y % 8, s.col + xx % 8}, 3, PatchAnchor::Center);
        EXPECT_GE(fine.score(y, xx), implied);
      }
  }
}

TEST(FineMatch, InvalidPatchRejected) {
  const FeatureMap f = fm(random_tensor({16, 16, 2}, 5));
  const MatchResult coarse = coarse_match(f, f);
  MatchConfig even;
  even.patch = 4;
  EXPECT_THROW(fine_match(f, f, coarse, even), Error);
  MatchConfig big;
  big.patch = 9;
  EXPECT_THROW(fine_match(f, f, coarse, big), Error);
}

TEST(BruteForce, ConstantMapsTieToSmallestIndex) {
  const FeatureMap f = fm(Tensor::hwc(8, 8, 2, 1.0));
  std::vector<std::vector<Coord>> cands(64, std::vector<Coord>{{5, 5}, {2, 7}, {2, 3}, {6, 0}});
  const MatchResult m = brute_force_match(f, f, 3, PatchAnchor::Center, cands, MatchLevel::Fine, 1);
  for (const Coord& c : m.source) EXPECT_EQ(c, (Coord{2, 3}));
  for (double s : m.scores) EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(BruteForce, SelfMatchOverFullSearch) {
  const FeatureMap f = fm(random_tensor({8, 8, 3}, 8));
  std::vector<Coord> all;
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) all.push_back({y, x});
  const MatchResult m =
      brute_force_match(f, f, 3, PatchAnchor::Center, std::vector<std::vector<Coord>>(64, all), MatchLevel::Fine, 1);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) EXPECT_EQ(m.at(y, x), (Coord{y, x}));
}

TEST(MatchOracle, CoarseAndFineEqualExhaustiveSearch) {
  const MatchConfig cfg;
  int checked = 0;
  for (std::uint64_t i = 0; checked < 60 && i < 200; ++i) {
    auto [x, g] = random_map_pair(i);
    const int ph = std::max(8, (x.height() + 7) / 8 * 8), pw = std::max(8, (x.width() + 7) / 8 * 8);
    const Tensor px = oracle_reflect_pad(x, ph, pw), pg = oracle_reflect_pad(g, ph, pw);
    const OracleMatch oc = oracle_coarse(px, pg, cfg);
    const OracleMatch of = oracle_fine(px, pg, oc, cfg);
    if (oc.has_tie(1e-9) || of.has_tie(1e-9)) continue;
    const MatchResult coarse = coarse_match(fm(px), fm(pg), cfg);
    expect_same_as_oracle(coarse, oc);
    expect_same_as_oracle(fine_match(fm(px), fm(pg), coarse, cfg), of);

    const MatchResult full = match_coarse_to_fine(fm(x), fm(g), cfg);
    ASSERT_EQ(full.grid_h, x.height());
    for (int y = 0; y < x.height(); ++y)
      for (int xx = 0; xx < x.width(); ++xx) {
        const OracleHit& h = of.hits[y * pw + xx];
        const Coord folded{h.row >= g.height() ? 2 * g.height() - 1 - h.row : h.row,
                           h.col >= g.width() ? 2 * g.width() - 1 - h.col : h.col};
        EXPECT_EQ(full.at(y, xx), folded);
      }
    ++checked;
  }
  EXPECT_EQ(checked, 60);
}

TEST(Reflect, IndexAndPad) {
  EXPECT_EQ(reflect_index(-1, 5), 0);
  EXPECT_EQ(reflect_index(-2, 5), 1);
  EXPECT_EQ(reflect_index(5, 5), 4);
  EXPECT_EQ(reflect_index(6, 5), 3);
  EXPECT_EQ(reflect_index(3, 5), 3);
  const Tensor t = random_tensor({5, 7, 2}, 9);
  EXPECT_EQ(reflect_pad(t, 8, 16), oracle_reflect_pad(t, 8, 16));
}

TEST(Warp, IdentityAndPermutationGather) {
  const Tensor t = random_tensor({8, 8, 3}, 10);
  const FeatureMap f = fm(t);
  const MatchResult id = fine_match(f, f, coarse_match(f, f));
  EXPECT_EQ(warp_guidance(f, id).data, t);

  auto [x, g] = random_map_pair(3);
  const MatchResult m = match_coarse_to_fine(fm(x), fm(g));
  const FeatureMap w = warp_guidance(fm(g), m);
  EXPECT_EQ(w.data.shape(), x.shape());
  for (int y = 0; y < x.height(); ++y)
    for (int xx = 0; xx < x.width(); ++xx) {
      const Coord& s = m.at(y, xx);
      for (int c = 0; c < g.channels(); ++c) EXPECT_EQ(w.data(y, xx, c), g(s.row, s.col, c));
    }
}

TEST(Warp, UpscaledMatchKeepsSubpixelOffsets) {
  const FeatureMap f = fm(random_tensor({8, 8, 2}, 11));
  const MatchResult fine = fine_match(f, f, coarse_match(f, f));
  const MatchResult up = upscale_match(fine, 2);
  EXPECT_EQ(up.grid_h, 16);
  EXPECT_EQ(up.source_w, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) EXPECT_EQ(up.at(y, x), (Coord{y, x}));
}

TEST(Warp, GradientScattersBack) {
  auto [x, g] = random_map_pair(5);
  const MatchResult m = match_coarse_to_fine(fm(x), fm(g));
  nn::ParamSet p;
  p.add("g", g);
  const Tensor w = random_tensor(x.shape(), 12);
  const auto res = check_param_gradients(
      p, [&](nn::Graph& gr) { return nn::mean_square(gr, nn::sub(gr, warp_guidance(gr, gr.param(p[0]), m), gr.constant(w))); },
      50, 3);
  EXPECT_LT(res.worst_rel_error, 1e-4);
}

TEST(MatchExport, CsvHasOneRowPerQuery) {
  TempDir dir("match_csv");
  const FeatureMap f = fm(random_tensor({16, 16, 2}, 13));
  const MatchResult c = coarse_match(f, f);
  export_match_csv(c, (dir.path() / "m.csv").string());
  std::ifstream in(dir.path() / "m.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "qrow,qcol,srow,scol,score");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 4);
}

TEST(Extractor, PyramidShapesAndSharedWeights) {
  nn::ParamSet params;
  const FeatureExtractor ex(params, "ext", 8, 3, 1, Seed{1});
  const Image img = random_image(64, 64, 2);
  const auto maps = ex.extract(img, params);
  ASSERT_EQ(maps.size(), 3u);
  for (int s = 0; s < 3; ++s) {
    EXPECT_EQ(maps[s].height(), 64 >> s);
    EXPECT_EQ(maps[s].width(), 64 >> s);
    EXPECT_EQ(maps[s].channels(), ex.width_at(s));
    EXPECT_EQ(maps[s].scale_index, s);
    EXPECT_TRUE(all_finite(maps[s].data));
  }
  const auto again = ex.extract(img, params);
  for (int s = 0; s < 3; ++s) EXPECT_EQ(again[s].data, maps[s].data);
  for (const auto& p : params) EXPECT_EQ(p.group, "aggregation");
  EXPECT_THROW(ex.extract(random_image(34, 34, 2), params), Error);
}

TEST(Extractor, GradientMatchesFiniteDifferences) {
  nn::ParamSet params;
  const FeatureExtractor ex(params, "ext", 4, 2, 1, Seed{2});
  const Tensor img = random_image(8, 8, 3).pixels();
  const auto res = check_param_gradients(
      params,
      [&](nn::Graph& g) {
        const auto maps = ex.forward(g, params, g.constant(img));
        return nn::add(g, nn::mean_square(g, maps[0]), nn::mean_square(g, maps[1]));
      },
      50, 4);
  EXPECT_LT(res.worst_rel_error, 1e-4);
}

TEST(Fuse, AlphaZeroIsBitExact) {
  for (FuseKind kind : {FuseKind::Conv, FuseKind::Attention}) {
    nn::ParamSet params;
    const FuseBlock block(params, "f", 4, kind, Seed{3});
    const FeatureMap fx = fm(random_tensor({8, 8, 4}, 14)), fg = fm(random_tensor({8, 8, 4}, 15));
    EXPECT_EQ(fuse(fx, fg, 0.0, block, params).data, fx.data);
    EXPECT_NE(fuse(fx, fg, 0.5, block, params).data, fx.data);
  }
}

TEST(Fuse, ZeroInitBranchIsIdentity) {
  nn::ParamSet params;
  const FuseBlock block(params, "f", 4, FuseKind::Conv, Seed{3}, true);
  const FeatureMap fx = fm(random_tensor({8, 8, 4}, 14)), fg = fm(random_tensor({8, 8, 4}, 15));
  for (double a : {0.0, 0.3, -2.0}) EXPECT_EQ(fuse(fx, fg, a, block, params).data, fx.data);
}

TEST(Fuse, OffsetIsLinearInAlpha) {
  for (FuseKind kind : {FuseKind::Conv, FuseKind::Attention}) {
    nn::ParamSet params;
    const FuseBlock block(params, "f", 4, kind, Seed{4});
    const FeatureMap fx = fm(random_tensor({8, 8, 4}, 16)), fg = fm(random_tensor({8, 8, 4}, 17));
    const Tensor d1 = fuse(fx, fg, 0.37, block, params).data - fx.data;
    const Tensor d2 = fuse(fx, fg, 0.74, block, params).data - fx.data;
    EXPECT_LT(l2_norm(d2 - d1 * 2.0) / l2_norm(d2), 1e-6);
  }
}

TEST(Fuse, ShapeMismatchRejected) {
  nn::ParamSet params;
  const FuseBlock block(params, "f", 4, FuseKind::Conv, Seed{4});
  EXPECT_THROW(fuse(fm(random_tensor({8, 8, 4}, 1)), fm(random_tensor({8, 16, 4}, 2)), 0.5, block, params), Error);
}

TEST(Fuse, GradientsMatchFiniteDifferences) {
  for (FuseKind kind : {FuseKind::Conv, FuseKind::Attention}) {
    nn::ParamSet params;
    const FuseBlock block(params, "f", 3, kind, Seed{5});
    params.add("alpha", Tensor::vector({0.7}), "alpha");
    const Tensor fx = random_tensor({6, 6, 3}, 18), fg = random_tensor({6, 6, 3}, 19);
    auto loss = [&](nn::Graph& g) {
      const nn::Var out =
          fuse(g, params, g.constant(fx), g.constant(fg), g.param(params.at("alpha")), block);
      return nn::mean_square(g, out);
    };
    EXPECT_LT(check_param_gradients(params, loss, 50, 6).worst_rel_error, 1e-4);

    nn::ParamSet alpha_only;
    alpha_only.add("alpha", Tensor::vector({0.7}), "alpha");
    auto alpha_loss = [&](nn::Graph& g) {
      return nn::mean_square(g, fuse(g, params, g.constant(fx), g.constant(fg), g.param(alpha_only[0]), block));
    };
    EXPECT_LT(check_param_gradients(alpha_only, alpha_loss, 50, 7).worst_rel_error, 1e-4);
  }
}

TEST(Fuse, AlphaGradientExistsAtZero) {
  nn::ParamSet params;
  const FuseBlock block(params, "f", 3, FuseKind::Conv, Seed{5});
  params.add("alpha", Tensor::vector({0.0}), "alpha");
  const Tensor fx = random_tensor({6, 6, 3}, 18), fg = random_tensor({6, 6, 3}, 19);
  nn::Graph g;
  g.backward(nn::mean_square(
      g, fuse(g, params, g.constant(fx), g.constant(fg), g.param(params.at("alpha")), block)));
  EXPECT_NE(g.gradient(params.at("alpha"))[0], 0.0);
}
