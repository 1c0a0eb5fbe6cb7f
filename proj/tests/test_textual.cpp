#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"
#include "textres/core/error.hpp"
#include "textres/nn/ops.hpp"
#include "textres/textual/textual.hpp"

using namespace textres;
using namespace textres::textual;
using textres::testing::check_param_gradients;
using textres::testing::random_tensor;

namespace {

encoders::ImageEmbedding unit_embedding(int dim, std::uint64_t seed) {
  Tensor v = random_tensor({dim}, seed);
  v *= 1.0 / l2_norm(v);
  return {v, "toy"};
}

}  // namespace

TEST(Mapper, OutputShape) {
  const Mlp m = Mlp::mapper({64, kDefaultWords, 12, 0}, Seed{1});
  const TextualEmbedding e = i2t_map(unit_embedding(64, 2), m);
  EXPECT_EQ(e.n_words(), 20);
  EXPECT_EQ(e.dim(), 12);
  EXPECT_EQ(m.dims().resolved_hidden(), 240);
}

TEST(Mapper, ZeroWeightsEmitFinalBias) {
  Mlp m = Mlp::mapper({16, 3, 4, 8}, Seed{1});
  for (auto& p : m.params()) p.value.fill(0.0);
  Tensor& bias = m.params().at("fc3.b").value;
  for (std::size_t i = 0; i < bias.size(); ++i) bias[i] = 0.1 * static_cast<double>(i);
  const TextualEmbedding e = i2t_map(unit_embedding(16, 3), m);
  EXPECT_EQ(e.words, bias.reshaped({3, 4}));
}

TEST(Mapper, InitOutputRmsInRange) {
  const Mlp m = Mlp::mapper({256, 20, 12, 0}, Seed{4});
  double s2 = 0;
  std::size_t n = 0;
  for (int i = 0; i < 100; ++i) {
    const Tensor w = i2t_map(unit_embedding(256, 100 + i), m).words;
    for (double v : w.values()) s2 += v * v;
    n += w.size();
  }
  const double rms = std::sqrt(s2 / static_cast<double>(n));
  EXPECT_GE(rms, 0.005);
  EXPECT_LE(rms, 0.5);
}

TEST(Mapper, SameSeedSameInit) {
  EXPECT_TRUE(Mlp::mapper({32, 4, 5, 0}, Seed{9}).params() == Mlp::mapper({32, 4, 5, 0}, Seed{9}).params());
  EXPECT_FALSE(Mlp::mapper({32, 4, 5, 0}, Seed{9}).params() == Mlp::mapper({32, 4, 5, 0}, Seed{8}).params());
}

TEST(Mapper, DimensionMismatchRejected) {
  const Mlp m = Mlp::mapper({16, 3, 4, 0}, Seed{1});
  EXPECT_THROW(i2t_map(unit_embedding(17, 1), m), Error);
  const Mlp r = Mlp::restorer(3, 4, Seed{1});
  EXPECT_THROW(i2t_map(unit_embedding(12, 1), r), Error);
}

TEST(Restorer, ZeroNoiseIsExactIdentity) {
  for (auto [n, d] : {std::pair{20, 12}, std::pair{3, 7}, std::pair{1, 1}}) {
    const Mlp r = Mlp::restorer(n, d, Seed{2}, 0.0);
    const TextualEmbedding e{random_tensor({n, d}, 5)};
    const TextualEmbedding out = textual_restore(e, r);
    EXPECT_EQ(out.words.shape(), e.words.shape());
    EXPECT_LT(max_abs_diff(out.words, e.words), 1e-6);
  }
}

TEST(Restorer, DefaultInitIsNearIdentity) {
  const Mlp r = Mlp::restorer(20, 12, Seed{2});
  const TextualEmbedding e{random_tensor({20, 12}, 5)};
  EXPECT_LT(max_abs_diff(textual_restore(e, r).words, e.words), 0.1);
  EXPECT_GT(max_abs_diff(textual_restore(e, r).words, e.words), 0.0);
}

TEST(Restorer, ShapeMismatchRejected) {
  const Mlp r = Mlp::restorer(4, 3, Seed{2});
  EXPECT_THROW(textual_restore(TextualEmbedding{Tensor({3, 4})}, r), Error);
}

TEST(Gradients, MapperMatchesFiniteDifferences) {
  Mlp m = Mlp::mapper({24, 4, 5, 16}, Seed{3}, 0.3);
  const Tensor x = unit_embedding(24, 7).vector;
  const Tensor target = random_tensor({4, 5}, 8, 0.2);
  const auto res = check_param_gradients(
      m.params(),
      [&](nn::Graph& g) { return nn::mean_square(g, nn::sub(g, i2t_map(g, g.constant(x), m), g.constant(target))); },
      50, 1);
  EXPECT_EQ(res.directions, 50);
  EXPECT_LT(res.worst_rel_error, 1e-4);
}

TEST(Gradients, RestorerMatchesFiniteDifferences) {
  Mlp r = Mlp::restorer(4, 5, Seed{3}, 0.3, 16);
  const Tensor x = random_tensor({4, 5}, 9);
  const Tensor target = random_tensor({4, 5}, 10);
  const auto res = check_param_gradients(
      r.params(),
      [&](nn::Graph& g) {
        return nn::mean_square(g, nn::sub(g, textual_restore(g, g.constant(x), r), g.constant(target)));
      },
      50, 2);
  EXPECT_LT(res.worst_rel_error, 1e-4);
}
