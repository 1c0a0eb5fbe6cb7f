#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"
#include "textres/core/error.hpp"
#include "textres/encoders/encoders.hpp"
#include "textres/metrics/metrics.hpp"

using namespace textres;
using namespace textres::encoders;
using textres::testing::random_image;
using textres::testing::random_tensor;

namespace {

Image smooth_gradient(int size, double phase) {
  Tensor t = Tensor::hwc(size, size, 3);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double u = static_cast<double>(x) / (size - 1), v = static_cast<double>(y) / (size - 1);
      t(y, x, 0) = 0.2 + 0.6 * u;
      t(y, x, 1) = 0.5 + 0.3 * std::sin(2.0 * v + phase);
      t(y, x, 2) = 0.3 + 0.4 * u * v;
    }
  return Image(std::move(t), ColorSpace::RGB);
}

}  // namespace

TEST(ImageEncoder, DeterministicUnitNorm) {
  const Backends b = make_backends("toy");
  const Image img = random_image(32, 32, 1);
  const ImageEmbedding e = b.image_encoder->encode(img);
  EXPECT_EQ(e.vector.size(), static_cast<std::size_t>(b.descriptor.image_dim));
  EXPECT_EQ(e.vector, b.image_encoder->encode(img).vector);
  EXPECT_NEAR(l2_norm(e.vector), 1.0, 1e-6);
  EXPECT_NEAR(l2_norm(b.image_encoder->encode(Image(32, 32, 3, 0.5)).vector), 1.0, 1e-6);
  EXPECT_NEAR(l2_norm(b.image_encoder->encode(random_image(40, 24, 3)).vector), 1.0, 1e-6);
}

TEST(ImageEncoder, DistinctImagesHaveCosineBelowOne) {
  const Backends b = make_backends("toy");
  const Tensor e1 = b.image_encoder->encode(random_image(32, 32, 1)).vector;
  const Tensor e2 = b.image_encoder->encode(smooth_gradient(32, 0.3)).vector;
  EXPECT_LT(dot(e1, e2), 1.0 - 1e-6);
}

TEST(ImageEncoder, RejectsGray) {
  const Backends b = make_backends("toy");
  EXPECT_THROW(b.image_encoder->encode(random_image(16, 16, 1, 1)), Error);
}

TEST(RandomOrthonormal, ColumnsOrRowsOrthonormal) {
  for (auto [r, c] : {std::pair{10, 4}, std::pair{4, 10}, std::pair{6, 6}}) {
    const Tensor q = random_orthonormal(r, c, Seed{3}, "test");
    const bool tall = r >= c;
    const int n = tall ? c : r, len = tall ? r : c;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double s = 0;
        for (int k = 0; k < len; ++k)
          s += tall ? q[k * c + i] * q[k * c + j] : q[i * c + k] * q[j * c + k];
        EXPECT_NEAR(s, i == j ? 1.0 : 0.0, 1e-12);
      }
  }
}

TEST(Autoencoder, ShapeContract) {
  const Backends b = make_backends("toy");
  const LatentCode z = b.autoencoder->encode(random_image(64, 64, 2));
  EXPECT_EQ(z.data.height(), 16);
  EXPECT_EQ(z.data.width(), 16);
  EXPECT_EQ(z.data.channels(), b.descriptor.latent_channels);
  EXPECT_FALSE(z.timestep.has_value());
  const Image back = b.autoencoder->decode(z);
  EXPECT_EQ(back.height(), 64);
  EXPECT_EQ(back.width(), 64);
  EXPECT_THROW(b.autoencoder->encode(random_image(30, 32, 2)), Error);
}

TEST(Autoencoder, ConstantRoundTrip) {
  const Backends b = make_backends("toy");
  Tensor t = Tensor::hwc(32, 32, 3);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      t(y, x, 0) = 0.1;
      t(y, x, 1) = 0.6;
      t(y, x, 2) = 0.9;
    }
  const Image img(t, ColorSpace::RGB);
  const LatentCode z = b.autoencoder->encode(img);
  for (int k = 0; k < 4; ++k)
    for (int i = 1; i < 64; ++i) EXPECT_EQ(z.data[i * 4 + k], z.data[k]);
  EXPECT_LT(max_abs_diff(b.autoencoder->decode(z).pixels(), img.pixels()), 1e-6);
}

TEST(Autoencoder, ZeroLatentDecodesToMidGray) {
  const Backends b = make_backends("toy");
  const Image g = b.autoencoder->decode(LatentCode{Tensor::hwc(4, 4, 4), std::nullopt});
  for (double v : g.pixels().values()) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(Autoencoder, SmoothImagesReconstructAbove25dB) {
  const Backends b = make_backends("toy");
  for (double phase : {0.0, 1.0, 2.5}) {
    const Image img = smooth_gradient(64, phase);
    const Image rec = b.autoencoder->decode(b.autoencoder->encode(img));
    EXPECT_GE(metrics::psnr(img, rec), 25.0) << "phase " << phase;
  }
}

TEST(Autoencoder, RejectsNoisedLatent) {
  const Backends b = make_backends("toy");
  EXPECT_THROW(b.autoencoder->decode(LatentCode{Tensor::hwc(4, 4, 4), 10}), Error);
}

TEST(NoiseSchedule, DefaultIsValidAndDecreasing) {
  const NoiseSchedule s = NoiseSchedule::linear();
  EXPECT_EQ(s.timesteps, 1000);
  EXPECT_NO_THROW(s.validate());
  EXPECT_GT(s.alphas_cumprod.front(), 0.999);
  EXPECT_LT(s.alphas_cumprod.back(), 0.01);
  NoiseSchedule bad = s;
  bad.alphas_cumprod[5] = bad.alphas_cumprod[4];
  EXPECT_THROW(bad.validate(), Error);
}

TEST(NoiseLatent, MatchesFormula) {
  const NoiseSchedule s = NoiseSchedule::linear();
  const LatentCode z{random_tensor({4, 4, 4}, 1), std::nullopt};
  const Tensor eps = random_tensor({4, 4, 4}, 2);
  for (int t : {0, 250, 999}) {
    const LatentCode zt = noise_latent(z, t, eps, s);
    ASSERT_EQ(zt.timestep, t);
    const double a = s.alphas_cumprod[t];
    for (std::size_t i = 0; i < eps.size(); ++i)
      EXPECT_DOUBLE_EQ(zt.data[i], std::sqrt(a) * z.data[i] + std::sqrt(1.0 - a) * eps[i]);
  }
}

TEST(NoiseLatent, LimitsAndLinearity) {
  NoiseSchedule s;
  s.timesteps = 2;
  s.alphas_cumprod = {1.0, 1e-300};
  const LatentCode z{random_tensor({2, 2, 4}, 3), std::nullopt};
  const Tensor eps = random_tensor({2, 2, 4}, 4);
  EXPECT_EQ(noise_latent(z, 0, eps, s).data, z.data);
  EXPECT_LT(max_abs_diff(noise_latent(z, 1, eps, s).data, eps), 1e-140);

  const NoiseSchedule d = NoiseSchedule::linear();
  const double a = 2.5;
  const Tensor lhs = noise_latent(LatentCode{z.data * a, std::nullopt}, 400, eps * a, d).data;
  const Tensor rhs = noise_latent(z, 400, eps, d).data * a;
  EXPECT_LT(max_abs_diff(lhs, rhs), 1e-12);
}

TEST(NoiseLatent, ShapeMismatchRejected) {
  const LatentCode z{Tensor::hwc(2, 2, 4), std::nullopt};
  EXPECT_THROW(noise_latent(z, 0, Tensor::hwc(2, 3, 4), NoiseSchedule::linear()), Error);
  EXPECT_THROW(noise_latent(z, 1000, Tensor::hwc(2, 2, 4), NoiseSchedule::linear()), Error);
}

TEST(Backends, SelectorHandling) {
  EXPECT_NO_THROW(make_backends("toy"));
  try {
    make_backends("adapter:/nonexistent/weights.bin");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DependencyMissing);
  }
  try {
    make_backends("clip");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ConfigError);
  }
}
