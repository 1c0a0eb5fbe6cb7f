#include <gtest/gtest.h>

#include <fstream>

#include "support.hpp"
#include "textres/core/checkpoint.hpp"
#include "textres/core/error.hpp"
#include "textres/core/image.hpp"
#include "textres/core/rng.hpp"

using namespace textres;
using textres::testing::TempDir;

namespace {

Checkpoint sample_checkpoint() {
  Checkpoint c;
  c.module_id = "backbone";
  c.config_digest = "abc123";
  c.blobs = {{"w", {1.5f, -2.25f, 3.0f}}, {"b", {0.125f}}, {"empty", {}}};
  return c;
}

ErrorKind kind_of_failure(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::InternalError;
}

}  // namespace

TEST(Rng, SameKeySameStream) {
  Rng a(Seed{5}, "stage", 3), b(Seed{5}, "stage", 3);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, StreamsIndependentOfOtherDraws) {
  Rng a(Seed{5}, "stage", 3);
  Rng other(Seed{5}, "stage", 4);
  for (int i = 0; i < 17; ++i) other.normal();
  Rng b(Seed{5}, "stage", 3);
  EXPECT_EQ(a.normal(), b.normal());
  EXPECT_NE(Rng(Seed{5}, "stage", 3).next_u64(), Rng(Seed{5}, "other", 3).next_u64());
  EXPECT_NE(Rng(Seed{5}, "stage", 3).next_u64(), Rng(Seed{6}, "stage", 3).next_u64());
}

TEST(Rng, UniformAndNormalMoments) {
  Rng rng(Seed{11}, "moments");
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    su += u;
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
  }
  EXPECT_NEAR(su / n, 0.5, 0.005);
  EXPECT_NEAR(sn / n, 0.0, 0.01);
  EXPECT_NEAR(sn2 / n, 1.0, 0.01);
}

TEST(Rng, BelowStaysInRange) {
  Rng rng(Seed{2}, "below");
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 7000; ++i) ++hits[rng.below(7)];
  for (int h : hits) EXPECT_GT(h, 800);
}

TEST(Image, RejectsBadShapesAndValues) {
  EXPECT_THROW(Image(4, 8, 3), Error);
  EXPECT_THROW(Image(8, 8, 2), Error);
  EXPECT_THROW(Image(Tensor::hwc(8, 8, 3, 1.5), ColorSpace::RGB), Error);
  Tensor nan = Tensor::hwc(8, 8, 1, 0.5);
  nan[3] = std::nan("");
  EXPECT_THROW(Image(nan, ColorSpace::GRAY), Error);
}

TEST(Image, ClippedClampsToUnitRange) {
  Tensor t = Tensor::hwc(8, 8, 3, 0.5);
  t[0] = -0.3;
  t[1] = 1.7;
  const Image img = Image::clipped(t);
  EXPECT_EQ(img.pixels()[0], 0.0);
  EXPECT_EQ(img.pixels()[1], 1.0);
  EXPECT_EQ(img.pixels()[2], 0.5);
}

TEST(Image, AreaDownsampleAndResizeOfConstant) {
  const Tensor c = Tensor::hwc(16, 16, 3, 0.25);
  const Tensor small = area_downsample(c, 4);
  EXPECT_EQ(small.height(), 4);
  for (double v : small.values()) EXPECT_DOUBLE_EQ(v, 0.25);
  const Tensor big = resize_bilinear(c, 24, 40);
  EXPECT_EQ(big.width(), 40);
  for (double v : big.values()) EXPECT_NEAR(v, 0.25, 1e-15);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  TempDir dir("ckpt_rt");
  const Checkpoint c = sample_checkpoint();
  save_checkpoint(c, dir.path() / "nested" / "a.ckpt");
  EXPECT_EQ(load_checkpoint(dir.path() / "nested" / "a.ckpt"), c);
  EXPECT_FALSE(std::filesystem::exists(dir.path() / "nested" / "a.ckpt.tmp"));
}

TEST(Checkpoint, LayoutStartsWithMagicAndVersion) {
  TempDir dir("ckpt_layout");
  save_checkpoint(sample_checkpoint(), dir.path() / "a.ckpt");
  std::ifstream in(dir.path() / "a.ckpt", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  ASSERT_GE(bytes.size(), 8u);
  EXPECT_EQ(bytes.substr(0, 4), "TXRS");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), kCheckpointFormatVersion);
  // magic + version + (4 + 8) module + (4 + 6) digest + blobs
  const std::size_t expected = 4 + 4 + 12 + 10 + (4 + 1 + 8 + 12) + (4 + 1 + 8 + 4) + (4 + 5 + 8);
  EXPECT_EQ(bytes.size(), expected);
}

TEST(Checkpoint, VersionMismatchRejected) {
  TempDir dir("ckpt_ver");
  Checkpoint c = sample_checkpoint();
  c.format_version = kCheckpointFormatVersion + 1;
  save_checkpoint(c, dir.path() / "a.ckpt");
  EXPECT_EQ(kind_of_failure([&] { load_checkpoint(dir.path() / "a.ckpt"); }), ErrorKind::VersionMismatch);
}

TEST(Checkpoint, ModuleMismatchRejected) {
  TempDir dir("ckpt_mod");
  Checkpoint c = sample_checkpoint();
  c.module_id = "mapper";
  save_checkpoint(c, dir.path() / "a.ckpt");
  EXPECT_EQ(kind_of_failure([&] { load_checkpoint(dir.path() / "a.ckpt", "backbone"); }),
            ErrorKind::ModuleMismatch);
}

TEST(Checkpoint, TruncatedFileIsCorrupt) {
  TempDir dir("ckpt_trunc");
  save_checkpoint(sample_checkpoint(), dir.path() / "a.ckpt");
  const auto size = std::filesystem::file_size(dir.path() / "a.ckpt");
  for (std::uintmax_t cut : {size - 3, size - 20, std::uintmax_t{6}}) {
    std::filesystem::copy_file(dir.path() / "a.ckpt", dir.path() / "b.ckpt",
                               std::filesystem::copy_options::overwrite_existing);
    std::filesystem::resize_file(dir.path() / "b.ckpt", cut);
    EXPECT_EQ(kind_of_failure([&] { load_checkpoint(dir.path() / "b.ckpt"); }), ErrorKind::CorruptCheckpoint)
        << "cut at " << cut;
  }
}

TEST(Checkpoint, DigestMismatchIsWarningOnly) {
  TempDir dir("ckpt_digest");
  save_checkpoint(sample_checkpoint(), dir.path() / "a.ckpt");
  const auto same = load_checkpoint(dir.path() / "a.ckpt", "backbone", "abc123");
  EXPECT_FALSE(same.warning.has_value());
  const auto other = load_checkpoint(dir.path() / "a.ckpt", "backbone", "zzz");
  ASSERT_TRUE(other.warning.has_value());
  EXPECT_EQ(other.checkpoint, sample_checkpoint());
}

TEST(Checkpoint, MissingFileIsIoError) {
  EXPECT_EQ(kind_of_failure([] { load_checkpoint("/nonexistent/dir/x.ckpt"); }), ErrorKind::Io);
}
