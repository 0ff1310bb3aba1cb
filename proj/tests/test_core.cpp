#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "subcellsam/geometry.hpp"
#include "subcellsam/image_io.hpp"

using namespace subcellsam;

namespace {

ScoreGrid grid_from(Size s, std::vector<float> v) { return ScoreGrid{Raster<float>(s, std::move(v)), {}}; }

}  // namespace

TEST(ScaleBbox, IdentityFactor) {
  EXPECT_EQ(scale_bbox({10, 10, 20, 20}, 1.0, {100, 100}), (BoundingBox{10, 10, 20, 20}));
}

TEST(ScaleBbox, DoublesAboutCenter) {
  EXPECT_EQ(scale_bbox({10, 10, 20, 20}, 2.0, {100, 100}), (BoundingBox{5, 5, 25, 25}));
}

TEST(ScaleBbox, ClipsAtImageEdge) {
  EXPECT_EQ(scale_bbox({0, 0, 10, 10}, 2.0, {100, 100}), (BoundingBox{0, 0, 15, 15}));
  EXPECT_EQ(scale_bbox({90, 90, 100, 100}, 2.0, {100, 100}), (BoundingBox{85, 85, 100, 100}));
}

TEST(ScaleBbox, RejectsBadInput) {
  EXPECT_THROW(scale_bbox({10, 10, 20, 20}, 0.0, {100, 100}), Error);
  EXPECT_THROW(scale_bbox({10, 10, 10, 20}, 1.0, {100, 100}), Error);
}

TEST(MaskToBbox, Examples) {
  BinaryMask single({10, 10});
  single.set(5, 7);
  EXPECT_EQ(mask_to_bbox(single), (BoundingBox{5, 7, 6, 8}));

  const auto full = fixtures::rect({12, 9}, 0, 0, 12, 9);
  EXPECT_EQ(mask_to_bbox(full), (BoundingBox{0, 0, 12, 9}));

  BinaryMask two({12, 12});
  two.set(2, 3);
  two.set(9, 4);
  EXPECT_EQ(mask_to_bbox(two), (BoundingBox{2, 3, 10, 5}));
}

TEST(MaskToBbox, EmptyThrows) {
  try {
    mask_to_bbox(BinaryMask({4, 4}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyMask);
  }
}

TEST(Resample, ConstantPreserved) {
  const auto g = grid_from({3, 5}, std::vector<float>(15, 0.4f));
  const auto r = resample_score_grid(g, {17, 11});
  for (float v : r.raster.values()) EXPECT_FLOAT_EQ(v, 0.4f);
}

TEST(Resample, TwoByTwoToFourByFour) {
  const auto g = grid_from({2, 2}, {0, 1, 0, 1});
  const auto r = resample_score_grid(g, {4, 4});
  for (int y = 0; y < 4; ++y) {
    EXPECT_FLOAT_EQ(r.raster(0, y), 0.0f);
    EXPECT_FLOAT_EQ(r.raster(3, y), 1.0f);
    for (int x = 1; x < 4; ++x) EXPECT_GT(r.raster(x, y), r.raster(x - 1, y));
  }
}

TEST(Resample, RoundTripRandomGrid) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<float> u(-3.0f, 3.0f);
  std::vector<float> v(8 * 6);
  for (auto& x : v) x = u(rng);
  const auto g = grid_from({8, 6}, v);
  const auto up = resample_score_grid(g, {8 * 4 - 3, 6 * 4 - 3});
  const auto back = resample_score_grid(up, {8, 6});
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(back.raster.values()[i], v[i], 1e-6);
}

TEST(Resample, KeepsCalibration) {
  auto g = grid_from({2, 2}, {0, 1, 0, 1});
  g.calibration.threshold = 0.25f;
  EXPECT_EQ(resample_score_grid(g, {5, 5}).calibration.threshold, 0.25f);
}

TEST(PixelsOnBorder, Examples) {
  EXPECT_FALSE(pixels_on_border(fixtures::rect({10, 10}, 4, 4, 7, 7)));
  BinaryMask left({10, 10});
  left.set(0, 5);
  left.set(1, 5);
  EXPECT_TRUE(pixels_on_border(left));
  BinaryMask corner({10, 10});
  corner.set(9, 9);
  EXPECT_TRUE(pixels_on_border(corner));
}

TEST(ConnectedComponents, FourConnectivity) {
  BinaryMask m({6, 6});
  m.set(0, 0);
  m.set(1, 1);  // diagonal only: separate component
  m.set(4, 4);
  m.set(4, 5);
  const auto cc = connected_components(m);
  ASSERT_EQ(cc.size(), 3u);
  EXPECT_TRUE(cc[0](0, 0));
  EXPECT_TRUE(cc[1](1, 1));
  EXPECT_EQ(cc[2].area(), 2u);
}

TEST(Calibration, SigmoidAboutThreshold) {
  Calibration c{0.5f};
  EXPECT_DOUBLE_EQ(c.probability(0.5f), 0.5);
  EXPECT_NEAR(c.probability(1.5f), 1.0 / (1.0 + std::exp(-1.0)), 1e-12);
}

TEST(MultiChannelImage, RolesAndSizes) {
  MultiChannelImage img({Channel({4, 4}), Channel({4, 4}), Channel({4, 4})},
                        {{0, ChannelRole::Nucleus}, {2, ChannelRole::CellMarker}});
  EXPECT_EQ(img.nucleus_channel(), 0);
  EXPECT_EQ(img.cell_marker_channels(), std::vector<int>{2});
  EXPECT_FALSE(img.subcellular_channel().has_value());
  EXPECT_EQ(img.role(1), ChannelRole::Other);
  EXPECT_THROW(MultiChannelImage({Channel({4, 4}), Channel({5, 4})}, {}), Error);
}

TEST(ImageIo, LabelRoundTripPngAndTiff) {
  fixtures::TempDir dir("subcellsam_io");
  Raster<std::uint32_t> labels({7, 5}, 0);
  labels(1, 1) = 3;
  labels(6, 4) = 65535;
  labels(2, 3) = 300;
  for (const char* name : {"l.png", "l.tif"}) {
    io::save_labels(dir.path() / name, labels);
    EXPECT_EQ(io::load_labels(dir.path() / name), labels) << name;
  }
}

TEST(ImageIo, ChannelsNormalizedOnLoad) {
  fixtures::TempDir dir("subcellsam_io");
  Channel a({4, 3}, 0.0f), b({4, 3}, 1.0f);
  a(2, 1) = 0.5f;
  io::save_channels_tiff(dir.path() / "c.tif", {a, b});
  const auto ch = io::load_channels(dir.path() / "c.tif");
  ASSERT_EQ(ch.size(), 2u);
  EXPECT_NEAR(ch[0](2, 1), 0.5f, 1.0 / 65535);
  EXPECT_FLOAT_EQ(ch[1](0, 0), 1.0f);
  EXPECT_FLOAT_EQ(ch[0](0, 0), 0.0f);
}

TEST(ImageIo, MissingFile) {
  try {
    io::load_channels("/nonexistent/none.tif");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::FileNotFound);
  }
}

TEST(ImageIo, LabelsTooLarge) {
  fixtures::TempDir dir("subcellsam_io");
  Raster<std::uint32_t> labels({2, 2}, 70000);
  EXPECT_THROW(io::save_labels(dir.path() / "x.png", labels), Error);
}
