#include <gtest/gtest.h>

#include <fstream>

#include "testutil.hpp"
#include "usaad/imaging.hpp"

using namespace usaad;

TEST(Imaging, NormalizeRoundTripsAll8BitValues) {
  for (int v = 0; v <= 255; ++v) {
    float x = normalize_u8(static_cast<std::uint8_t>(v));
    EXPECT_GE(x, -1.0f);
    EXPECT_LE(x, 1.0f);
    EXPECT_EQ(denormalize_to_u8(x), v);
  }
}

TEST(Imaging, LoadImagesContract) {
  testutil::TempDir dir("imaging_load");
  for (int i = 0; i < 4; ++i) {
    ImageBatch img = testutil::synth_scene(3, 256, 100 + i);
    save_image_png(dir.path / ("img" + std::to_string(i) + ".png"), img);
  }
  ImageBatch batch = load_images(dir.path, 3, 256);
  EXPECT_EQ(batch.n(), 4);
  EXPECT_EQ(batch.c(), 3);
  EXPECT_EQ(batch.h(), 256);
  EXPECT_EQ(batch.w(), 256);
  EXPECT_GE(batch.min_value(), -1.0f);
  EXPECT_LE(batch.max_value(), 1.0f);
  EXPECT_TRUE(batch.all_finite());
}

TEST(Imaging, AllWhiteImageNormalizesToOne) {
  testutil::TempDir dir("imaging_white");
  ImageBatch white(1, 3, 32, 32, 1.0f);
  save_image_png(dir.path / "white.png", white);
  ImageBatch batch = load_images(dir.path, 3, 32);
  for (std::size_t i = 0; i < batch.numel(); ++i) EXPECT_EQ(batch.data()[i], 1.0f);
}

TEST(Imaging, EmptyDirErrors) {
  testutil::TempDir dir("imaging_empty");
  EXPECT_THROW(load_images(dir.path, 3, 64), DataError);
  EXPECT_THROW(load_images(dir.path / "missing", 3, 64), DataError);
}

TEST(Imaging, UndecodableFileSkippedWithRemaining) {
  testutil::TempDir dir("imaging_bad");
  save_image_png(dir.path / "a_good.png", testutil::synth_scene(3, 64, 1));
  std::ofstream(dir.path / "b_bad.png") << "not a png";
  ImageBatch batch = load_images(dir.path, 3, 64);
  EXPECT_EQ(batch.n(), 1);
}

TEST(Imaging, PyramidSizes256) {
  ImageBatch img = testutil::synth_scene(3, 256, 2);
  ImagePyramid pyr = build_pyramid(img, 3);
  ASSERT_EQ(pyr.levels.size(), 3u);
  EXPECT_EQ(pyr.levels[0].h(), 64);
  EXPECT_EQ(pyr.levels[1].h(), 128);
  EXPECT_EQ(pyr.levels[2].h(), 256);
  // finest level is the untouched input
  for (std::size_t i = 0; i < img.numel(); ++i)
    EXPECT_EQ(pyr.levels[2].data()[i], img.data()[i]);
}

TEST(Imaging, PyramidSingleLevelIdentity) {
  ImageBatch img = testutil::synth_scene(3, 64, 3);
  ImagePyramid pyr = build_pyramid(img, 1);
  ASSERT_EQ(pyr.levels.size(), 1u);
  for (std::size_t i = 0; i < img.numel(); ++i) EXPECT_EQ(pyr.levels[0].data()[i], img.data()[i]);
}

TEST(Imaging, PyramidPreservesConstants) {
  ImageBatch img(2, 3, 64, 64, 0.25f);
  ImagePyramid pyr = build_pyramid(img, 3);
  for (const auto& level : pyr.levels)
    for (std::size_t i = 0; i < level.numel(); ++i) EXPECT_NEAR(level.data()[i], 0.25f, 1e-6f);
}

TEST(Imaging, PyramidDivisibilityError) {
  ImageBatch img(1, 3, 66, 66, 0.0f);
  try {
    build_pyramid(img, 3);
    FAIL() << "expected UsageError";
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("divisible"), std::string::npos);
  }
}

TEST(Imaging, PyramidIsDeterministic) {
  ImageBatch img = testutil::synth_scene(3, 128, 4);
  ImagePyramid a = build_pyramid(img, 3);
  ImagePyramid b = build_pyramid(img, 3);
  for (std::size_t l = 0; l < a.levels.size(); ++l)
    for (std::size_t i = 0; i < a.levels[l].numel(); ++i)
      EXPECT_EQ(a.levels[l].data()[i], b.levels[l].data()[i]);
}

TEST(Imaging, PyramidThenUpsampleMatchesNextLevelShape) {
  ImageBatch img = testutil::synth_scene(3, 128, 5);
  ImagePyramid pyr = build_pyramid(img, 3);
  ImageBatch up = resize(pyr.levels[0], 2.0);
  EXPECT_EQ(up.h(), pyr.levels[1].h());
  EXPECT_EQ(up.w(), pyr.levels[1].w());
  EXPECT_EQ(up.c(), pyr.levels[1].c());
}

TEST(Imaging, ResizeContracts) {
  ImageBatch img = testutil::random_tensor<float>(1, 3, 64, 64, *[] {
    static Rng rng(9);
    return &rng;
  }());
  ImageBatch up = resize(img, 2.0);
  EXPECT_EQ(up.h(), 128);
  EXPECT_EQ(up.w(), 128);
  EXPECT_THROW(resize(img, 3.0), UsageError);
  ImageBatch odd(1, 3, 65, 65, 0.0f);
  EXPECT_THROW(resize(odd, 0.5), UsageError);
}

TEST(Imaging, ResizePreservesConstants) {
  ImageBatch img(1, 3, 32, 32, -0.4f);
  ImageBatch up = resize(img, 2.0);
  for (std::size_t i = 0; i < up.numel(); ++i) EXPECT_NEAR(up.data()[i], -0.4f, 1e-6f);
}

TEST(Imaging, DownUpRoundTripOnSmoothImage) {
  // Bandlimited content survives up-then-down within 1e-2 per pixel.
  const int size = 64;
  ImageBatch img(1, 1, size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      img(0, 0, y, x) = 0.5f * std::sin(2.0f * 3.14159f * x / size) *
                        std::cos(2.0f * 3.14159f * y / size);
  ImageBatch rt = resize(resize(img, 2.0), 0.5);
  for (std::size_t i = 0; i < img.numel(); ++i)
    EXPECT_NEAR(rt.data()[i], img.data()[i], 1e-2f);
}

TEST(Imaging, SavedPngReloadsExactly) {
  testutil::TempDir dir("imaging_roundtrip");
  ImageBatch img = testutil::synth_scene(3, 64, 6);
  // quantize: save then reload must reproduce the quantized values exactly
  save_image_png(dir.path / "x.png", img);
  ImageBatch back = load_images(dir.path, 3, 64);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x)
        EXPECT_EQ(denormalize_to_u8(back(0, c, y, x)), denormalize_to_u8(img(0, c, y, x)));
}
