#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "factorlens/extract.hpp"
#include "factorlens/stimuli.hpp"

using namespace factorlens;
namespace st = factorlens::stimuli;

// Golden values from an independent Python implementation of SplitMix64
// and the Box-Muller conversion described in extract.hpp.
TEST(SplitMix64, ReferenceStream) {
  SplitMix64 rng(0);
  EXPECT_EQ(rng.next(), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(rng.next(), 0x6e789e6aa1b965f4ULL);
  EXPECT_EQ(rng.next(), 0x06c45d188009454fULL);
  EXPECT_EQ(SplitMix64(42).next(), 0xbdd732262feb6e95ULL);
}

TEST(RandConv, GoldenWeightsSeed42) {
  const RandConvExtractor ex(42);
  const double golden[5] = {0.03420550850712836, 0.05383223990063401, -0.07356153507492873, 0.10943538780865064,
                            0.14265443355845356};
  ASSERT_EQ(ex.weights().size(), 32u * 147u);
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(ex.weights()[i], golden[i], 1e-16) << "weight " << i;
}

TEST(RandConv, WeightStatistics) {
  const RandConvExtractor ex(7);
  double sum = 0, sq = 0;
  for (double w : ex.weights()) {
    sum += w;
    sq += w * w;
  }
  const double n = static_cast<double>(ex.weights().size());
  EXPECT_NEAR(sum / n, 0.0, 4.0 * std::sqrt(1.0 / 147.0 / n));
  EXPECT_NEAR(sq / n, 1.0 / 147.0, 0.1 / 147.0);
}

TEST(RandConv, ShapeAndIds) {
  EXPECT_EQ(RandConvExtractor::kOut, 29u);
  EXPECT_EQ(RandConvExtractor(1).dim(), 288u);
  EXPECT_EQ(RandConvExtractor(1, false).dim(), 32u * 29u * 29u);
  EXPECT_EQ(RandConvExtractor(5).id(), "randconv:5");
  constexpr auto b = RandConvExtractor::cell_bounds();
  EXPECT_EQ(b, (std::array<std::size_t, 4>{0, 9, 19, 29}));
}

TEST(RandConv, ConstantImageGivesSpatiallyConstantResponse) {
  const RandConvExtractor ex(42);
  const ImageRGB img(50, 40, Rgb{200, 30, 90});
  const auto f = ex.evaluate(img);
  for (std::size_t filter = 0; filter < 32; ++filter)
    for (std::size_t cell = 1; cell < 9; ++cell) EXPECT_EQ(f[filter * 9 + cell], f[filter * 9]);
  bool any_positive = false;
  for (double v : f) any_positive |= v > 0;
  EXPECT_TRUE(any_positive);
}

TEST(RandConv, Deterministic) {
  const auto c = st::gen_rectangles({});
  const auto a = RandConvExtractor(42).evaluate(c.images[100]);
  const auto b = make_extractor("randconv:42")->evaluate(c.images[100]);
  ASSERT_EQ(a.size(), b.size());
  EXPECT_EQ(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)), 0);
  EXPECT_NE(RandConvExtractor(43).evaluate(c.images[100]), a);
}

TEST(RandConv, PooledIsCellMaximumOfResponses) {
  // 29 response rows split into cells [0,9), [9,19), [19,29).
  const std::size_t edges[4] = {0, 9, 19, 29};
  ImageRGB img(227, 227, Rgb{255, 255, 255});
  img.fill_rect(40, 70, 150, 120, {0, 0, 0});
  img.fill_rect(160, 10, 200, 220, {200, 30, 90});
  const RandConvExtractor pooled(42), raw(42, false);
  const auto resp = pooled.responses(img);
  EXPECT_EQ(raw.evaluate(img), resp);
  const auto out = pooled.evaluate(img);
  ASSERT_EQ(out.size(), 288u);
  for (std::size_t f = 0; f < 32; ++f)
    for (std::size_t cy = 0; cy < 3; ++cy)
      for (std::size_t cx = 0; cx < 3; ++cx) {
        double m = -1.0;
        for (std::size_t y = edges[cy]; y < edges[cy + 1]; ++y)
          for (std::size_t x = edges[cx]; x < edges[cx + 1]; ++x) m = std::max(m, resp[f * 841 + y * 29 + x]);
        EXPECT_EQ(out[f * 9 + cy * 3 + cx], m);
      }
  for (double v : resp) EXPECT_GE(v, 0.0);
}

TEST(PixelExtractor, BlackWhiteAndIdentity) {
  const PixelExtractor px(4);
  EXPECT_EQ(px.dim(), 48u);
  EXPECT_EQ(px.evaluate(ImageRGB(8, 8, Rgb{0, 0, 0})), std::vector<double>(48, 0.0));
  EXPECT_EQ(px.evaluate(ImageRGB(8, 8, Rgb{255, 255, 255})), std::vector<double>(48, 1.0));

  // Checkerboard of 2x2 blocks at matching size reproduces every pixel.
  ImageRGB board(8, 8);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) board.set(x, y, ((x / 2 + y / 2) % 2) ? Rgb{255, 0, 51} : Rgb{0, 102, 255});
  const auto f = PixelExtractor(8).evaluate(board);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x)
      for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(f[(y * 8 + x) * 3 + c], board.at(x, y, c) / 255.0);
  EXPECT_THROW(PixelExtractor(1), ParamError);
}

TEST(MakeExtractor, ParsesIds) {
  EXPECT_EQ(make_extractor("pixels:4")->dim(), 48u);
  EXPECT_EQ(make_extractor("randconv:42")->seed(), std::optional<std::uint64_t>(42));
  EXPECT_EQ(make_extractor("randconv-unpooled:1")->dim(), 26912u);
  EXPECT_THROW(make_extractor("pixels"), ParamError);
  EXPECT_THROW(make_extractor("pixels:x"), ParamError);
  EXPECT_THROW(make_extractor("cnn:1"), ParamError);
  EXPECT_THROW(make_extractor("pixels:1"), ParamError);
}

TEST(ExtractSet, ShapesAndManifest) {
  const auto cube = st::gen_color_grid(2, {8, 8});
  const auto set = extract_set(cube.images, cube.grid, PixelExtractor(4), cube.recipe);
  EXPECT_EQ(set.rows(), 8u);
  EXPECT_EQ(set.dim(), 48u);
  EXPECT_EQ(set.layer(), "pixels:4");
  EXPECT_EQ(set.manifest().extractor, "pixels:4");
  EXPECT_EQ(set.manifest().recipe["kind"], "color_grid");
  EXPECT_EQ(set.row(7)[0], 1.0f);
  EXPECT_THROW(extract_set({}, cube.grid, PixelExtractor(4)), ShapeError);
  std::vector<ImageRGB> fewer(cube.images.begin(), cube.images.end() - 1);
  EXPECT_THROW(extract_set(fewer, cube.grid, PixelExtractor(4)), ShapeError);
}

TEST(ExtractSet, RectangleCorpusThroughRandConv) {
  const auto c = st::gen_rectangles({});
  const RandConvExtractor ex(42);
  const auto set = extract_set(c.images, c.grid, ex);
  EXPECT_EQ(set.rows(), 432u);
  EXPECT_EQ(set.dim(), 288u);
  EXPECT_EQ(set.manifest().seed, std::optional<std::uint64_t>(42));
  for (float v : set.data()) ASSERT_TRUE(std::isfinite(v));
  // Row i is image i.
  const auto f = ex.evaluate(c.images[301]);
  for (std::size_t j = 0; j < 288; ++j) EXPECT_EQ(set.row(301)[j], static_cast<float>(f[j]));
}

TEST(ExtractSet, ThreadCountDoesNotChangeOutput) {
  const auto c = st::gen_color_grid(3, {32, 32});
  const RandConvExtractor ex(9);
  const auto before = num_threads();
  set_num_threads(1);
  const auto a = extract_set(c.images, c.grid, ex);
  set_num_threads(4);
  const auto b = extract_set(c.images, c.grid, ex);
  set_num_threads(before);
  EXPECT_EQ(std::memcmp(a.data().data(), b.data().data(), a.data().size_bytes()), 0);
}
