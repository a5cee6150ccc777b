#include <gtest/gtest.h>

#include <cmath>

#include "hieratt/encoder.hpp"
#include "hieratt/error.hpp"
#include "hieratt/ops.hpp"
#include "hieratt/scene.hpp"
#include "test_util.hpp"

using namespace hieratt;
using hieratt::testing::random_tensor;

namespace {

Image random_image(std::uint64_t seed) { return Image(random_tensor({3, 64, 64}, seed, 0.0, 1.0)); }

struct Enc {
  ParamStore store;
  SplitMix64 rng{3};
  VisualEncoder enc{store, "enc", EncoderConfig{}, true, rng};
};

}  // namespace

TEST(Image, ValuesAreClamped) {
  Image img(random_tensor({3, 4, 4}, 1, -2.0, 2.0));
  for (double v : img.pixels().data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  img.set(0, 0, 0, 7.0);
  EXPECT_EQ(img.at(0, 0, 0), 1.0);
}

TEST(Encoder, DefaultGridShape) {
  Enc e;
  Tape tape(false);
  EXPECT_EQ(e.enc.encode_image(tape, random_image(1)).shape(), (Shape{64, 16}));
  EXPECT_EQ(EncoderConfig{}.grid_side(), 4u);
}

TEST(Encoder, ZeroImageZeroBiasGivesZeroMap) {
  Enc e;
  Tape tape(false);
  for (double v : e.enc.encode_image(tape, Image(64, 64)).value().data()) EXPECT_EQ(v, 0.0);
}

TEST(Encoder, DeterministicForFixedSeed) {
  Enc a, b;
  Tape ta(false), tb(false);
  EXPECT_EQ(a.enc.encode_image(ta, random_image(5)).value(), b.enc.encode_image(tb, random_image(5)).value());
}

TEST(Encoder, WrongCanvasIsDimensionError) {
  Enc e;
  Tape tape(false);
  EXPECT_THROW(e.enc.encode_image(tape, Image(32, 32)), DimensionError);
}

TEST(Encoder, FullCanvasRegionEqualsPooledGrid) {
  Enc e;
  const Image img = random_image(2);
  Tape tape(false);
  const Tensor direct = e.enc.project_grid(tape, e.enc.encode_image(tape, img)).value();
  const Tensor region = e.enc.encode_region(tape, img, Box{0, 0, 64, 64}).value();
  EXPECT_EQ(direct, region);
  EXPECT_EQ(region.shape(), (Shape{1, 64}));
}

TEST(Encoder, DegenerateBoxesAreRegionErrors) {
  Enc e;
  Tape tape(false);
  const Image img = random_image(2);
  EXPECT_THROW(e.enc.encode_region(tape, img, Box{10, 10, 2, 2}), RegionError);
  EXPECT_THROW(e.enc.encode_region(tape, img, Box{60, 10, 8, 8}), RegionError);
  EXPECT_THROW(e.enc.encode_region(tape, img, Box{-1, 0, 8, 8}), RegionError);
  EXPECT_NO_THROW(e.enc.encode_region(tape, img, Box{10, 10, 4, 4}));
}

TEST(Encoder, IdenticalTilesGiveIdenticalRegionVectors) {
  const Image tile = Image(random_tensor({3, 32, 32}, 8, 0.0, 1.0));
  Image img(64, 64);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 64; ++y)
      for (std::size_t x = 0; x < 64; ++x) img.set(c, y, x, tile.at(c, y % 32, x % 32));
  Enc e;
  Tape tape(false);
  const Tensor a = e.enc.encode_region(tape, img, Box{0, 0, 32, 32}).value();
  const Tensor b = e.enc.encode_region(tape, img, Box{32, 32, 32, 32}).value();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-9);
}

TEST(Encoder, OutputsFiniteOnExtremeImages) {
  Enc e;
  for (double fill : {0.0, 1.0}) {
    Tape tape(false);
    const Image img(Tensor(Shape{3, 64, 64}, fill));
    for (double v : e.enc.encode_image(tape, img).value().data()) EXPECT_TRUE(std::isfinite(v));
  }
}

TEST(Encoder, EveryParameterGetsGradientOnABatch) {
  Enc e;
  e.store.zero_grad();
  for (const auto& s : generate_scenes(40, 8)) {
    Tape tape(true);
    Var grid = e.enc.encode_image(tape, s.image);
    Var region = e.enc.encode_regions(tape, s.image, s.boxes());
    Var w = tape.constant(random_tensor(grid.shape(), 3));
    tape.backward(add(sum(mul(grid, w)), sum(tanh(region))));
    tape.accumulate_param_grads();
  }
  for (const auto& p : e.store) {
    double norm = 0.0;
    for (double g : p->grad.data()) norm += g * g;
    EXPECT_GT(norm, 0.0) << p->name;
  }
}

TEST(CropResize, IdentityOnFullBox) {
  const Image img = random_image(4);
  EXPECT_EQ(crop_resize(img, Box{0, 0, 64, 64}, 64, 64), img);
}
