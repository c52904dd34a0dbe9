#include <gtest/gtest.h>

#include <cmath>

#include "pnc/rng.hpp"
#include "pnc/tensor.hpp"

using namespace pnc;

namespace {

Grid2D grid(std::size_t r, std::size_t c, std::vector<float> v) { return Grid2D(r, c, std::move(v)); }

Tensor random_tensor(std::vector<std::size_t> shape, std::uint64_t seed) {
  Tensor t(std::move(shape));
  Rng rng(seed);
  for (auto& v : t.storage()) v = static_cast<float>(rng.uniform(-1, 1));
  return t;
}

// closed-form bilinear sample of a cell-centred grid at image pixel (px, py)
double bilinear_ref(const Heatmap& hm, double px, double py) {
  const double gx = (px + 0.5) / hm.scale_x - 0.5;
  const double gy = (py + 0.5) / hm.scale_y - 0.5;
  const auto clampi = [](long v, long hi) { return std::max(0L, std::min(v, hi)); };
  const long x0 = static_cast<long>(std::floor(gx));
  const long y0 = static_cast<long>(std::floor(gy));
  const double fx = gx - x0;
  const double fy = gy - y0;
  const long cmax = static_cast<long>(hm.grid.cols) - 1;
  const long rmax = static_cast<long>(hm.grid.rows) - 1;
  const auto at = [&](long y, long x) {
    return static_cast<double>(hm.grid(static_cast<std::size_t>(clampi(y, rmax)), static_cast<std::size_t>(clampi(x, cmax))));
  };
  return (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) + fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
}

}  // namespace

TEST(Tensor, ShapeMismatchThrows) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<float>(5)), std::invalid_argument);
  Tensor t({2, 3, 4});
  EXPECT_EQ(t.size(), 24u);
  t.at(1, 2, 3) = 7;
  EXPECT_EQ(t[23], 7);
  EXPECT_EQ(t.slice(1).size(), 12u);
}

TEST(Tensor, AllFinite) {
  std::vector<float> v{1, 2, 3};
  EXPECT_TRUE(all_finite(std::span<const float>(v)));
  v[1] = NAN;
  EXPECT_FALSE(all_finite(std::span<const float>(v)));
  std::vector<double> d{1, INFINITY};
  EXPECT_FALSE(all_finite(std::span<const double>(d)));
}

TEST(ChannelStack, SumsElementwise) {
  const std::vector<Grid2D> maps{grid(2, 2, {1, 0, 0, 0}), grid(2, 2, {0, 2, 0, 0})};
  EXPECT_EQ(channel_stack(maps), grid(2, 2, {1, 2, 0, 0}));
}

TEST(ChannelStack, SingleMapIsIdentity) {
  const std::vector<Grid2D> maps{grid(2, 3, {1, 2, 3, 4, 5, 6})};
  EXPECT_EQ(channel_stack(maps), maps[0]);
}

TEST(ChannelStack, SeventyMapsGiveOneHeatmap) {
  std::vector<Heatmap> maps;
  for (int i = 0; i < 70; ++i) maps.push_back(Heatmap::covering(Grid2D(3, 3, 1.0f), 12, 12));
  const auto hm = channel_stack(maps);
  EXPECT_EQ(hm.grid.rows, 3u);
  for (float v : hm.grid.values) EXPECT_FLOAT_EQ(v, 70.0f);
  EXPECT_EQ(hm.image_width, 12);
}

TEST(ChannelStack, MismatchedShapesThrow) {
  const std::vector<Grid2D> maps{Grid2D(2, 2), Grid2D(2, 3)};
  EXPECT_THROW(channel_stack(maps), std::invalid_argument);
}

TEST(Normalize, AllClipped) {
  const auto hm = normalize_subtract_scaled_mean(Heatmap::covering(grid(2, 2, {1, 1, 1, 1}), 2, 2), 2.0);
  EXPECT_EQ(hm.grid, grid(2, 2, {0, 0, 0, 0}));
}

TEST(Normalize, SinglePeakSurvives) {
  const auto hm = normalize_subtract_scaled_mean(Heatmap::covering(grid(2, 2, {0, 0, 0, 4}), 2, 2), 2.0);
  EXPECT_EQ(hm.grid, grid(2, 2, {0, 0, 0, 2}));
}

TEST(Normalize, ZeroStaysZero) {
  const auto hm = normalize_subtract_scaled_mean(Heatmap::covering(Grid2D(3, 4), 4, 3), 2.0);
  for (float v : hm.grid.values) EXPECT_EQ(v, 0.0f);
}

TEST(Normalize, OutputNonNegativeAndBounded) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Grid2D g(6, 7);
    for (auto& v : g.values) v = static_cast<float>(rng.uniform(0, 3));
    const auto out = normalize_subtract_scaled_mean(Heatmap::covering(g, 7, 6), 1.0 + trial % 3);
    for (std::size_t i = 0; i < g.values.size(); ++i) {
      EXPECT_GE(out.grid.values[i], 0.0f);
      EXPECT_LE(out.grid.values[i], g.values[i]);
    }
  }
}

TEST(GlobalPool, Max) {
  Tensor t({1, 2, 2}, std::vector<float>{1, 2, 3, 0});
  EXPECT_EQ(global_max_pool(t), std::vector<float>{3});
  EXPECT_EQ(global_max_pool(Tensor({1, 2, 2})), std::vector<float>{0});
  EXPECT_EQ(global_max_pool(Tensor({512, 1, 1})).size(), 512u);
}

TEST(GlobalPool, Avg) {
  EXPECT_EQ(global_avg_pool(Tensor({1, 2, 2}, std::vector<float>{1, 3, 1, 3})), std::vector<float>{2});
  EXPECT_FLOAT_EQ(global_avg_pool(Tensor({1, 3, 3}, 0.25f))[0], 0.25f);
}

TEST(GlobalPool, AvgMatchesNaiveSum) {
  const auto t = random_tensor({5, 9, 11}, 3);
  const auto got = global_avg_pool(t);
  for (std::size_t c = 0; c < 5; ++c) {
    long double s = 0;
    for (std::size_t y = 0; y < 9; ++y)
      for (std::size_t x = 0; x < 11; ++x) s += t.at(c, y, x);
    EXPECT_NEAR(got[c], static_cast<double>(s / 99), 1e-6);
  }
}

TEST(L2Normalize, Cases) {
  const std::vector<float> v{3, 4};
  const auto n = l2_normalize(v);
  EXPECT_FLOAT_EQ(n[0], 0.6f);
  EXPECT_FLOAT_EQ(n[1], 0.8f);
  const std::vector<float> z{0, 0};
  EXPECT_EQ(l2_normalize(z), z);
  const std::vector<float> u{0, 1, 0};
  EXPECT_EQ(l2_normalize(u), u);
}

TEST(Upscale, SameSizeIsIdentity) {
  const auto hm = Heatmap::covering(grid(2, 2, {1, 2, 3, 4}), 2, 2);
  EXPECT_EQ(upscale_heatmap(hm, 2, 2).grid, hm.grid);
}

TEST(Upscale, ConstantStaysConstant) {
  const auto hm = Heatmap::covering(Grid2D(3, 5, 0.7f), 40, 30);
  for (auto [w, h] : {std::pair{40, 30}, std::pair{7, 9}, std::pair{100, 3}}) {
    const auto up = upscale_heatmap(hm, w, h);
    ASSERT_EQ(up.grid.values.size(), static_cast<std::size_t>(w * h));
    for (float v : up.grid.values) EXPECT_NEAR(v, 0.7f, 1e-6);
  }
}

TEST(Upscale, MatchesBilinearOracle) {
  Grid2D g(7, 7);
  Rng rng(11);
  for (auto& v : g.values) v = static_cast<float>(rng.uniform());
  const auto hm = Heatmap::covering(g, 84, 84);
  const auto up = upscale_heatmap(hm, 84, 84);
  for (int y = 0; y < 84; ++y) {
    for (int x = 0; x < 84; ++x) {
      ASSERT_NEAR(up.grid(static_cast<std::size_t>(y), static_cast<std::size_t>(x)), bilinear_ref(hm, x, y), 1e-5)
          << x << "," << y;
    }
  }
}

TEST(Heatmap, StridedGeometry) {
  const auto hm = Heatmap::strided(Grid2D(10, 10), 84, 84, 8);
  EXPECT_DOUBLE_EQ(hm.scale_x, 8);
  EXPECT_DOUBLE_EQ(hm.scale_y, 8);
  const auto cov = Heatmap::covering(Grid2D(3, 4), 8, 6);
  EXPECT_DOUBLE_EQ(cov.scale_x, 2);
  EXPECT_DOUBLE_EQ(cov.scale_y, 2);
}

TEST(BBox, UnionAndArea) {
  const BBox a{0, 0, 2, 2};
  const BBox b{1, -1, 3, 1};
  EXPECT_EQ(box_union(a, b), (BBox{0, -1, 3, 2}));
  EXPECT_DOUBLE_EQ(a.area(), 4);
  EXPECT_DOUBLE_EQ(b.center_x(), 2);
}

TEST(ChannelGrid, ExtractsChannel) {
  const auto t = random_tensor({3, 4, 5}, 9);
  const auto g = channel_grid(t, 2);
  ASSERT_EQ(g.rows, 4u);
  ASSERT_EQ(g.cols, 5u);
  EXPECT_EQ(g(3, 4), t.at(2, 3, 4));
}
