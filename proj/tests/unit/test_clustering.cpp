#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "pnc/clustering.hpp"

using namespace pnc;
using pnc_test::brute_density_peaks;
using pnc_test::make_blobs;

TEST(HeatPoints, EmptyForZeroMap) {
  EXPECT_TRUE(heatmap_to_points(Heatmap::covering(Grid2D(4, 4), 8, 8)).empty());
}

TEST(HeatPoints, SingleCellAtItsCenter) {
  Grid2D g(4, 4);
  g(1, 2) = 0.5f;
  const auto pts = heatmap_to_points(Heatmap::covering(g, 8, 8));
  ASSERT_EQ(pts.size(), 1u);
  EXPECT_EQ(pts[0], (WeightedPoint{5.0, 3.0, 0.5}));
}

TEST(HeatPoints, CountMatchesScan) {
  Rng rng(3);
  Grid2D g(13, 9);
  for (auto& v : g.values) v = rng.uniform() < 0.4 ? static_cast<float>(rng.uniform()) : 0.0f;
  for (double thr : {0.0, 0.25, 0.5}) {
    std::size_t n = 0;
    for (float v : g.values) n += v > thr;
    EXPECT_EQ(heatmap_to_points(Heatmap::covering(g, 9, 13), thr).size(), n);
  }
}

TEST(DensityPeaks, ThreeBlobs) {
  const auto b = make_blobs(3, 30, 1.0, 10.0, 42);
  const auto r = density_peaks(b.points, DensityPeaksParams{1.0, 0.1, 5.0});
  EXPECT_EQ(r.count(), 3u);
  EXPECT_TRUE(pnc_test::blob_pure(r.assignment, b.blob));
}

TEST(DensityPeaks, SinglePoint) {
  const auto r = density_peaks({{3, 4, 1}}, 1.0, 0.0, 0.0);
  EXPECT_EQ(r.count(), 1u);
  EXPECT_EQ(r.assignment, std::vector<std::size_t>{0});
  EXPECT_EQ(r.nearest_higher[0], -1);
}

TEST(DensityPeaks, CoincidentPointsTieToLowerIndex) {
  const auto r = density_peaks({{1, 1, 1}, {1, 1, 1}}, 1.0, 0.0, 0.0);
  EXPECT_EQ(r.count(), 1u);
  EXPECT_EQ(r.centers, std::vector<std::size_t>{0});
  EXPECT_EQ(r.nearest_higher[1], 0);
  EXPECT_EQ(r.assignment[0], r.assignment[1]);
}

TEST(DensityPeaks, BitExactAgainstBruteForce) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    Rng rng(seed);
    const auto n = 1 + rng.index(200);
    std::vector<WeightedPoint> pts;
    for (std::size_t i = 0; i < n; ++i) {
      // a coarse lattice produces exact distance and density ties
      const double x = seed % 2 ? std::floor(rng.uniform(0, 10)) : rng.uniform(0, 60);
      const double y = seed % 2 ? std::floor(rng.uniform(0, 10)) : rng.uniform(0, 60);
      pts.push_back({x, y, seed % 3 ? 1.0 : rng.uniform(0.1, 1)});
    }
    const double d_c = 0.5 + rng.uniform(0, 3);
    const double rho_min = rng.uniform(0, 2);
    const double delta_min = rng.uniform(0, 8);
    const auto got = density_peaks(pts, d_c, rho_min, delta_min);
    const auto want = brute_density_peaks(pts, d_c, rho_min, delta_min);
    ASSERT_EQ(got.rho, want.rho) << seed;
    ASSERT_EQ(got.delta, want.delta) << seed;
    ASSERT_EQ(got.nearest_higher, want.nearest_higher) << seed;
    ASSERT_EQ(got.centers, want.centers) << seed;
    ASSERT_EQ(got.assignment, want.assignment) << seed;
  }
}

TEST(DensityPeaks, FarPointsDoNotChangeDensity) {
  // the kernel cutoff must not change any value
  std::vector<WeightedPoint> pts{{0, 0, 1}, {0.5, 0, 1}, {27.6, 0, 1}, {1000, 1000, 1}};
  const auto got = density_peaks(pts, 1.0, 0, 0);
  EXPECT_EQ(got.rho, brute_density_peaks(pts, 1.0, 0, 0).rho);
}

TEST(DensityPeaks, RejectsBadInput) {
  EXPECT_THROW(density_peaks({}, 1.0, 0, 0), std::invalid_argument);
  EXPECT_THROW(density_peaks({{0, 0, 1}}, 0.0, 0, 0), std::invalid_argument);
}

TEST(DensityPeaks, DefaultParams) {
  const auto p = default_density_params(300, 400);
  EXPECT_DOUBLE_EQ(p.d_c, 10);
  EXPECT_DOUBLE_EQ(p.delta_min, 75);
  EXPECT_DOUBLE_EQ(p.rho_min_fraction, 0.1);
}

TEST(ClusterBoxes, Cases) {
  const std::vector<WeightedPoint> one{{2, 3, 1}};
  EXPECT_EQ(cluster_pointers(density_peaks(one, 1, 0, 0), one), (std::vector<BBox>{{2, 3, 2, 3}}));
  const std::vector<WeightedPoint> two{{0, 0, 1}, {4, 2, 1}};
  EXPECT_EQ(cluster_pointers(density_peaks(two, 1, 0, 100), two), (std::vector<BBox>{{0, 0, 4, 2}}));
}

TEST(ClusterBoxes, MatchFullScan) {
  const auto b = make_blobs(4, 25, 1.5, 12.0, 7);
  const auto r = density_peaks(b.points, DensityPeaksParams{1.0, 0.1, 5.0});
  const auto boxes = cluster_pointers(r, b.points);
  ASSERT_EQ(boxes.size(), r.count());
  for (std::size_t c = 0; c < boxes.size(); ++c) {
    double x0 = 1e18, y0 = 1e18, x1 = -1e18, y1 = -1e18;
    for (std::size_t i = 0; i < b.points.size(); ++i) {
      if (r.assignment[i] != c) continue;
      x0 = std::min(x0, b.points[i].x);
      y0 = std::min(y0, b.points[i].y);
      x1 = std::max(x1, b.points[i].x);
      y1 = std::max(y1, b.points[i].y);
    }
    EXPECT_EQ(boxes[c], (BBox{x0, y0, x1, y1}));
  }
}

TEST(Gmm, SingleComponentClosedForm) {
  const auto pts = pnc_test::random_cloud(80, 5);
  long double w = 0, sx = 0, sy = 0;
  for (const auto& p : pts) {
    w += p.w;
    sx += p.w * p.x;
    sy += p.w * p.y;
  }
  const double mx = static_cast<double>(sx / w), my = static_cast<double>(sy / w);
  long double vx = 0, vy = 0;
  for (const auto& p : pts) {
    vx += p.w * (p.x - mx) * (p.x - mx);
    vy += p.w * (p.y - my) * (p.y - my);
  }
  const auto m = gmm_fit(pts, 1, 3);
  ASSERT_EQ(m.components.size(), 1u);
  EXPECT_NEAR(m.components[0].mean_x, mx, 1e-9);
  EXPECT_NEAR(m.components[0].mean_y, my, 1e-9);
  EXPECT_NEAR(m.components[0].var_x, static_cast<double>(vx / w), 1e-9);
  EXPECT_NEAR(m.components[0].var_y, static_cast<double>(vy / w), 1e-9);
  EXPECT_DOUBLE_EQ(m.components[0].prior, 1.0);
}

TEST(Gmm, VarianceFloorOnDegenerateData) {
  const std::vector<WeightedPoint> pts{{1, 1, 1}, {1, 1, 2}, {1, 1, 0.5}};
  const auto m = gmm_fit(pts, 1, 0);
  EXPECT_DOUBLE_EQ(m.components[0].var_x, GmmOptions{}.var_floor);
  EXPECT_DOUBLE_EQ(m.components[0].mean_x, 1.0);
}

TEST(Gmm, TwoBlobs) {
  std::vector<WeightedPoint> pts;
  Rng rng(2);
  for (int i = 0; i < 50; ++i) pts.push_back({rng.normal(), rng.normal(), 1});
  for (int i = 0; i < 50; ++i) pts.push_back({10 + rng.normal(), 10 + rng.normal(), 1});
  double ax = 0, ay = 0, bx = 0, by = 0;
  for (int i = 0; i < 50; ++i) {
    ax += pts[i].x / 50;
    ay += pts[i].y / 50;
    bx += pts[50 + i].x / 50;
    by += pts[50 + i].y / 50;
  }
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto comps = gmm_fit(pts, 2, seed).components;
    if (comps[0].mean_x > comps[1].mean_x) std::swap(comps[0], comps[1]);
    EXPECT_LT(std::hypot(comps[0].mean_x - ax, comps[0].mean_y - ay), 0.5);
    EXPECT_LT(std::hypot(comps[1].mean_x - bx, comps[1].mean_y - by), 0.5);
  }
}

TEST(Gmm, TooFewPoints) {
  EXPECT_THROW(gmm_fit({{0, 0, 1}, {1, 1, 1}}, 3, 0), std::invalid_argument);
  EXPECT_THROW(gmm_fit({{0, 0, 1}, {1, 1, 0}}, 2, 0), std::invalid_argument);  // zero weight does not count
  EXPECT_THROW(gmm_fit({{0, 0, -1}}, 1, 0), std::invalid_argument);
}

TEST(Gmm, LikelihoodNeverDecreases) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto pts = pnc_test::random_cloud(60 + seed, seed);
    const auto m = gmm_fit(pts, 1 + static_cast<int>(seed % 4), seed);
    for (std::size_t i = 1; i < m.log_likelihood.size(); ++i) {
      EXPECT_GE(m.log_likelihood[i], m.log_likelihood[i - 1] - 1e-9) << seed << " step " << i;
    }
    EXPECT_NEAR(m.log_likelihood.back(), gmm_log_likelihood(m.components, pts), 1e-9);
  }
}

TEST(Gmm, SameSeedSameModel) {
  const auto pts = pnc_test::random_cloud(100, 4);
  EXPECT_EQ(gmm_fit(pts, 3, 8).components, gmm_fit(pts, 3, 8).components);
}

TEST(Gmm, EllipsePointers) {
  GmmModel m;
  m.components = {{1, 2, 4, 9, 0.5}, {0, 0, 2.25, 2.25, 0.5}};
  const auto e = gmm_pointers(m);
  ASSERT_EQ(e.size(), 2u);
  EXPECT_EQ(e[0], (Ellipse{1, 2, 2, 3}));
  EXPECT_DOUBLE_EQ(e[1].sx, e[1].sy);
}
