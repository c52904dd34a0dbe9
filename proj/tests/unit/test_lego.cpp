#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "pnc/error.hpp"
#include "pnc/lego.hpp"
#include "test_paths.hpp"

using namespace pnc;
using namespace pnc::lego;

namespace {

const DigitStore& mnist() {
  static const DigitStore store = DigitStore::load(pnc_test::data_dir() / "mnist5k");
  return store;
}

// n_per_digit synthetic exemplars per digit: a filled square whose size encodes the index
DigitStore tiny_store(int n_per_digit) {
  const auto n = static_cast<std::size_t>(10 * n_per_digit);
  ByteTensor images({n, 28, 28});
  ByteTensor labels({n});
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = static_cast<std::uint8_t>(i % 10);
    const std::size_t half = 4 + (i / 10) % 8;
    for (std::size_t y = 14 - half; y < 14 + half; ++y)
      for (std::size_t x = 14 - half; x < 14 + half; ++x) images[(i * 28 + y) * 28 + x] = 200;
  }
  return DigitStore::from_tensors(images, labels);
}

double ink_min_off_object(const Grid2D& g, const std::vector<BBox>& boxes) {
  double m = 1e9;
  for (std::size_t r = 0; r < g.rows; ++r) {
    for (std::size_t c = 0; c < g.cols; ++c) {
      bool inside = false;
      for (const auto& b : boxes) inside |= c + 0.5 > b.x_min && c + 0.5 < b.x_max && r + 0.5 > b.y_min && r + 0.5 < b.y_max;
      if (!inside) m = std::min(m, static_cast<double>(g(r, c)));
    }
  }
  return m;
}

}  // namespace

TEST(Ruleset, HundredThreeDigitClasses) {
  const auto rules = make_ruleset(100, 3, 7);
  ASSERT_EQ(rules.size(), 100u);
  std::set<std::pair<std::vector<int>, Layout>> seen;
  for (std::size_t i = 0; i < rules.size(); ++i) {
    EXPECT_EQ(rules[i].class_id, static_cast<int>(i));
    ASSERT_EQ(rules[i].rule.k(), 3u);
    std::vector<int> digits;
    for (const auto& p : rules[i].rule.parts) digits.push_back(p.digit);
    EXPECT_TRUE(seen.insert({digits, effective_layout(rules[i].rule.layout, 3)}).second);
  }
}

TEST(Ruleset, SingleDigitClass) {
  const auto rules = make_ruleset(1, 1, 0);
  ASSERT_EQ(rules.size(), 1u);
  EXPECT_EQ(rules[0].rule.k(), 1u);
  EXPECT_DOUBLE_EQ(rules[0].rule.nominal_width(), kDigitSize);
}

TEST(Ruleset, DeterministicAndJsonRoundTrip) {
  const auto a = make_ruleset(20, 3, 5);
  EXPECT_EQ(a, make_ruleset(20, 3, 5));
  EXPECT_NE(a, make_ruleset(20, 3, 6));
  EXPECT_EQ(ruleset_from_json(ruleset_to_json(a)), a);
}

TEST(Ruleset, CapacityLimits) {
  EXPECT_EQ(rule_capacity(1), 10u);
  EXPECT_NO_THROW(make_ruleset(10, 1, 0));
  EXPECT_THROW(make_ruleset(11, 1, 0), std::invalid_argument);
  EXPECT_THROW(make_ruleset(0, 3, 0), std::invalid_argument);
  EXPECT_THROW(ruleset_from_json("[{]"), DataError);
}

TEST(Compose, PartBoxesUnionToObjectBox) {
  const auto rules = make_ruleset(10, 3, 1);
  Rng rng(3);
  for (const auto& spec : rules) {
    const auto s = compose_object(spec, mnist(), 1.0, rng);
    ASSERT_EQ(s.part_boxes.size(), 3u);
    BBox u = s.part_boxes[0];
    for (const auto& b : s.part_boxes) u = box_union(u, b);
    EXPECT_EQ(u, s.object_box);
    EXPECT_EQ(s.class_id, spec.class_id);
    EXPECT_GE(s.object_box.x_min, 0);
    EXPECT_LE(s.object_box.x_max, static_cast<double>(s.image.cols));
  }
}

TEST(Compose, SameStreamSameSample) {
  const auto spec = make_ruleset(1, 3, 2)[0];
  Rng a(9), b(9);
  const auto x = compose_object(spec, mnist(), 0.8, a);
  const auto y = compose_object(spec, mnist(), 0.8, b);
  EXPECT_EQ(x.image, y.image);
  EXPECT_EQ(x.part_sources, y.part_sources);
}

TEST(Compose, AllExemplarCombinationsReachable) {
  const auto store = tiny_store(3);  // N = 3 exemplars per digit
  LegoClassSpec spec{0, {Layout::horizontal, {{1, 0, 0}, {2, kPartStep, 0}}}};
  std::set<std::vector<std::uint32_t>> combos;
  Rng rng(1);
  for (int i = 0; i < 500; ++i) combos.insert(compose_object(spec, store, 1.0, rng).part_sources);
  EXPECT_EQ(combos.size(), 9u);  // N^K
}

TEST(Compose, MissingDigitIsDataError) {
  ByteTensor images({1, 28, 28});
  ByteTensor labels({1});
  const auto store = DigitStore::from_tensors(images, labels);  // only zeros
  LegoClassSpec spec{0, {Layout::vertical, {{5, 0, 0}}}};
  Rng rng(0);
  EXPECT_THROW(compose_object(spec, store, 1.0, rng), DataError);
}

TEST(Background, IdentityCases) {
  Grid2D g(20, 20, 0.0f);
  g(5, 5) = 1.0f;
  Rng rng(1);
  EXPECT_EQ(add_background(g, BackgroundKind::none, 0.5, rng), g);
  EXPECT_EQ(add_background(g, BackgroundKind::texture, 0.0, rng), g);
}

TEST(Background, NoiseCoversEveryPixel) {
  int positive = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const auto out = add_background(Grid2D(30, 30, 0.0f), BackgroundKind::texture, 0.3, rng);
    positive += ink_min_off_object(out, {}) > 0;
  }
  EXPECT_EQ(positive, 100);
}

TEST(Background, NeverDarkensInk) {
  Grid2D g(16, 16, 0.0f);
  for (auto& v : g.values) v = 0.9f;
  Rng rng(4);
  const auto out = add_background(g, BackgroundKind::texture, 1.0, rng);
  for (std::size_t i = 0; i < g.values.size(); ++i) EXPECT_GE(out.values[i], g.values[i]);
}

TEST(Classification, SizesBalanceAndDisjointPools) {
  const auto rules = make_ruleset(4, 2, 3);
  ClassificationOptions opt;
  opt.n_train_per_class = 6;
  opt.n_test_per_class = 3;
  opt.canvas = 56;
  opt.seed = 11;
  const auto set = gen_classification_set(rules, mnist(), opt);
  EXPECT_EQ(set.train.labels.size(), 24u);
  EXPECT_EQ(set.test.labels.size(), 12u);
  EXPECT_EQ(set.train.images.shape(), (std::vector<std::size_t>{24, 56, 56}));
  std::map<int, int> hist;
  for (int l : set.train.labels) ++hist[l];
  for (const auto& [l, n] : hist) EXPECT_EQ(n, 6);
  EXPECT_EQ(set.train.annotations.size(), 24u);
  EXPECT_EQ(set.train.annotations[0].image_id, "train_000000");
  EXPECT_EQ(set.test.annotations[0].image_id, "test_000000");

  const auto [tr, te] = mnist().split(0.8);
  for (int d = 0; d < 10; ++d) {
    std::set<std::uint32_t> a;
    for (std::size_t i = 0; i < tr.count(d); ++i) a.insert(tr.exemplar(d, i).source_index);
    for (std::size_t i = 0; i < te.count(d); ++i) EXPECT_FALSE(a.count(te.exemplar(d, i).source_index));
    EXPECT_EQ(tr.count(d) + te.count(d), mnist().count(d));
  }
}

TEST(Classification, SplitFileRoundTrip) {
  const auto rules = make_ruleset(3, 1, 1);
  const auto split = gen_classification_split(rules, mnist(), 2, 28, 0.5, 4, "train");
  const auto dir = pnc_test::scratch_dir("lego_split");
  write_split(dir, "train", split, "{}");
  const auto back = read_split(dir, "train");
  EXPECT_EQ(back.images, split.images);
  EXPECT_EQ(back.labels, split.labels);
  EXPECT_EQ(back.annotations, split.annotations);
}

TEST(Scenes, ZeroInstances) {
  const auto spec = make_ruleset(1, 3, 0)[0];
  Rng rng(2);
  const auto s = gen_scene(spec, 0, ScenePreset::easy, mnist(), {}, rng);
  EXPECT_EQ(s.count(), 0u);
  EXPECT_GT(ink_min_off_object(s.image, {}), 0.0);
}

TEST(Scenes, EasySpacing) {
  const auto rules = make_ruleset(10, 3, 4);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const auto s = gen_scene(rules[seed % 10], 3, ScenePreset::easy, mnist(), {}, rng);
    ASSERT_EQ(s.count(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = i + 1; j < 3; ++j) {
        const auto& a = s.instances[i];
        const auto& b = s.instances[j];
        const double diag =
            std::max(std::hypot(a.width(), a.height()), std::hypot(b.width(), b.height()));
        EXPECT_GE(std::hypot(a.center_x() - b.center_x(), a.center_y() - b.center_y()), 1.5 * diag);
      }
    }
  }
}

TEST(Scenes, BigObjectCoversCanvas) {
  const auto rules = make_ruleset(10, 3, 4);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const auto s = gen_scene(rules[seed % 10], 1, ScenePreset::big_o, mnist(), {}, rng);
    ASSERT_EQ(s.count(), 1u);
    EXPECT_GE(s.instances[0].area(), 0.49 * 168 * 168);
    EXPECT_LE(s.instances[0].x_max, 168);
  }
  Rng rng(0);
  EXPECT_THROW(gen_scene(rules[0], 2, ScenePreset::big_o, mnist(), {}, rng), std::invalid_argument);
}

TEST(Scenes, PackedPresetsRespectGapRange) {
  const auto rules = make_ruleset(10, 3, 4);
  for (auto preset : {ScenePreset::parallel, ScenePreset::close_by}) {
    for (std::uint64_t seed = 0; seed < 15; ++seed) {
      Rng rng(seed);
      const auto s = gen_scene(rules[seed % 10], 3, preset, mnist(), {}, rng);
      ASSERT_EQ(s.count(), 3u);
      double w = 0;
      for (const auto& b : s.instances) w = std::max({w, b.width(), b.height()});
      const double lo = preset == ScenePreset::parallel ? std::ceil(0.1 * w) : 0.0;
      const double hi = std::floor((preset == ScenePreset::parallel ? 0.3 : 0.09) * w);
      double nearest_overall = 1e9;
      for (std::size_t i = 0; i < 3; ++i) {
        double nearest = 1e9;
        for (std::size_t j = 0; j < 3; ++j) {
          if (i == j) continue;
          const double g = box_gap(s.instances[i], s.instances[j]);
          EXPECT_GE(g, lo - 1e-9);
          nearest = std::min(nearest, g);
        }
        EXPECT_LE(nearest, std::max(lo, hi) + 1e-9);  // each instance touches a neighbour at the gap
        nearest_overall = std::min(nearest_overall, nearest);
      }
      for (const auto& b : s.instances) {
        EXPECT_GE(b.x_min, 0);
        EXPECT_LE(b.y_max, 168);
      }
    }
  }
}

TEST(Scenes, SetBalancedDeterministicAndRoundTrips) {
  const auto rules = make_ruleset(5, 3, 4);
  SceneSetOptions opt;
  opt.n = 12;
  opt.seed = 3;
  opt.scene.canvas = 112;
  const auto a = gen_scene_set(rules, mnist(), opt);
  const auto b = gen_scene_set(rules, mnist(), opt);
  EXPECT_EQ(a.images, b.images);
  EXPECT_EQ(a.annotations, b.annotations);
  std::map<int, int> counts;
  for (const auto& ann : a.annotations) ++counts[ann.count];
  EXPECT_EQ(counts, (std::map<int, int>{{1, 3}, {2, 3}, {3, 3}, {4, 3}}));
  EXPECT_EQ(a.annotations[11].image_id, "scene_000011");
  const auto dir = pnc_test::scratch_dir("lego_scenes");
  write_scene_set(dir, a, "{}");
  const auto back = read_scene_set(dir);
  EXPECT_EQ(back.images, a.images);
  EXPECT_EQ(back.annotations, a.annotations);
}

TEST(Scenes, PresetNames) {
  for (auto p : {ScenePreset::easy, ScenePreset::big_o, ScenePreset::parallel, ScenePreset::close_by}) {
    EXPECT_EQ(preset_from_string(to_string(p)), p);
  }
  EXPECT_THROW(preset_from_string("huge"), std::invalid_argument);
}

TEST(Geometry, BoxGap) {
  EXPECT_DOUBLE_EQ(box_gap({0, 0, 10, 10}, {13, 0, 20, 10}), 3);
  EXPECT_DOUBLE_EQ(box_gap({0, 0, 10, 10}, {13, 15, 20, 20}), 5);
  EXPECT_LT(box_gap({0, 0, 10, 10}, {5, 5, 20, 20}), 0);
}

TEST(Combinations, Counts) {
  EXPECT_EQ(count_combinations(10, 3).value, 1000u);
  EXPECT_EQ(count_combinations(7, 0).value, 1u);
  EXPECT_EQ(count_combinations(6000, 3).value, 216000000000ull);
  const auto big = count_combinations(6000, 10);
  EXPECT_TRUE(big.saturated);
  EXPECT_EQ(big.value, UINT64_MAX);
}

TEST(Quantize, RoundsAndClamps) {
  Grid2D g(1, 4, std::vector<float>{0.0f, 0.5f / 255.0f + 1e-4f, 1.0f, 2.0f});
  EXPECT_EQ(quantize(g), (std::vector<std::uint8_t>{0, 1, 255, 255}));
}
