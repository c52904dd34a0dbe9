#pragma once

// MNIST-LEGO: synthetic object classes assembled from MNIST digit parts,
// single-object classification sets and multi-instance counting scenes.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pnc/io.hpp"
#include "pnc/rng.hpp"
#include "pnc/tensor.hpp"

namespace pnc::lego {

inline constexpr int kDigitSize = 28;
/// Anchor spacing between consecutive parts, in part-size units. MNIST ink
/// occupies roughly the central 20 of 28 pixels, so 0.75 keeps neighbours
/// close without overlapping.
inline constexpr double kPartStep = 0.75;
inline constexpr double kAnchorJitter = 0.1;
/// Pixels at or below this value do not count as ink (one byte level / 2).
inline constexpr float kInkThreshold = 0.5f / 255.0f;

struct Exemplar {
  std::uint32_t source_index = 0;  // row in the originating IDX file
  Grid2D raster;                   // 28 x 28, values in [0, 1]
};

/// Digit rasters grouped by class.
class DigitStore {
 public:
  /// images: [N,28,28] bytes, labels: [N] bytes in 0..9.
  static DigitStore from_tensors(const ByteTensor& images, const ByteTensor& labels);
  /// Reads images-idx3-ubyte / labels-idx1-ubyte from a directory.
  static DigitStore load(const std::filesystem::path& dir);

  /// Disjoint (train, test) pools: per digit, the first `train_fraction` of
  /// exemplars in file order go to train.
  std::pair<DigitStore, DigitStore> split(double train_fraction) const;

  std::size_t count(int digit) const { return by_digit_.at(static_cast<std::size_t>(digit)).size(); }
  const Exemplar& exemplar(int digit, std::size_t i) const {
    return by_digit_.at(static_cast<std::size_t>(digit)).at(i);
  }
  void add(int digit, Exemplar e);

 private:
  std::array<std::vector<Exemplar>, 10> by_digit_;
};

enum class Layout { vertical, horizontal, diagonal, l_shape };

std::string to_string(Layout layout);
Layout layout_from_string(const std::string& name);

struct Part {
  int digit = 0;
  double dx = 0;  // anchor, part-size units
  double dy = 0;
  bool operator==(const Part&) const = default;
};

struct ConstructionRule {
  Layout layout = Layout::vertical;
  std::vector<Part> parts;

  std::size_t k() const { return parts.size(); }
  /// Object extent at scale 1 (anchor span plus one part), in pixels.
  double nominal_width() const;
  double nominal_height() const;
  bool operator==(const ConstructionRule&) const = default;
};

struct LegoClassSpec {
  int class_id = 0;
  ConstructionRule rule;
  bool operator==(const LegoClassSpec&) const = default;
};

/// Layout family after collapsing shapes that coincide for small K
/// (every layout is a single digit for K = 1; L-shape equals horizontal for K = 2).
Layout effective_layout(Layout layout, std::size_t k);

/// Number of distinct (digit sequence, layout) rules for K parts, saturated at UINT64_MAX.
std::uint64_t rule_capacity(std::size_t k);

std::vector<LegoClassSpec> make_ruleset(int num_classes, int k, std::uint64_t seed);

std::string ruleset_to_json(const std::vector<LegoClassSpec>& ruleset);
std::vector<LegoClassSpec> ruleset_from_json(const std::string& text);

struct LegoSample {
  Grid2D image;  // object raster, values in [0, 1]
  int class_id = 0;
  BBox object_box;
  std::vector<BBox> part_boxes;
  std::vector<std::uint32_t> part_sources;  // exemplar source index per part
};

LegoSample compose_object(const LegoClassSpec& spec, const DigitStore& store, double scale, Rng& rng);
/// Anisotropic variant; scale_x and scale_y stretch parts independently.
LegoSample compose_object(const LegoClassSpec& spec, const DigitStore& store, double scale_x, double scale_y,
                          Rng& rng);

enum class BackgroundKind { none, texture };

/// Blurred uniform noise (3 passes of a 3x3 box blur) scaled by strength,
/// composited under the image with max().
Grid2D add_background(const Grid2D& image, BackgroundKind kind, double strength, Rng& rng);

/// Max-composites the object raster with its top-left corner at (x, y),
/// clipping to the canvas. Returns the part boxes shifted into canvas space.
std::vector<BBox> place_object(Grid2D& canvas, const LegoSample& sample, int x, int y);

struct ClassificationSplit {
  ByteTensor images;  // [N, canvas, canvas]
  std::vector<int> labels;
  std::vector<SceneAnnotation> annotations;  // one object box per image
};

struct ClassificationSet {
  ClassificationSplit train;
  ClassificationSplit test;
};

struct ClassificationOptions {
  int n_train_per_class = 500;
  int n_test_per_class = 100;
  int canvas = 84;
  double noise = 0.5;
  double train_pool_fraction = 0.8;
  std::uint64_t seed = 0;
};

/// Balanced dataset; train images draw digits only from the train pool and
/// test images only from the test pool.
ClassificationSet gen_classification_set(const std::vector<LegoClassSpec>& ruleset, const DigitStore& store,
                                         const ClassificationOptions& options);

ClassificationSplit gen_classification_split(const std::vector<LegoClassSpec>& ruleset, const DigitStore& pool,
                                             int n_per_class, int canvas, double noise, std::uint64_t seed,
                                             const std::string& id_prefix);

/// Writes <prefix>.tnsr (images + labels) and <prefix>.jsonl (annotations).
void write_split(const std::filesystem::path& dir, const std::string& prefix, const ClassificationSplit& split,
                 const std::string& meta_json);
ClassificationSplit read_split(const std::filesystem::path& dir, const std::string& prefix);

enum class ScenePreset { easy, big_o, parallel, close_by };

std::string to_string(ScenePreset preset);
ScenePreset preset_from_string(const std::string& name);

struct Scene {
  Grid2D image;
  int class_id = 0;
  std::vector<BBox> instances;
  std::size_t count() const { return instances.size(); }
};

struct SceneOptions {
  int canvas = 168;
  double noise = 0.5;
  int max_attempts = 400;
};

/// Places m instances of the class under the preset's scale and spacing rules.
/// Throws DataError when placement stays infeasible after bounded retries.
Scene gen_scene(const LegoClassSpec& spec, int m, ScenePreset preset, const DigitStore& store,
                const SceneOptions& options, Rng& rng);

struct SceneSetOptions {
  ScenePreset preset = ScenePreset::easy;
  int min_instances = 1;
  int max_instances = 4;
  int n = 100;
  std::uint64_t seed = 0;
  SceneOptions scene;
};

/// Counting scenes plus ground truth. Scene i uses class (random, seeded)
/// and instance count min + (i mod range), so counts are balanced.
struct SceneSet {
  ByteTensor images;  // [N, canvas, canvas]
  std::vector<SceneAnnotation> annotations;
};

SceneSet gen_scene_set(const std::vector<LegoClassSpec>& ruleset, const DigitStore& store,
                       const SceneSetOptions& options);

/// Writes scenes.tnsr and annotations.jsonl into dir.
void write_scene_set(const std::filesystem::path& dir, const SceneSet& set, const std::string& meta_json);
SceneSet read_scene_set(const std::filesystem::path& dir);

/// Gap between two boxes: the largest axis separation (negative when they overlap).
double box_gap(const BBox& a, const BBox& b);

struct CombinationCount {
  std::uint64_t value = 0;
  bool saturated = false;
};

/// N^K, saturating at UINT64_MAX with a flag.
CombinationCount count_combinations(std::uint64_t n, std::uint64_t k);

/// Converts [0,1] reals to bytes with rounding.
std::vector<std::uint8_t> quantize(const Grid2D& image);

/// Image i of an [N,H,W] byte stack as [0,1] reals.
Grid2D image_from_stack(const ByteTensor& stack, std::size_t i);

}  // namespace pnc::lego
