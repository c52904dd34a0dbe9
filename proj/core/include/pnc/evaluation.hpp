#pragma once

// Count accuracy, containment-based pointing accuracy, report tables and
// overlay rendering.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pnc/io.hpp"
#include "pnc/pipelines.hpp"
#include "pnc/tensor.hpp"

namespace pnc {

struct CountReport {
  int c_max = kDefaultCountMax;
  std::vector<std::size_t> totals;                // per ground-truth label 0..c_max
  std::vector<std::size_t> correct;
  std::vector<std::vector<std::size_t>> confusion;  // [truth][prediction]

  /// Empty when the label has no samples.
  std::optional<double> accuracy(int label) const;
  /// Unweighted mean over labels that have samples.
  std::optional<double> mean_accuracy() const;
  double overall_accuracy() const;
};

/// Joins predictions and annotations on image_id; both counts are saturated at c_max.
/// Throws DataError when the id sets differ.
CountReport count_accuracy(const std::vector<PncOutput>& predictions, const std::vector<SceneAnnotation>& truth,
                           int c_max = kDefaultCountMax);

/// area(pointer n box) / area(pointer). Ellipses use a 256 x 256 raster of
/// their bounding box. A zero-area pointer scores 1 if it lies in the box
/// (boundary included), else 0; a zero-width or zero-height box pointer is
/// measured by length.
double containment_ratio(const Pointer& pointer, const BBox& box);

/// Greedy matching in ground-truth order: each box takes the available
/// pointer with the highest containment strictly above `ratio` (ties to the
/// smaller geometry key). Returns (box index, pointer index) pairs.
std::vector<std::pair<std::size_t, std::size_t>> match_pointers(const std::vector<Pointer>& pointers,
                                                                 const std::vector<BBox>& boxes, double ratio);

struct PointingReport {
  std::vector<double> ratios;
  static constexpr std::size_t kBuckets = 4;  // ground-truth count 1, 2, 3, 4+
  std::vector<std::array<std::size_t, kBuckets>> hits;    // per ratio
  std::vector<std::array<std::size_t, kBuckets>> totals;  // per ratio

  std::optional<double> accuracy(std::size_t ratio_index, std::size_t bucket) const;
  static std::string bucket_name(std::size_t bucket);
};

/// Scores only images whose saturated predicted count equals the saturated true count.
PointingReport pointing_accuracy(const std::vector<PncOutput>& outputs, const std::vector<SceneAnnotation>& truth,
                                 const std::vector<double>& ratios, int c_max = kDefaultCountMax);

// ---------------------------------------------------------------- tables

/// Row of the count table: labels 0..3, 4+ and mean, in percent.
struct CountTableRow {
  std::string method;
  std::array<std::optional<double>, 6> percent;
};

/// Row of the pointing table: one overlap threshold, buckets 1..3, as fractions.
struct PointingTableRow {
  double overlap = 0.5;
  std::string method;
  std::array<std::optional<double>, 3> accuracy;
};

CountTableRow count_table_row(const std::string& method, const CountReport& report);
std::vector<PointingTableRow> pointing_table_rows(const std::string& method, const PointingReport& report);

/// "Methods,0,1,2,3,4+,mean(%)"; integer percentages, "-" for missing cells.
std::string format_count_table_csv(const std::vector<CountTableRow>& rows);
/// "Overlap,Methods,1,2,3"; accuracies as ".87", "-" for missing cells.
std::string format_pointing_table_csv(const std::vector<PointingTableRow>& rows);
/// Aligned plain-text versions of both tables.
std::string format_count_table_text(const std::vector<CountTableRow>& rows);
std::string format_pointing_table_text(const std::vector<PointingTableRow>& rows);

// ---------------------------------------------------------------- rendering

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major RGB
};

/// Three panels side by side: the input, the heatmap in a heat colour map,
/// and the input with pointers drawn (boxes green, ellipses red).
RgbImage render_overlay(const Grid2D& image, const Heatmap& heatmap, const std::vector<Pointer>& pointers);

/// Pixels set when drawing an ellipse outline onto a w x h canvas.
std::vector<std::pair<int, int>> ellipse_outline(const Ellipse& e, int w, int h);

std::vector<std::uint8_t> encode_png(const RgbImage& image);
void write_png(const std::filesystem::path& path, const RgbImage& image);

}  // namespace pnc
