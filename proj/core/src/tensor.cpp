#include "pnc/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "pnc/error.hpp"

namespace pnc {

namespace {

template <typename T>
bool finite_span(std::span<const T> values) {
  return std::all_of(values.begin(), values.end(), [](T v) { return std::isfinite(v); });
}

void require_rank3(const Tensor& t, const char* what) {
  if (t.rank() != 3) throw std::invalid_argument(std::string(what) + ": expected a [C,H,W] tensor");
  if (t.dim(1) == 0 || t.dim(2) == 0) {
    throw std::invalid_argument(std::string(what) + ": zero-sized channel");
  }
}

}  // namespace

bool all_finite(std::span<const float> values) { return finite_span(values); }
bool all_finite(std::span<const double> values) { return finite_span(values); }

Grid2D::Grid2D(std::size_t r, std::size_t c, std::vector<float> v) : rows(r), cols(c), values(std::move(v)) {
  if (values.size() != rows * cols) throw std::invalid_argument("grid data does not match rows x cols");
}

BBox box_union(const BBox& a, const BBox& b) {
  return {std::min(a.x_min, b.x_min), std::min(a.y_min, b.y_min), std::max(a.x_max, b.x_max),
          std::max(a.y_max, b.y_max)};
}

Heatmap Heatmap::covering(Grid2D grid, int image_width, int image_height) {
  if (grid.rows == 0 || grid.cols == 0) throw std::invalid_argument("heatmap grid is empty");
  if (image_width <= 0 || image_height <= 0) throw std::invalid_argument("heatmap image size must be positive");
  Heatmap hm;
  hm.scale_x = static_cast<double>(image_width) / static_cast<double>(grid.cols);
  hm.scale_y = static_cast<double>(image_height) / static_cast<double>(grid.rows);
  hm.grid = std::move(grid);
  hm.image_width = image_width;
  hm.image_height = image_height;
  return hm;
}

Heatmap Heatmap::strided(Grid2D grid, int image_width, int image_height, double stride) {
  if (grid.rows == 0 || grid.cols == 0) throw std::invalid_argument("heatmap grid is empty");
  if (stride <= 0) throw std::invalid_argument("heatmap stride must be positive");
  Heatmap hm;
  hm.grid = std::move(grid);
  hm.image_width = image_width;
  hm.image_height = image_height;
  hm.scale_x = stride;
  hm.scale_y = stride;
  return hm;
}

Grid2D channel_stack(std::span<const Grid2D> maps) {
  if (maps.empty()) throw std::invalid_argument("channel_stack: empty map list");
  const auto rows = maps.front().rows;
  const auto cols = maps.front().cols;
  std::vector<double> acc(rows * cols, 0.0);
  for (const auto& m : maps) {
    if (m.rows != rows || m.cols != cols) throw std::invalid_argument("channel_stack: mismatched map dimensions");
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += m.values[i];
  }
  Grid2D out(rows, cols);
  std::transform(acc.begin(), acc.end(), out.values.begin(), [](double v) { return static_cast<float>(v); });
  return out;
}

Heatmap channel_stack(std::span<const Heatmap> maps) {
  if (maps.empty()) throw std::invalid_argument("channel_stack: empty map list");
  std::vector<Grid2D> grids;
  grids.reserve(maps.size());
  const auto& first = maps.front();
  for (const auto& m : maps) {
    if (m.image_width != first.image_width || m.image_height != first.image_height) {
      throw std::invalid_argument("channel_stack: mismatched image geometry");
    }
    grids.push_back(m.grid);
  }
  Heatmap out = first;
  out.grid = channel_stack(grids);
  return out;
}

Heatmap normalize_subtract_scaled_mean(const Heatmap& hm, double k) {
  if (hm.grid.empty()) throw std::invalid_argument("normalize: empty grid");
  if (k < 0) throw std::invalid_argument("normalize: k must be >= 0");
  double sum = 0.0;
  for (float v : hm.grid.values) sum += v;
  const double offset = k * sum / static_cast<double>(hm.grid.values.size());
  Heatmap out = hm;
  for (auto& v : out.grid.values) v = static_cast<float>(std::max(0.0, static_cast<double>(v) - offset));
  return out;
}

std::vector<float> global_max_pool(const Tensor& fmaps) {
  require_rank3(fmaps, "global_max_pool");
  std::vector<float> out(fmaps.dim(0));
  for (std::size_t c = 0; c < out.size(); ++c) {
    const auto ch = fmaps.slice(c);
    out[c] = *std::max_element(ch.begin(), ch.end());
  }
  return out;
}

std::vector<float> global_avg_pool(const Tensor& fmaps) {
  require_rank3(fmaps, "global_avg_pool");
  std::vector<float> out(fmaps.dim(0));
  for (std::size_t c = 0; c < out.size(); ++c) {
    const auto ch = fmaps.slice(c);
    double sum = 0.0;
    for (float v : ch) sum += v;
    out[c] = static_cast<float>(sum / static_cast<double>(ch.size()));
  }
  return out;
}

std::vector<float> l2_normalize(std::span<const float> v, double eps) {
  double sq = 0.0;
  for (float x : v) sq += static_cast<double>(x) * x;
  const double norm = std::sqrt(sq);
  std::vector<float> out(v.begin(), v.end());
  if (norm <= eps) return out;
  for (auto& x : out) x = static_cast<float>(x / norm);
  return out;
}

Heatmap upscale_heatmap(const Heatmap& hm, int w, int h) {
  if (w <= 0 || h <= 0) throw std::invalid_argument("upscale_heatmap: degenerate target size");
  if (hm.grid.empty()) throw std::invalid_argument("upscale_heatmap: empty grid");
  const auto& src = hm.grid;
  Heatmap out;
  out.image_width = hm.image_width;
  out.image_height = hm.image_height;
  out.scale_x = static_cast<double>(hm.image_width) / w;
  out.scale_y = static_cast<double>(hm.image_height) / h;
  out.grid = Grid2D(static_cast<std::size_t>(h), static_cast<std::size_t>(w));

  // Source sample position of each output column/row, expressed in source
  // cell-center coordinates and clamped to the grid.
  auto source_coord = [](int i, double out_scale, double src_scale, std::size_t n) {
    const double pixel = (i + 0.5) * out_scale;
    const double u = pixel / src_scale - 0.5;
    return std::clamp(u, 0.0, static_cast<double>(n - 1));
  };

  std::vector<std::size_t> x0(w), x1(w);
  std::vector<double> fx(w);
  for (int x = 0; x < w; ++x) {
    const double u = source_coord(x, out.scale_x, hm.scale_x, src.cols);
    x0[x] = static_cast<std::size_t>(std::floor(u));
    x1[x] = std::min(x0[x] + 1, src.cols - 1);
    fx[x] = u - static_cast<double>(x0[x]);
  }
  for (int y = 0; y < h; ++y) {
    const double v = source_coord(y, out.scale_y, hm.scale_y, src.rows);
    const auto y0 = static_cast<std::size_t>(std::floor(v));
    const auto y1 = std::min(y0 + 1, src.rows - 1);
    const double fy = v - static_cast<double>(y0);
    for (int x = 0; x < w; ++x) {
      const double top = src(y0, x0[x]) * (1.0 - fx[x]) + src(y0, x1[x]) * fx[x];
      const double bottom = src(y1, x0[x]) * (1.0 - fx[x]) + src(y1, x1[x]) * fx[x];
      out.grid(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) =
          static_cast<float>(top * (1.0 - fy) + bottom * fy);
    }
  }
  return out;
}

Grid2D channel_grid(const Tensor& fmaps, std::size_t c) {
  require_rank3(fmaps, "channel_grid");
  const auto ch = fmaps.slice(c);
  return Grid2D(fmaps.dim(1), fmaps.dim(2), std::vector<float>(ch.begin(), ch.end()));
}

}  // namespace pnc
