#pragma once

// Dense arrays, image-space geometry and the heatmap primitives shared by
// both counting pipelines.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace pnc {

/// Row-major dense array with a runtime shape.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  explicit BasicTensor(std::vector<std::size_t> shape, T fill = T{})
      : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

  BasicTensor(std::vector<std::size_t> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (element_count(shape_) != data_.size()) {
      throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                  " does not match shape product " +
                                  std::to_string(element_count(shape_)));
    }
  }

  static std::size_t element_count(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // [C,H,W] accessors.
  T& at(std::size_t c, std::size_t y, std::size_t x) {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }
  const T& at(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }

  /// Contiguous slice along the first axis.
  std::span<T> slice(std::size_t i) {
    const std::size_t stride = data_.size() / shape_.at(0);
    return std::span<T>(data_).subspan(i * stride, stride);
  }
  std::span<const T> slice(std::size_t i) const {
    const std::size_t stride = data_.size() / shape_.at(0);
    return std::span<const T>(data_).subspan(i * stride, stride);
  }

  bool operator==(const BasicTensor& other) const = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using ByteTensor = BasicTensor<std::uint8_t>;

/// True when every element is finite.
bool all_finite(std::span<const float> values);
bool all_finite(std::span<const double> values);

/// Single-channel 2D array of reals (row-major).
struct Grid2D {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> values;

  Grid2D() = default;
  Grid2D(std::size_t r, std::size_t c, float fill = 0.0f) : rows(r), cols(c), values(r * c, fill) {}
  Grid2D(std::size_t r, std::size_t c, std::vector<float> v);

  float& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  float operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  bool empty() const { return values.empty(); }
  bool operator==(const Grid2D&) const = default;
};

/// Axis-aligned box in continuous image coordinates. A box covering pixel
/// columns a..b inclusive has x_min = a and x_max = b + 1.
struct BBox {
  double x_min = 0;
  double y_min = 0;
  double x_max = 0;
  double y_max = 0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (x_min + x_max); }
  double center_y() const { return 0.5 * (y_min + y_max); }
  bool valid() const { return x_min <= x_max && y_min <= y_max; }
  bool operator==(const BBox&) const = default;
};

BBox box_union(const BBox& a, const BBox& b);

/// Ellipse {x : (x-c)^T diag(sx^2, sy^2)^-1 (x-c) = 1}.
struct Ellipse {
  double cx = 0;
  double cy = 0;
  double sx = 1;  // semi-axis along x
  double sy = 1;  // semi-axis along y

  bool operator==(const Ellipse&) const = default;
};

/// Localisation output: a box (P2C) or an ellipse (C2P).
using Pointer = std::variant<BBox, Ellipse>;

/// Non-negative map over an image. Cell (r, c) covers image pixels
/// [c * scale_x, (c + 1) * scale_x) x [r * scale_y, (r + 1) * scale_y).
struct Heatmap {
  Grid2D grid;
  int image_width = 0;
  int image_height = 0;
  double scale_x = 1;
  double scale_y = 1;

  /// Heatmap whose cells tile the image evenly.
  static Heatmap covering(Grid2D grid, int image_width, int image_height);
  /// Heatmap for an activation map produced at a fixed pixel stride.
  static Heatmap strided(Grid2D grid, int image_width, int image_height, double stride);
};

/// Elementwise sum of same-sized maps.
Grid2D channel_stack(std::span<const Grid2D> maps);
/// Elementwise sum of heatmaps sharing grid and image geometry.
Heatmap channel_stack(std::span<const Heatmap> maps);

/// out = max(0, in - k * mean(in)).
Heatmap normalize_subtract_scaled_mean(const Heatmap& hm, double k = 2.0);

/// Per-channel maximum of a [C,H,W] tensor.
std::vector<float> global_max_pool(const Tensor& fmaps);
/// Per-channel mean of a [C,H,W] tensor.
std::vector<float> global_avg_pool(const Tensor& fmaps);

/// Returns v / |v|_2, or v unchanged when |v|_2 <= eps.
std::vector<float> l2_normalize(std::span<const float> v, double eps = 1e-12);

/// Bilinear resample of the grid to w x h cells spanning the same image.
Heatmap upscale_heatmap(const Heatmap& hm, int w, int h);

/// Channel c of a [C,H,W] tensor as a grid.
Grid2D channel_grid(const Tensor& fmaps, std::size_t c);

}  // namespace pnc
