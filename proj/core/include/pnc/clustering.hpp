#pragma once

// Density-peak clustering over heat points (simultaneous count + boxes) and
// weighted diagonal-covariance Gaussian mixtures (ellipse pointers).

#include <cstdint>
#include <vector>

#include "pnc/tensor.hpp"

namespace pnc {

struct WeightedPoint {
  double x = 0;
  double y = 0;
  double w = 0;
  bool operator==(const WeightedPoint&) const = default;
};

/// One point per cell with value > threshold, at the cell center in image
/// pixels, weighted by the cell value. Row-major cell order.
std::vector<WeightedPoint> heatmap_to_points(const Heatmap& hm, double threshold = 0.0);

struct DensityPeaksResult {
  std::vector<double> rho;
  std::vector<double> delta;
  std::vector<long> nearest_higher;      // -1 for the global density maximum
  std::vector<std::size_t> centers;      // in density order; cluster id = position here
  std::vector<std::size_t> assignment;   // point -> cluster id
  std::size_t count() const { return centers.size(); }
};

/// d_ij = sqrt(dx^2 + dy^2); rho_i = sum_{j != i, ascending j} w_j * exp(-(d_ij / d_c)^2).
/// Density order: rho descending, ties to the lower index. delta_i is the
/// distance to the nearest point earlier in that order (ties to the lower
/// index); the first point gets the maximum distance to any point.
/// Centers: rho > rho_min and delta > delta_min; the first point in density
/// order is always a center so every point has a cluster.
DensityPeaksResult density_peaks(const std::vector<WeightedPoint>& points, double d_c, double rho_min,
                                 double delta_min);

struct DensityPeaksParams {
  double d_c = 1.0;
  double rho_min_fraction = 0.1;  // of the maximum rho
  double delta_min = 1.0;
};

/// d_c = 2% and delta_min = 15% of the image diagonal.
DensityPeaksParams default_density_params(int image_width, int image_height);

DensityPeaksResult density_peaks(const std::vector<WeightedPoint>& points, const DensityPeaksParams& params);

/// Tight box over each cluster's member coordinates, indexed by cluster id.
std::vector<BBox> cluster_pointers(const DensityPeaksResult& result, const std::vector<WeightedPoint>& points);

struct GmmComponent {
  double mean_x = 0;
  double mean_y = 0;
  double var_x = 1;
  double var_y = 1;
  double prior = 1;
  bool operator==(const GmmComponent&) const = default;
};

struct GmmOptions {
  double tol = 1e-6;
  int max_iter = 200;
  double var_floor = 1e-4;  // px^2
};

struct GmmModel {
  std::vector<GmmComponent> components;
  /// Weighted log-likelihood of the initial model, then after every M-step.
  std::vector<double> log_likelihood;
  int iterations = 0;
  bool converged = false;
};

/// Weighted log-likelihood sum_i w_i log sum_c pi_c N(x_i | mu_c, Sigma_c).
double gmm_log_likelihood(const std::vector<GmmComponent>& components, const std::vector<WeightedPoint>& points);

/// Weighted EM with diagonal covariances. Initial means: the first is drawn
/// with probability proportional to weight, then each next one maximises
/// w * D^2 (D = distance to the nearest chosen mean).
GmmModel gmm_fit(const std::vector<WeightedPoint>& points, int components, std::uint64_t seed,
                 const GmmOptions& options = {});

/// Ellipse per component with semi-axes (sqrt(var_x), sqrt(var_y)).
std::vector<Ellipse> gmm_pointers(const GmmModel& model);

}  // namespace pnc
