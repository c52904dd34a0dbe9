#include "pnc/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "pnc/error.hpp"
#include "pnc/rng.hpp"

namespace pnc {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;
// exp(-t^2) is exactly 0 in double for t^2 > 746; 27.5^2 leaves rounding room.
constexpr double kKernelReach = 27.5;

double dist(const WeightedPoint& a, const WeightedPoint& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return std::sqrt(dx * dx + dy * dy);
}

double log_gauss(const GmmComponent& c, double x, double y) {
  const double dx = x - c.mean_x;
  const double dy = y - c.mean_y;
  return -kLog2Pi - 0.5 * (std::log(c.var_x) + std::log(c.var_y)) -
         0.5 * (dx * dx / c.var_x + dy * dy / c.var_y);
}

// log sum_c pi_c N(x | c), plus the per-component log terms in `terms`.
double log_mix(const std::vector<GmmComponent>& comps, double x, double y, std::vector<double>& terms) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < comps.size(); ++c) {
    terms[c] = comps[c].prior > 0 ? std::log(comps[c].prior) + log_gauss(comps[c], x, y)
                                  : -std::numeric_limits<double>::infinity();
    m = std::max(m, terms[c]);
  }
  double s = 0;
  for (double t : terms) s += std::exp(t - m);
  return m + std::log(s);
}

}  // namespace

std::vector<WeightedPoint> heatmap_to_points(const Heatmap& hm, double threshold) {
  if (threshold < 0) throw std::invalid_argument("heatmap_to_points: threshold must be >= 0");
  std::vector<WeightedPoint> out;
  for (std::size_t r = 0; r < hm.grid.rows; ++r) {
    for (std::size_t c = 0; c < hm.grid.cols; ++c) {
      const double v = hm.grid(r, c);
      if (v > threshold) out.push_back({(c + 0.5) * hm.scale_x, (r + 0.5) * hm.scale_y, v});
    }
  }
  return out;
}

namespace {

// rho, delta and nearest_higher; returns the density order.
std::vector<std::size_t> density_fields(const std::vector<WeightedPoint>& points, double d_c, DensityPeaksResult& r) {
  if (points.empty()) throw std::invalid_argument("density_peaks: empty point set");
  if (!(d_c > 0)) throw std::invalid_argument("density_peaks: d_c must be positive");
  const std::size_t n = points.size();
  r.rho.assign(n, 0.0);
  const double reach = kKernelReach * d_c;
  for (std::size_t i = 0; i < n; ++i) {
    double rho = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      if (std::abs(points[i].x - points[j].x) > reach || std::abs(points[i].y - points[j].y) > reach) continue;
      const double t = dist(points[i], points[j]) / d_c;
      rho += points[j].w * std::exp(-(t * t));
    }
    r.rho[i] = rho;
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return r.rho[a] > r.rho[b]; });

  r.delta.assign(n, 0.0);
  r.nearest_higher.assign(n, -1);
  for (std::size_t k = 1; k < n; ++k) {
    const auto i = order[k];
    double best = std::numeric_limits<double>::infinity();
    long arg = -1;
    for (std::size_t q = 0; q < k; ++q) {
      const auto j = order[q];
      const double d = dist(points[i], points[j]);
      if (d < best || (d == best && static_cast<long>(j) < arg)) {
        best = d;
        arg = static_cast<long>(j);
      }
    }
    r.delta[i] = best;
    r.nearest_higher[i] = arg;
  }
  const auto top = order[0];
  for (std::size_t j = 0; j < n; ++j) r.delta[top] = std::max(r.delta[top], dist(points[top], points[j]));
  return order;
}

void select_centers(const std::vector<std::size_t>& order, double rho_min, double delta_min, DensityPeaksResult& r) {
  const std::size_t n = order.size();
  r.centers.clear();
  r.assignment.assign(n, 0);
  for (std::size_t k = 0; k < n; ++k) {
    const auto i = order[k];
    if (k == 0 || (r.rho[i] > rho_min && r.delta[i] > delta_min)) {
      r.assignment[i] = r.centers.size();
      r.centers.push_back(i);
    } else {
      r.assignment[i] = r.assignment[static_cast<std::size_t>(r.nearest_higher[i])];
    }
  }
}

}  // namespace

DensityPeaksResult density_peaks(const std::vector<WeightedPoint>& points, double d_c, double rho_min,
                                 double delta_min) {
  DensityPeaksResult r;
  const auto order = density_fields(points, d_c, r);
  select_centers(order, rho_min, delta_min, r);
  return r;
}

DensityPeaksParams default_density_params(int image_width, int image_height) {
  const double diag = std::hypot(image_width, image_height);
  return {0.02 * diag, 0.1, 0.15 * diag};
}

DensityPeaksResult density_peaks(const std::vector<WeightedPoint>& points, const DensityPeaksParams& params) {
  DensityPeaksResult r;
  const auto order = density_fields(points, params.d_c, r);
  const double rho_min = params.rho_min_fraction * *std::max_element(r.rho.begin(), r.rho.end());
  select_centers(order, rho_min, params.delta_min, r);
  return r;
}

std::vector<BBox> cluster_pointers(const DensityPeaksResult& result, const std::vector<WeightedPoint>& points) {
  if (result.assignment.size() != points.size()) throw std::invalid_argument("cluster_pointers: size mismatch");
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<BBox> boxes(result.count(), BBox{inf, inf, -inf, -inf});
  for (std::size_t i = 0; i < points.size(); ++i) {
    auto& b = boxes.at(result.assignment[i]);
    b.x_min = std::min(b.x_min, points[i].x);
    b.y_min = std::min(b.y_min, points[i].y);
    b.x_max = std::max(b.x_max, points[i].x);
    b.y_max = std::max(b.y_max, points[i].y);
  }
  for (const auto& b : boxes) {
    if (!b.valid()) throw std::logic_error("cluster_pointers: empty cluster");
  }
  return boxes;
}

double gmm_log_likelihood(const std::vector<GmmComponent>& components, const std::vector<WeightedPoint>& points) {
  std::vector<double> terms(components.size());
  long double ll = 0;
  for (const auto& p : points) {
    if (p.w > 0) ll += p.w * log_mix(components, p.x, p.y, terms);
  }
  return static_cast<double>(ll);
}

GmmModel gmm_fit(const std::vector<WeightedPoint>& all_points, int components, std::uint64_t seed,
                 const GmmOptions& options) {
  if (components < 1) throw std::invalid_argument("gmm_fit: need at least one component");
  std::vector<WeightedPoint> pts;
  for (const auto& p : all_points) {
    if (p.w < 0 || !std::isfinite(p.w)) throw std::invalid_argument("gmm_fit: weights must be finite and >= 0");
    if (p.w > 0) pts.push_back(p);
  }
  if (pts.empty()) throw std::invalid_argument("gmm_fit: all weights are zero");
  const auto c_n = static_cast<std::size_t>(components);
  if (pts.size() < c_n) {
    throw std::invalid_argument("gmm_fit: " + std::to_string(pts.size()) + " weighted points for " +
                                std::to_string(components) + " components");
  }

  long double wsum = 0, sx = 0, sy = 0;
  for (const auto& p : pts) {
    wsum += p.w;
    sx += p.w * p.x;
    sy += p.w * p.y;
  }
  const double cx = static_cast<double>(sx / wsum), cy = static_cast<double>(sy / wsum);
  long double vx = 0, vy = 0;
  for (const auto& p : pts) {
    vx += p.w * (p.x - cx) * (p.x - cx);
    vy += p.w * (p.y - cy) * (p.y - cy);
  }
  const double var_x0 = std::max(options.var_floor, static_cast<double>(vx / wsum));
  const double var_y0 = std::max(options.var_floor, static_cast<double>(vy / wsum));

  // Seeding.
  Rng rng(derive_seed(seed, {0x676d6dULL}));
  std::vector<std::size_t> chosen;
  {
    const double target = rng.uniform() * static_cast<double>(wsum);
    double acc = 0;
    std::size_t first = pts.size() - 1;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      acc += pts[i].w;
      if (acc > target) {
        first = i;
        break;
      }
    }
    chosen.push_back(first);
  }
  std::vector<double> d2(pts.size(), std::numeric_limits<double>::infinity());
  while (chosen.size() < c_n) {
    const auto& last = pts[chosen.back()];
    std::size_t best = 0;
    double best_score = -1;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const double dx = pts[i].x - last.x, dy = pts[i].y - last.y;
      d2[i] = std::min(d2[i], dx * dx + dy * dy);
      const double score = pts[i].w * d2[i];
      if (score > best_score) {
        best_score = score;
        best = i;
      }
    }
    chosen.push_back(best);
  }

  // Initial variances from a hard split to the nearest seed; a global
  // variance lets the widest axis swamp the other and EM then splits badly.
  std::vector<long double> iw(c_n, 0.0L), ivx(c_n, 0.0L), ivy(c_n, 0.0L);
  for (const auto& p : pts) {
    std::size_t near = 0;
    double near_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < c_n; ++c) {
      const double dx = p.x - pts[chosen[c]].x, dy = p.y - pts[chosen[c]].y;
      if (dx * dx + dy * dy < near_d) {
        near_d = dx * dx + dy * dy;
        near = c;
      }
    }
    const double dx = p.x - pts[chosen[near]].x, dy = p.y - pts[chosen[near]].y;
    iw[near] += p.w;
    ivx[near] += p.w * dx * dx;
    ivy[near] += p.w * dy * dy;
  }

  GmmModel model;
  for (std::size_t c = 0; c < c_n; ++c) {
    const auto i = chosen[c];
    double vx_c = var_x0, vy_c = var_y0;
    if (c_n > 1 && iw[c] > 0) {
      vx_c = std::max(options.var_floor, static_cast<double>(ivx[c] / iw[c]));
      vy_c = std::max(options.var_floor, static_cast<double>(ivy[c] / iw[c]));
    }
    model.components.push_back({pts[i].x, pts[i].y, vx_c, vy_c, 1.0 / components});
  }
  model.log_likelihood.push_back(gmm_log_likelihood(model.components, pts));

  std::vector<double> terms(c_n);
  std::vector<long double> nk(c_n), mx(c_n), my(c_n), qx(c_n), qy(c_n);
  std::vector<double> resp(pts.size() * c_n);
  for (int it = 0; it < options.max_iter; ++it) {
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const double lm = log_mix(model.components, pts[i].x, pts[i].y, terms);
      for (std::size_t c = 0; c < c_n; ++c) resp[i * c_n + c] = std::exp(terms[c] - lm);
    }
    std::fill(nk.begin(), nk.end(), 0.0L);
    std::fill(mx.begin(), mx.end(), 0.0L);
    std::fill(my.begin(), my.end(), 0.0L);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      for (std::size_t c = 0; c < c_n; ++c) {
        const long double r = pts[i].w * resp[i * c_n + c];
        nk[c] += r;
        mx[c] += r * pts[i].x;
        my[c] += r * pts[i].y;
      }
    }
    for (std::size_t c = 0; c < c_n; ++c) {
      if (nk[c] > 0) {
        model.components[c].mean_x = static_cast<double>(mx[c] / nk[c]);
        model.components[c].mean_y = static_cast<double>(my[c] / nk[c]);
      }
    }
    std::fill(qx.begin(), qx.end(), 0.0L);
    std::fill(qy.begin(), qy.end(), 0.0L);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      for (std::size_t c = 0; c < c_n; ++c) {
        const long double r = pts[i].w * resp[i * c_n + c];
        const double dx = pts[i].x - model.components[c].mean_x;
        const double dy = pts[i].y - model.components[c].mean_y;
        qx[c] += r * dx * dx;
        qy[c] += r * dy * dy;
      }
    }
    for (std::size_t c = 0; c < c_n; ++c) {
      auto& comp = model.components[c];
      comp.prior = static_cast<double>(nk[c] / wsum);
      if (nk[c] > 0) {
        comp.var_x = std::max(options.var_floor, static_cast<double>(qx[c] / nk[c]));
        comp.var_y = std::max(options.var_floor, static_cast<double>(qy[c] / nk[c]));
      }
    }
    const double ll = gmm_log_likelihood(model.components, pts);
    if (!std::isfinite(ll)) throw NumericError("gmm_fit: non-finite log-likelihood");
    const double gain = ll - model.log_likelihood.back();
    model.log_likelihood.push_back(ll);
    model.iterations = it + 1;
    if (gain < options.tol) {
      model.converged = true;
      break;
    }
  }
  return model;
}

std::vector<Ellipse> gmm_pointers(const GmmModel& model) {
  std::vector<Ellipse> out;
  for (const auto& c : model.components) out.push_back({c.mean_x, c.mean_y, std::sqrt(c.var_x), std::sqrt(c.var_y)});
  return out;
}

}  // namespace pnc
