#include "pnc/count_classifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "pnc/error.hpp"
#include "pnc/io.hpp"
#include "pnc/rng.hpp"

namespace pnc {

namespace {

double dot(const std::vector<double>& w, std::span<const float> x) {
  double s = 0;
  for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * x[i];
  return s;
}

/// argmin_b sum_i max(0, 1 - y_i (s_i + b)); ties to the lowest b.
double refit_bias(const std::vector<double>& s, const std::vector<int>& y) {
  // Positive terms are active for b < a_i = 1 - s_i, negative ones for b > c_i = -1 - s_i.
  std::vector<double> a, c;
  for (std::size_t i = 0; i < s.size(); ++i) (y[i] > 0 ? a : c).push_back(y[i] > 0 ? 1 - s[i] : -1 - s[i]);
  std::sort(a.begin(), a.end());
  std::sort(c.begin(), c.end());
  std::vector<double> pa(a.size() + 1, 0.0), pc(c.size() + 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) pa[i + 1] = pa[i] + a[i];
  for (std::size_t i = 0; i < c.size(); ++i) pc[i + 1] = pc[i] + c[i];
  auto loss = [&](double b) {
    const auto ia = static_cast<std::size_t>(std::upper_bound(a.begin(), a.end(), b) - a.begin());
    const auto ic = static_cast<std::size_t>(std::lower_bound(c.begin(), c.end(), b) - c.begin());
    const double pos = (pa.back() - pa[ia]) - static_cast<double>(a.size() - ia) * b;
    const double neg = static_cast<double>(ic) * b - pc[ic];
    return pos + neg;
  };
  std::vector<double> cand(a);
  cand.insert(cand.end(), c.begin(), c.end());
  std::sort(cand.begin(), cand.end());
  double best_b = 0, best = std::numeric_limits<double>::infinity();
  for (double b : cand) {
    const double l = loss(b);
    if (l < best) {
      best = l;
      best_b = b;
    }
  }
  return best_b;
}

}  // namespace

std::string CountLabel::str() const { return saturated() ? std::to_string(c_max) + "+" : std::to_string(value); }

CountLabel saturate_count(long n, int c_max) {
  if (n < 0) throw std::invalid_argument("saturate_count: negative count");
  if (c_max < 1) throw std::invalid_argument("saturate_count: c_max must be >= 1");
  return {static_cast<int>(std::min<long>(n, c_max)), c_max};
}

CountLabel parse_count_label(const std::string& text, int c_max) {
  if (text.empty()) throw DataError("empty count label");
  const bool plus = text.back() == '+';
  const auto digits = plus ? text.substr(0, text.size() - 1) : text;
  if (digits.empty() || !std::all_of(digits.begin(), digits.end(), [](char ch) { return ch >= '0' && ch <= '9'; })) {
    throw DataError("bad count label '" + text + "'");
  }
  const long n = std::stol(digits);
  if (plus && n != c_max) throw DataError("count label '" + text + "' does not match C_max " + std::to_string(c_max));
  return saturate_count(n, c_max);
}

std::vector<float> extract_count_features(const net::ActivationTrace& trace) {
  std::string last_pool;
  for (const auto& name : trace.names) {
    if (name.rfind("pool", 0) == 0) last_pool = name;
  }
  if (last_pool.empty() || !trace.contains("nin") || !trace.contains("gap")) {
    throw std::invalid_argument("extract_count_features: trace lacks pool/nin/gap layers");
  }
  std::vector<float> out;
  for (const auto& part : {global_max_pool(trace.at(last_pool)), global_max_pool(trace.at("nin")),
                           global_avg_pool(trace.at("gap"))}) {
    const auto n = l2_normalize(part);
    out.insert(out.end(), n.begin(), n.end());
  }
  return out;
}

std::vector<double> LinearSvmModel::scores(std::span<const float> feature) const {
  if (feature.size() != feature_dim) {
    throw std::invalid_argument("svm: feature dimension " + std::to_string(feature.size()) + " != " +
                                std::to_string(feature_dim));
  }
  std::vector<double> s(labels.size());
  for (std::size_t c = 0; c < labels.size(); ++c) s[c] = dot(weights[c], feature) + bias[c];
  return s;
}

LinearSvmModel svm_train(const std::vector<std::vector<float>>& features, std::span<const int> labels,
                         const SvmOptions& options) {
  if (features.empty() || features.size() != labels.size()) {
    throw std::invalid_argument("svm_train: need aligned, non-empty features and labels");
  }
  if (!(options.lambda > 0) || options.epochs < 1) throw std::invalid_argument("svm_train: lambda > 0, epochs >= 1");
  const std::size_t n = features.size();
  const std::size_t dim = features[0].size();
  for (const auto& f : features) {
    if (f.size() != dim) throw std::invalid_argument("svm_train: inconsistent feature dimensions");
  }
  std::vector<int> y_count(n);
  for (std::size_t i = 0; i < n; ++i) y_count[i] = saturate_count(labels[i], options.c_max).value;

  LinearSvmModel model;
  model.feature_dim = dim;
  model.c_max = options.c_max;
  model.labels = y_count;
  std::sort(model.labels.begin(), model.labels.end());
  model.labels.erase(std::unique(model.labels.begin(), model.labels.end()), model.labels.end());
  model.weights.assign(model.labels.size(), std::vector<double>(dim, 0.0));
  model.bias.assign(model.labels.size(), 0.0);
  if (model.labels.size() == 1) {
    model.degenerate = true;
    model.bias[0] = 1.0;
    return model;
  }

  const double radius = 1.0 / std::sqrt(options.lambda);
  for (std::size_t c = 0; c < model.labels.size(); ++c) {
    auto& w = model.weights[c];
    double& b = model.bias[c];
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = y_count[i] == model.labels[c] ? 1 : -1;
    // w is held as scale * v so the shrink step is O(1). v[dim] is the
    // weight of a constant 1 feature that stands in for the bias while
    // stepping; an exact bias is refit once at the end.
    const std::size_t da = dim + 1;
    std::vector<double> v(da, 0.0);
    double scale = 1.0, vnorm2 = 0.0;
    std::vector<std::size_t> order(n);
    std::uint64_t t = 0;
    // suffix average over the second half of the steps; the last iterate of
    // Pegasos keeps jumping by ~1/(lambda t)
    const std::uint64_t total = static_cast<std::uint64_t>(options.epochs) * n;
    const std::uint64_t avg_from = total / 2 + 1;
    std::vector<long double> avg(da, 0.0L);
    for (int epoch = 0; epoch < options.epochs; ++epoch) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      Rng rng(derive_seed(options.seed, {0x73766dULL, static_cast<std::uint64_t>(epoch)}));
      rng.shuffle(order.begin(), order.end());
      for (auto i : order) {
        ++t;
        const double eta = 1.0 / (options.lambda * static_cast<double>(t));
        const auto& x = features[i];
        double margin = v[dim];
        for (std::size_t d = 0; d < dim; ++d) margin += v[d] * x[d];
        margin = y[i] * scale * margin;
        scale *= 1.0 - eta * options.lambda;
        if (scale == 0.0) {
          // First step (eta * lambda == 1) wipes w.
          std::fill(v.begin(), v.end(), 0.0);
          scale = 1.0;
          vnorm2 = 0.0;
        }
        if (margin < 1.0) {
          const double step = eta * y[i] / scale;
          for (std::size_t d = 0; d < da; ++d) {
            const double nv = v[d] + step * (d < dim ? static_cast<double>(x[d]) : 1.0);
            vnorm2 += nv * nv - v[d] * v[d];
            v[d] = nv;
          }
        }
        const double wnorm = std::abs(scale) * std::sqrt(std::max(0.0, vnorm2));
        if (wnorm > radius) scale *= radius / wnorm;
        if (t >= avg_from) {
          for (std::size_t d = 0; d < da; ++d) avg[d] += scale * v[d];
        }
      }
    }
    const auto k = static_cast<long double>(total - avg_from + 1);
    for (std::size_t d = 0; d < dim; ++d) w[d] = static_cast<double>(avg[d] / k);
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) s[i] = dot(w, features[i]);
    b = refit_bias(s, y);
    // Round to storage precision so a saved model predicts identically.
    for (double& e : w) {
      if (!std::isfinite(e)) throw NumericError("svm_train: non-finite weights");
      e = static_cast<float>(e);
    }
    b = static_cast<float>(b);
  }
  return model;
}

CountLabel svm_predict(const LinearSvmModel& model, std::span<const float> feature) {
  const auto s = model.scores(feature);
  std::size_t best = 0;
  for (std::size_t c = 1; c < s.size(); ++c) {
    if (s[c] > s[best]) best = c;
  }
  return {model.labels[best], model.c_max};
}

double svm_objective(const LinearSvmModel& model, std::size_t scorer, const std::vector<std::vector<float>>& features,
                     std::span<const int> labels, double lambda) {
  const auto& w = model.weights.at(scorer);
  double hinge = 0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const int y = saturate_count(labels[i], model.c_max).value == model.labels[scorer] ? 1 : -1;
    hinge += std::max(0.0, 1.0 - y * (dot(w, features[i]) + model.bias[scorer]));
  }
  double norm2 = 0;
  for (double e : w) norm2 += e * e;
  return 0.5 * lambda * norm2 + hinge / static_cast<double>(features.size());
}

void save_svm(const std::filesystem::path& path, const LinearSvmModel& model, const std::string& meta_json) {
  TensorMap map;
  nlohmann::json info = {{"c_max", model.c_max}, {"degenerate", model.degenerate}, {"labels", model.labels}};
  map.add_text("svm", info.dump());
  map.add_text("meta", meta_json);
  Tensor w({model.labels.size(), model.feature_dim});
  Tensor b({model.labels.size()});
  for (std::size_t c = 0; c < model.labels.size(); ++c) {
    for (std::size_t d = 0; d < model.feature_dim; ++d) w[c * model.feature_dim + d] = static_cast<float>(model.weights[c][d]);
    b[c] = static_cast<float>(model.bias[c]);
  }
  map.add("weights", w);
  map.add("bias", b);
  write_container(path, map);
}

LinearSvmModel load_svm(const std::filesystem::path& path) {
  const auto map = read_container(path);
  LinearSvmModel model;
  try {
    const auto info = nlohmann::json::parse(map.text("svm"));
    model.c_max = info.at("c_max").get<int>();
    model.degenerate = info.at("degenerate").get<bool>();
    model.labels = info.at("labels").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": bad svm record: " + e.what());
  }
  const auto& w = map.real("weights");
  const auto& b = map.real("bias");
  if (w.rank() != 2 || w.dim(0) != model.labels.size() || b.size() != model.labels.size()) {
    throw DataError(path.string() + ": svm tensors do not match the label list");
  }
  model.feature_dim = w.dim(1);
  for (std::size_t c = 0; c < model.labels.size(); ++c) {
    const auto row = w.data().subspan(c * model.feature_dim, model.feature_dim);
    model.weights.emplace_back(row.begin(), row.end());
    model.bias.push_back(b[c]);
  }
  return model;
}

}  // namespace pnc
