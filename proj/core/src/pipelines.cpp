#include "pnc/pipelines.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pnc/error.hpp"
#include "pnc/io.hpp"

namespace pnc {

CountLabel PncOutput::count_label(int c_max) const { return saturate_count(count, c_max); }

Heatmap c2p_heatmap(const net::ActivationTrace& trace, const net::Architecture& arch, int image_width,
                    int image_height) {
  const std::string layer = signature_layers(arch).first;
  const auto& t = trace.at(layer);
  std::vector<Grid2D> maps;
  maps.reserve(t.dim(0));
  for (std::size_t c = 0; c < t.dim(0); ++c) maps.push_back(channel_grid(t, c));
  auto hm = Heatmap::strided(channel_stack(maps), image_width, image_height, layer_stride(arch, layer));
  return upscale_heatmap(normalize_subtract_scaled_mean(hm, 2.0), image_width, image_height);
}

std::vector<Pointer> c2p_pointers(const Heatmap& heatmap, const CountLabel& count, const C2pOptions& options) {
  if (count.value == 0) return {};
  const int components = count.saturated() ? count.c_max : count.value;
  auto points = heatmap_to_points(heatmap, options.point_threshold);
  if (points.size() < static_cast<std::size_t>(components)) {
    points.clear();
    for (int y = 0; y < heatmap.image_height; ++y) {
      for (int x = 0; x < heatmap.image_width; ++x) points.push_back({x + 0.5, y + 0.5, 1.0});
    }
  }
  std::vector<Pointer> out;
  for (const auto& e : gmm_pointers(gmm_fit(points, components, options.seed, options.gmm))) out.emplace_back(e);
  return out;
}

PncOutput run_c2p(const Tensor& image, const net::Network<float>& net, const LinearSvmModel& svm,
                  const C2pOptions& options) {
  net::ActivationTrace trace;
  net.forward(image, &trace);
  const auto w = static_cast<int>(image.dim(2));
  const auto h = static_cast<int>(image.dim(1));
  const CountLabel count = svm_predict(svm, extract_count_features(trace));
  PncOutput out;
  out.method = "c2p";
  out.count = count.value;
  out.saturated = count.saturated();
  out.heatmap = c2p_heatmap(trace, net.architecture(), w, h);
  out.pointers = c2p_pointers(out.heatmap, count, options);
  return out;
}

PncOutput p2c_from_heatmap(const Heatmap& heatmap, const P2cOptions& options) {
  PncOutput out;
  out.method = "p2c";
  out.heatmap = heatmap;
  const auto points = heatmap_to_points(heatmap, options.point_threshold);
  if (points.empty()) return out;
  const double diag = std::hypot(heatmap.image_width, heatmap.image_height);
  const DensityPeaksParams params{options.d_c_fraction * diag, options.rho_min_fraction,
                                  options.delta_min_fraction * diag};
  const auto result = density_peaks(points, params);
  for (const auto& b : cluster_pointers(result, points)) out.pointers.emplace_back(b);
  out.count = static_cast<int>(out.pointers.size());
  return out;
}

PncOutput run_p2c(const Tensor& image, const net::Network<float>& net, const SignatureDictionary& dict,
                  const P2cOptions& options) {
  net::ActivationTrace trace;
  const auto scores = net.forward(image, &trace);
  const int cls = static_cast<int>(std::max_element(scores.begin(), scores.end()) - scores.begin());
  const auto& sig = dict.at(cls);
  const auto selection = top_features(dict, cls, std::min(options.k_last, sig.last.size()),
                                      std::min(options.k_prev, sig.prev.size()));
  const auto w = static_cast<int>(image.dim(2));
  const auto h = static_cast<int>(image.dim(1));
  auto out = p2c_from_heatmap(feature_selected_heatmap(trace, selection, net.architecture(), w, h), options);
  out.predicted_class = cls;
  return out;
}

std::string format_result(const PncOutput& out) {
  nlohmann::ordered_json j;
  j["image_id"] = out.image_id;
  j["method"] = out.method;
  if (out.saturated) {
    j["count"] = std::to_string(out.count) + "+";
  } else {
    j["count"] = out.count;
  }
  j["pointers"] = nlohmann::ordered_json::array();
  for (const auto& p : out.pointers) {
    if (const auto* b = std::get_if<BBox>(&p)) {
      j["pointers"].push_back({{"box", {b->x_min, b->y_min, b->x_max, b->y_max}}});
    } else {
      const auto& e = std::get<Ellipse>(p);
      j["pointers"].push_back({{"ellipse", {e.cx, e.cy, e.sx, e.sy}}});
    }
  }
  j["class"] = out.predicted_class;
  return j.dump();
}

std::vector<PncOutput> parse_results(const std::string& text) {
  std::vector<PncOutput> out;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      PncOutput r;
      r.image_id = j.at("image_id").get<std::string>();
      r.method = j.at("method").get<std::string>();
      const auto& c = j.at("count");
      if (c.is_string()) {
        const auto label = parse_count_label(c.get<std::string>());
        r.count = label.value;
        r.saturated = label.saturated();
      } else {
        r.count = c.get<int>();
        if (r.count < 0) throw DataError("negative count");
      }
      for (const auto& p : j.at("pointers")) {
        if (p.contains("box")) {
          const auto v = p.at("box").get<std::vector<double>>();
          if (v.size() != 4) throw DataError("box needs 4 values");
          r.pointers.emplace_back(BBox{v[0], v[1], v[2], v[3]});
        } else {
          const auto v = p.at("ellipse").get<std::vector<double>>();
          if (v.size() != 4) throw DataError("ellipse needs 4 values");
          r.pointers.emplace_back(Ellipse{v[0], v[1], v[2], v[3]});
        }
      }
      r.predicted_class = j.value("class", -1);
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("results line " + std::to_string(lineno) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("results line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void save_results(const std::filesystem::path& path, std::vector<PncOutput> results) {
  std::stable_sort(results.begin(), results.end(), [](const auto& a, const auto& b) { return a.image_id < b.image_id; });
  std::string text;
  for (const auto& r : results) text += format_result(r) + "\n";
  write_text_file(path, text);
}

std::vector<PncOutput> load_results(const std::filesystem::path& path) { return parse_results(read_text_file(path)); }

}  // namespace pnc
