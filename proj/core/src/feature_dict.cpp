#include "pnc/feature_dict.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "pnc/error.hpp"
#include "pnc/io.hpp"

namespace pnc {

namespace {

std::vector<RankedChannel> rank(const std::vector<long double>& sums, std::size_t n) {
  std::vector<RankedChannel> out(sums.size());
  for (std::size_t c = 0; c < sums.size(); ++c) {
    // Scores are kept at storage precision so saved dictionaries reload exactly.
    out[c] = {c, static_cast<float>(sums[c] / static_cast<long double>(n))};
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
  return out;
}

Tensor ranking_tensor(const std::vector<ClassSignature>& classes, bool last, bool scores) {
  const std::size_t width = classes.empty() ? 0 : (last ? classes[0].last.size() : classes[0].prev.size());
  Tensor t({classes.size(), width});
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const auto& r = last ? classes[i].last : classes[i].prev;
    if (r.size() != width) throw std::invalid_argument("dictionary rankings differ in length");
    for (std::size_t j = 0; j < width; ++j) {
      t[i * width + j] = scores ? static_cast<float>(r[j].score) : static_cast<float>(r[j].channel);
    }
  }
  return t;
}

}  // namespace

bool SignatureDictionary::contains(int class_id) const {
  return std::any_of(classes.begin(), classes.end(), [&](const auto& c) { return c.class_id == class_id; });
}

const ClassSignature& SignatureDictionary::at(int class_id) const {
  for (const auto& c : classes) {
    if (c.class_id == class_id) return c;
  }
  throw std::out_of_range("dictionary has no class " + std::to_string(class_id));
}

DictionaryBuilder::DictionaryBuilder(std::string last_layer, std::string prev_layer)
    : last_layer_(std::move(last_layer)), prev_layer_(std::move(prev_layer)) {}

void DictionaryBuilder::add(int class_id, std::span<const float> last_pooled, std::span<const float> prev_pooled) {
  auto it = std::lower_bound(sums_.begin(), sums_.end(), class_id,
                             [](const auto& e, int id) { return e.first < id; });
  if (it == sums_.end() || it->first != class_id) {
    Sums s;
    s.last.assign(last_pooled.size(), 0.0L);
    s.prev.assign(prev_pooled.size(), 0.0L);
    it = sums_.insert(it, {class_id, std::move(s)});
  }
  auto& s = it->second;
  if (s.last.size() != last_pooled.size() || s.prev.size() != prev_pooled.size()) {
    throw std::invalid_argument("dictionary: pooled vector length changed between samples");
  }
  for (std::size_t c = 0; c < last_pooled.size(); ++c) s.last[c] += last_pooled[c];
  for (std::size_t c = 0; c < prev_pooled.size(); ++c) s.prev[c] += prev_pooled[c];
  ++s.n;
}

void DictionaryBuilder::add_trace(int class_id, const net::ActivationTrace& trace) {
  add(class_id, global_max_pool(trace.at(last_layer_)), global_max_pool(trace.at(prev_layer_)));
}

SignatureDictionary DictionaryBuilder::finish(const std::vector<int>& expected_classes) const {
  SignatureDictionary dict;
  dict.last_layer = last_layer_;
  dict.prev_layer = prev_layer_;
  for (int id : expected_classes) {
    const auto it = std::find_if(sums_.begin(), sums_.end(), [&](const auto& e) { return e.first == id; });
    if (it == sums_.end() || it->second.n == 0) {
      throw DataError("dictionary: class " + std::to_string(id) + " has no samples");
    }
  }
  for (const auto& [id, s] : sums_) dict.classes.push_back({id, rank(s.last, s.n), rank(s.prev, s.n)});
  return dict;
}

std::pair<std::string, std::string> signature_layers(const net::Architecture& arch) {
  const auto n = arch.conv_channels.size();
  if (n < 2) throw std::invalid_argument("signature layers need at least two conv layers");
  return {"relu" + std::to_string(n), "relu" + std::to_string(n - 1)};
}

SignatureDictionary build_dictionary(const ByteTensor& images, std::span<const int> labels,
                                     const net::Network<float>& net) {
  if (images.rank() != 3 || images.dim(0) != labels.size()) {
    throw std::invalid_argument("build_dictionary: images and labels differ");
  }
  const auto [last, prev] = signature_layers(net.architecture());
  DictionaryBuilder builder(last, prev);
  net::ActivationTrace trace;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    net.forward(net::image_tensor(images, i), &trace);
    builder.add_trace(labels[i], trace);
  }
  std::vector<int> expected(net.class_count());
  std::iota(expected.begin(), expected.end(), 0);
  return builder.finish(expected);
}

FeatureSelection top_features(const SignatureDictionary& dict, int class_id, std::size_t k_last, std::size_t k_prev) {
  const auto& sig = dict.at(class_id);
  if (k_last > sig.last.size() || k_prev > sig.prev.size()) {
    throw std::invalid_argument("top_features: k exceeds the layer's channel count");
  }
  FeatureSelection sel;
  for (std::size_t i = 0; i < k_last; ++i) sel.push_back({dict.last_layer, sig.last[i].channel});
  for (std::size_t i = 0; i < k_prev; ++i) sel.push_back({dict.prev_layer, sig.prev[i].channel});
  return sel;
}

double layer_stride(const net::Architecture& arch, const std::string& layer) {
  const auto n = arch.conv_channels.size();
  if (layer == "nin" || layer == "gap" || layer == "softmax") return static_cast<double>(std::size_t{1} << n);
  for (const char* prefix : {"conv", "relu", "pool"}) {
    const std::string p(prefix);
    if (layer.rfind(p, 0) != 0) continue;
    const auto idx = std::stoul(layer.substr(p.size()));
    if (idx < 1 || idx > n) break;
    return static_cast<double>(std::size_t{1} << (p == "pool" ? idx : idx - 1));
  }
  throw std::invalid_argument("unknown layer '" + layer + "'");
}

Heatmap feature_selected_heatmap(const net::ActivationTrace& trace, const FeatureSelection& selection,
                                 const net::Architecture& arch, int image_width, int image_height) {
  if (selection.empty()) throw std::invalid_argument("feature_selected_heatmap: empty selection");
  FeatureSelection sorted = selection;
  std::sort(sorted.begin(), sorted.end());
  std::vector<Heatmap> maps;
  maps.reserve(sorted.size());
  for (const auto& f : sorted) {
    const auto& t = trace.at(f.layer);
    if (f.channel >= t.dim(0)) throw std::invalid_argument("feature_selected_heatmap: channel out of range");
    const auto hm = Heatmap::strided(channel_grid(t, f.channel), image_width, image_height, layer_stride(arch, f.layer));
    maps.push_back(upscale_heatmap(hm, image_width, image_height));
  }
  return normalize_subtract_scaled_mean(channel_stack(maps), 2.0);
}

void save_dictionary(const std::filesystem::path& path, const SignatureDictionary& dict, const std::string& meta_json) {
  TensorMap map;
  nlohmann::json layers = {{"last", dict.last_layer}, {"prev", dict.prev_layer}};
  map.add_text("layers", layers.dump());
  map.add_text("meta", meta_json);
  Tensor ids({dict.classes.size()});
  for (std::size_t i = 0; i < dict.classes.size(); ++i) ids[i] = static_cast<float>(dict.classes[i].class_id);
  map.add("class_ids", ids);
  map.add("last.channels", ranking_tensor(dict.classes, true, false));
  map.add("last.scores", ranking_tensor(dict.classes, true, true));
  map.add("prev.channels", ranking_tensor(dict.classes, false, false));
  map.add("prev.scores", ranking_tensor(dict.classes, false, true));
  write_container(path, map);
}

SignatureDictionary load_dictionary(const std::filesystem::path& path) {
  const auto map = read_container(path);
  SignatureDictionary dict;
  try {
    const auto layers = nlohmann::json::parse(map.text("layers"));
    dict.last_layer = layers.at("last").get<std::string>();
    dict.prev_layer = layers.at("prev").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": bad layer record: " + e.what());
  }
  const auto& ids = map.real("class_ids");
  auto read_rank = [&](const std::string& prefix, std::size_t row) {
    const auto& ch = map.real(prefix + ".channels");
    const auto& sc = map.real(prefix + ".scores");
    if (ch.rank() != 2 || ch.shape() != sc.shape() || ch.dim(0) != ids.size()) {
      throw DataError(path.string() + ": malformed " + prefix + " ranking");
    }
    std::vector<RankedChannel> out;
    for (std::size_t j = 0; j < ch.dim(1); ++j) {
      out.push_back({static_cast<std::size_t>(ch[row * ch.dim(1) + j]), sc[row * ch.dim(1) + j]});
    }
    return out;
  };
  for (std::size_t i = 0; i < ids.size(); ++i) {
    dict.classes.push_back({static_cast<int>(ids[i]), read_rank("last", i), read_rank("prev", i)});
  }
  return dict;
}

}  // namespace pnc
