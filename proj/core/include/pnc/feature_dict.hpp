#pragma once

// Per-class ranking of feature maps ("signatures") and the heatmap built
// from the top-ranked maps of a predicted class.

#include <filesystem>
#include <string>
#include <vector>

#include "pnc/convnet.hpp"
#include "pnc/tensor.hpp"

namespace pnc {

struct RankedChannel {
  std::size_t channel = 0;
  double score = 0;  // class mean of per-sample global max activation
  bool operator==(const RankedChannel&) const = default;
};

struct ClassSignature {
  int class_id = 0;
  std::vector<RankedChannel> last;  // ranking for SignatureDictionary::last_layer
  std::vector<RankedChannel> prev;  // ranking for SignatureDictionary::prev_layer
  bool operator==(const ClassSignature&) const = default;
};

struct SignatureDictionary {
  std::string last_layer = "relu4";
  std::string prev_layer = "relu3";
  std::vector<ClassSignature> classes;  // ascending class_id

  bool contains(int class_id) const;
  /// Throws std::out_of_range for an unknown class.
  const ClassSignature& at(int class_id) const;
  bool operator==(const SignatureDictionary&) const = default;
};

/// Accumulates pooled layer vectors per class. Scores sort non-increasing,
/// ties to the lower channel.
class DictionaryBuilder {
 public:
  DictionaryBuilder(std::string last_layer, std::string prev_layer);
  void add(int class_id, std::span<const float> last_pooled, std::span<const float> prev_pooled);
  void add_trace(int class_id, const net::ActivationTrace& trace);
  /// Throws DataError when an expected class has no samples.
  SignatureDictionary finish(const std::vector<int>& expected_classes) const;

 private:
  struct Sums {
    std::size_t n = 0;
    std::vector<long double> last, prev;
  };
  std::string last_layer_, prev_layer_;
  std::vector<std::pair<int, Sums>> sums_;  // sorted by class id
};

/// The two deepest rectified conv outputs, e.g. {"relu4", "relu3"}.
std::pair<std::string, std::string> signature_layers(const net::Architecture& arch);

/// Runs the network on every image; every class in [0, classes) needs a sample.
SignatureDictionary build_dictionary(const ByteTensor& images, std::span<const int> labels,
                                     const net::Network<float>& net);

struct FeatureRef {
  std::string layer;
  std::size_t channel = 0;
  bool operator==(const FeatureRef&) const = default;
  auto operator<=>(const FeatureRef&) const = default;
};

using FeatureSelection = std::vector<FeatureRef>;

/// First k_last channels of the last-layer ranking followed by the first
/// k_prev of the previous layer.
FeatureSelection top_features(const SignatureDictionary& dict, int class_id, std::size_t k_last, std::size_t k_prev);

/// Upscales each selected map to the image, sums them and applies
/// normalize_subtract_scaled_mean(k = 2). Maps are summed in canonical
/// (layer, channel) order so the result does not depend on selection order.
Heatmap feature_selected_heatmap(const net::ActivationTrace& trace, const FeatureSelection& selection,
                                 const net::Architecture& arch, int image_width, int image_height);

/// Pixel stride of a named layer's output relative to the input.
double layer_stride(const net::Architecture& arch, const std::string& layer);

void save_dictionary(const std::filesystem::path& path, const SignatureDictionary& dict, const std::string& meta_json);
SignatureDictionary load_dictionary(const std::filesystem::path& path);

}  // namespace pnc
