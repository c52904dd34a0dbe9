#pragma once

// Count-then-point (C2P) and point-then-count (P2C) runners and their
// JSON-lines result records.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pnc/clustering.hpp"
#include "pnc/convnet.hpp"
#include "pnc/count_classifier.hpp"
#include "pnc/feature_dict.hpp"
#include "pnc/tensor.hpp"

namespace pnc {

struct PncOutput {
  std::string image_id;
  std::string method;  // "c2p" or "p2c"
  int count = 0;
  bool saturated = false;  // C2P "C_max+" label
  std::vector<Pointer> pointers;
  int predicted_class = -1;  // P2C only
  Heatmap heatmap;           // not serialised

  CountLabel count_label(int c_max = kDefaultCountMax) const;
};

struct C2pOptions {
  std::uint64_t seed = 0;
  double point_threshold = 0.0;
  GmmOptions gmm;
};

/// Channel sum of the deepest rectified conv layer, 2x-mean normalised and
/// upscaled to the image.
Heatmap c2p_heatmap(const net::ActivationTrace& trace, const net::Architecture& arch, int image_width,
                    int image_height);

/// Ellipses for a predicted count: none for 0, C_max components for "C_max+".
/// When the heatmap has fewer heat points than components, every pixel of
/// the image is used with unit weight instead.
std::vector<Pointer> c2p_pointers(const Heatmap& heatmap, const CountLabel& count, const C2pOptions& options);

PncOutput run_c2p(const Tensor& image, const net::Network<float>& net, const LinearSvmModel& svm,
                  const C2pOptions& options = {});

struct P2cOptions {
  std::size_t k_last = 20;
  std::size_t k_prev = 50;
  double point_threshold = 0.0;
  double d_c_fraction = 0.02;        // of the image diagonal
  double rho_min_fraction = 0.1;     // of the maximum density
  double delta_min_fraction = 0.15;  // of the image diagonal
};

/// Count and box pointers from one density-peaks result; an empty point set means zero objects.
PncOutput p2c_from_heatmap(const Heatmap& heatmap, const P2cOptions& options);

/// k_last / k_prev are clipped to the channel counts of the signature layers.
PncOutput run_p2c(const Tensor& image, const net::Network<float>& net, const SignatureDictionary& dict,
                  const P2cOptions& options = {});

/// {"image_id","method","count","pointers":[{"box":[...]}|{"ellipse":[cx,cy,sx,sy]}],"class"}
std::string format_result(const PncOutput& out);
std::vector<PncOutput> parse_results(const std::string& text);

/// Writes one line per result, sorted by image_id.
void save_results(const std::filesystem::path& path, std::vector<PncOutput> results);
std::vector<PncOutput> load_results(const std::filesystem::path& path);

}  // namespace pnc
