#pragma once

// Count head: pooled layer features and a one-vs-rest linear SVM over
// saturated count labels 0, 1, ..., C_max - 1, "C_max+".

#include <compare>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pnc/convnet.hpp"

namespace pnc {

inline constexpr int kDefaultCountMax = 4;

struct CountLabel {
  int value = 0;  // value == c_max means "c_max or more"
  int c_max = kDefaultCountMax;

  bool saturated() const { return value >= c_max; }
  /// "0".."3" or "4+".
  std::string str() const;
  bool operator==(const CountLabel& o) const { return value == o.value; }
  auto operator<=>(const CountLabel& o) const { return value <=> o.value; }
};

/// n < c_max -> n, otherwise c_max ("c_max+"). Throws on negative n.
CountLabel saturate_count(long n, int c_max = kDefaultCountMax);

/// Parses "3" or "4+".
CountLabel parse_count_label(const std::string& text, int c_max = kDefaultCountMax);

/// [global max of the last pooling layer | global max of the NIN maps | GAP
/// vector], each segment L2-normalised.
std::vector<float> extract_count_features(const net::ActivationTrace& trace);

struct LinearSvmModel {
  std::vector<int> labels;  // ascending count values, one scorer each
  std::size_t feature_dim = 0;
  std::vector<std::vector<double>> weights;
  std::vector<double> bias;
  int c_max = kDefaultCountMax;
  bool degenerate = false;  // trained on a single label

  std::vector<double> scores(std::span<const float> feature) const;
};

struct SvmOptions {
  double lambda = 1e-4;
  int epochs = 50;
  std::uint64_t seed = 0;
  int c_max = kDefaultCountMax;
};

/// Pegasos-style stochastic subgradient on the weights of each one-vs-rest
/// scorer (bias as a regularised constant feature), returning the average of
/// the second half of the iterates with the bias then refit to the exact
/// hinge minimiser. labels are raw counts, saturated here.
LinearSvmModel svm_train(const std::vector<std::vector<float>>& features, std::span<const int> labels,
                         const SvmOptions& options = {});

/// Argmax of the per-label scores, ties to the smaller count.
CountLabel svm_predict(const LinearSvmModel& model, std::span<const float> feature);

/// Mean regularised hinge objective of one scorer (for diagnostics and tests).
double svm_objective(const LinearSvmModel& model, std::size_t scorer, const std::vector<std::vector<float>>& features,
                     std::span<const int> labels, double lambda);

void save_svm(const std::filesystem::path& path, const LinearSvmModel& model, const std::string& meta_json);
LinearSvmModel load_svm(const std::filesystem::path& path);

}  // namespace pnc
