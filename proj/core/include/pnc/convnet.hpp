#pragma once

// Small all-convolutional classifier: four conv+relu+maxpool stages, a 1x1
// (network-in-network) conv to class maps, global average pooling and
// softmax. Trained from scratch with momentum SGD.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pnc/tensor.hpp"

namespace pnc::net {

enum class LayerKind { conv, relu, maxpool2, nin1x1, gap, softmax };

std::string to_string(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::conv;
  std::string name;
  std::size_t channels_in = 0;
  std::size_t channels_out = 0;
  int kernel = 0;  // conv only; stride 1, pad kernel / 2
  int pad = 0;
};

struct Architecture {
  std::size_t input_channels = 1;
  std::vector<std::size_t> conv_channels{32, 64, 128, 256};
  int kernel = 5;
  std::size_t classes = 100;

  bool operator==(const Architecture&) const = default;
};

/// conv1 relu1 pool1 ... conv4 relu4 pool4 nin gap softmax.
std::vector<LayerSpec> layer_specs(const Architecture& arch);

/// Smallest input side that survives all pooling stages.
std::size_t min_input_side(const Architecture& arch);

template <typename S>
struct Param {
  std::string name;  // "<layer>.w" or "<layer>.b"
  BasicTensor<S> value;
  bool decay = false;  // weight decay applies to weights, not biases
};

/// Per-layer outputs of one forward pass, each shaped [C,H,W].
template <typename S>
struct Trace {
  std::vector<std::string> names;
  std::vector<BasicTensor<S>> outputs;

  bool contains(const std::string& name) const;
  /// Throws std::out_of_range for an unknown layer.
  const BasicTensor<S>& at(const std::string& name) const;
};

using ActivationTrace = Trace<float>;

template <typename S>
class Network {
 public:
  Network() = default;
  /// All weights zero.
  explicit Network(Architecture arch);
  /// He-normal weights, zero biases.
  static Network initialized(Architecture arch, std::uint64_t seed);

  const Architecture& architecture() const { return arch_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  std::size_t class_count() const { return arch_.classes; }

  std::vector<Param<S>>& params() { return params_; }
  const std::vector<Param<S>>& params() const { return params_; }
  BasicTensor<S>& param(const std::string& name);
  const BasicTensor<S>& param(const std::string& name) const;

  /// image: [input_channels, H, W]. Returns softmax scores; fills trace when given.
  std::vector<S> forward(const BasicTensor<S>& image, Trace<S>* trace = nullptr) const;

  template <typename T>
  Network<T> cast() const {
    Network<T> out(arch_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const auto& src = params_[i].value.storage();
      out.params()[i].value = BasicTensor<T>(params_[i].value.shape(), std::vector<T>(src.begin(), src.end()));
    }
    return out;
  }

 private:
  Architecture arch_;
  std::vector<LayerSpec> layers_;
  std::vector<Param<S>> params_;
};

template <typename S>
struct BackwardResult {
  S loss = 0;                                // mean cross-entropy
  std::vector<BasicTensor<S>> grads;         // aligned with Network::params()
  std::vector<BasicTensor<S>> input_grads;   // one per sample
};

/// Gradient of the mean cross-entropy over the batch.
template <typename S>
BackwardResult<S> backward(const Network<S>& net, std::span<const BasicTensor<S>> batch, std::span<const int> labels);

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 64;
  int epochs = 10;
  std::uint64_t seed = 0;
  double weight_decay = 1e-4;
  double lr_decay = 1.0;  // multiplied into the learning rate after each epoch
};

/// Momentum SGD: v = momentum * v - lr * (g + decay * w); w += v.
template <typename S>
class SgdOptimizer {
 public:
  SgdOptimizer(const Network<S>& net, double momentum, double weight_decay);
  void step(Network<S>& net, const std::vector<BasicTensor<S>>& grads, double learning_rate);

 private:
  double momentum_;
  double weight_decay_;
  std::vector<std::vector<S>> velocity_;
};

struct LabeledImages {
  const ByteTensor* images = nullptr;  // [N,H,W] bytes
  std::span<const int> labels;
  std::size_t size() const { return labels.size(); }
};

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0;
  double train_acc = 0;
  double val_acc = -1;  // -1 when no validation set was given
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Deterministic for a fixed seed. Throws NumericError if the loss turns non-finite.
std::vector<EpochMetrics> train(Network<float>& net, const LabeledImages& train_set, const LabeledImages* val_set,
                                const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Image i of an [N,H,W] byte stack as a [1,H,W] tensor in [0,1].
Tensor image_tensor(const ByteTensor& stack, std::size_t i);

int predict(const Network<float>& net, const Tensor& image);
double accuracy(const Network<float>& net, const LabeledImages& set);

std::string metrics_csv(const std::vector<EpochMetrics>& metrics);

void save_network(const std::filesystem::path& path, const Network<float>& net, const std::string& meta_json);
Network<float> load_network(const std::filesystem::path& path);

struct GradCheckEntry {
  std::string name;  // parameter name, or "input"
  double max_rel_error = 0;
  std::size_t probes = 0;
};

/// Central finite differences against backward(); relative error is
/// |a - n| / max(|a| + |n|, floor).
std::vector<GradCheckEntry> gradient_check(const Network<double>& net, std::span<const BasicTensor<double>> batch,
                                           std::span<const int> labels, double h = 1e-5, double floor = 1e-6);

}  // namespace pnc::net
