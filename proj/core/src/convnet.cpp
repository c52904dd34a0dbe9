#include "pnc/convnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "pnc/error.hpp"
#include "pnc/io.hpp"
#include "pnc/rng.hpp"

namespace pnc::net {

namespace {

template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MapMat = Eigen::Map<RowMat<S>>;
template <typename S>
using CMapMat = Eigen::Map<const RowMat<S>>;

// Per-layer state kept for the backward pass.
template <typename S>
struct Cache {
  std::vector<BasicTensor<S>> out;
  std::vector<std::vector<S>> col;                // conv: im2col of the layer input
  std::vector<std::vector<std::uint32_t>> arg;    // maxpool: flat input index of each output
};

template <typename S>
void im2col(const BasicTensor<S>& x, int k, int pad, std::vector<S>& col) {
  const auto c_in = x.dim(0);
  const auto h = static_cast<long>(x.dim(1));
  const auto w = static_cast<long>(x.dim(2));
  col.assign(c_in * k * k * h * w, S(0));
  S* dst = col.data();
  for (std::size_t c = 0; c < c_in; ++c) {
    const S* src = x.data().data() + c * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        for (long y = 0; y < h; ++y) {
          const long sy = y + ky - pad;
          if (sy < 0 || sy >= h) {
            dst += w;
            continue;
          }
          const S* row = src + sy * w;
          for (long xx = 0; xx < w; ++xx) {
            const long sx = xx + kx - pad;
            *dst++ = (sx >= 0 && sx < w) ? row[sx] : S(0);
          }
        }
      }
    }
  }
}

template <typename S>
void col2im(const std::vector<S>& col, std::size_t c_in, long h, long w, int k, int pad, BasicTensor<S>& dx) {
  dx = BasicTensor<S>({c_in, static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
  const S* src = col.data();
  for (std::size_t c = 0; c < c_in; ++c) {
    S* plane = dx.data().data() + c * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        for (long y = 0; y < h; ++y) {
          const long sy = y + ky - pad;
          if (sy < 0 || sy >= h) {
            src += w;
            continue;
          }
          S* row = plane + sy * w;
          for (long xx = 0; xx < w; ++xx, ++src) {
            const long sx = xx + kx - pad;
            if (sx >= 0 && sx < w) row[sx] += *src;
          }
        }
      }
    }
  }
}

template <typename S>
void check_input(const Network<S>& net, const BasicTensor<S>& image) {
  const auto& arch = net.architecture();
  if (image.rank() != 3 || image.dim(0) != arch.input_channels) {
    throw std::invalid_argument("network input must be [" + std::to_string(arch.input_channels) + ",H,W]");
  }
  const auto side = min_input_side(arch);
  if (image.dim(1) < side || image.dim(2) < side) {
    throw std::invalid_argument("network input smaller than " + std::to_string(side) + " pixels");
  }
}

template <typename S>
void forward_cached(const Network<S>& net, const BasicTensor<S>& image, Cache<S>& cache) {
  check_input(net, image);
  const auto& layers = net.layers();
  cache.out.resize(layers.size());
  cache.col.resize(layers.size());
  cache.arg.resize(layers.size());
  const BasicTensor<S>* x = &image;
  std::size_t p = 0;  // parameter cursor
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& spec = layers[l];
    auto& y = cache.out[l];
    const std::size_t h = x->dim(1), w = x->dim(2), hw = h * w;
    switch (spec.kind) {
      case LayerKind::conv:
      case LayerKind::nin1x1: {
        const auto& wt = net.params()[p].value;
        const auto& b = net.params()[p + 1].value;
        p += 2;
        const auto kk = static_cast<std::size_t>(spec.kernel * spec.kernel);
        y = BasicTensor<S>({spec.channels_out, h, w});
        MapMat<S> out(y.data().data(), spec.channels_out, hw);
        CMapMat<S> wm(wt.data().data(), spec.channels_out, spec.channels_in * kk);
        if (spec.kernel == 1) {
          out.noalias() = wm * CMapMat<S>(x->data().data(), spec.channels_in, hw);
        } else {
          im2col(*x, spec.kernel, spec.pad, cache.col[l]);
          out.noalias() = wm * CMapMat<S>(cache.col[l].data(), spec.channels_in * kk, hw);
        }
        for (std::size_t c = 0; c < spec.channels_out; ++c) out.row(c).array() += b[c];
        break;
      }
      case LayerKind::relu: {
        y = *x;
        for (auto& v : y.storage()) v = v > S(0) ? v : S(0);
        break;
      }
      case LayerKind::maxpool2: {
        const std::size_t oh = h / 2, ow = w / 2, c_n = x->dim(0);
        y = BasicTensor<S>({c_n, oh, ow});
        auto& arg = cache.arg[l];
        arg.resize(c_n * oh * ow);
        const S* in = x->data().data();
        S* o = y.data().data();
        for (std::size_t c = 0; c < c_n; ++c) {
          for (std::size_t r = 0; r < oh; ++r) {
            for (std::size_t q = 0; q < ow; ++q) {
              std::size_t best = c * hw + 2 * r * w + 2 * q;
              for (std::size_t idx : {best + 1, best + w, best + w + 1}) {
                if (in[idx] > in[best]) best = idx;
              }
              const std::size_t oi = (c * oh + r) * ow + q;
              o[oi] = in[best];
              arg[oi] = static_cast<std::uint32_t>(best);
            }
          }
        }
        break;
      }
      case LayerKind::gap: {
        const std::size_t c_n = x->dim(0);
        y = BasicTensor<S>({c_n, 1, 1});
        for (std::size_t c = 0; c < c_n; ++c) {
          long double sum = 0;
          for (S v : x->slice(c)) sum += v;
          y[c] = static_cast<S>(sum / static_cast<long double>(hw));
        }
        break;
      }
      case LayerKind::softmax: {
        y = *x;
        auto& v = y.storage();
        const S m = *std::max_element(v.begin(), v.end());
        long double z = 0;
        for (auto& e : v) {
          e = std::exp(e - m);
          z += e;
        }
        for (auto& e : v) e = static_cast<S>(e / z);
        break;
      }
    }
    x = &y;
  }
}

/// Accumulates d(loss)/d(params) for one sample into grads; returns the loss.
template <typename S>
S backward_sample(const Network<S>& net, const BasicTensor<S>& image, int label, Cache<S>& cache,
                  std::vector<BasicTensor<S>>& grads, BasicTensor<S>* input_grad) {
  forward_cached(net, image, cache);
  const auto& layers = net.layers();
  const auto& probs = cache.out.back().storage();
  const S loss = -std::log(std::max(probs[static_cast<std::size_t>(label)], std::numeric_limits<S>::min()));

  // Gradient w.r.t. the softmax input (GAP output).
  BasicTensor<S> g({probs.size(), 1, 1}, std::vector<S>(probs.begin(), probs.end()));
  g[static_cast<std::size_t>(label)] -= S(1);
  BasicTensor<S> gx;
  std::size_t p = net.params().size();
  for (std::size_t l = layers.size() - 1; l-- > 0;) {
    const auto& spec = layers[l];
    const BasicTensor<S>& x = l == 0 ? image : cache.out[l - 1];
    const std::size_t h = x.dim(1), w = x.dim(2), hw = h * w;
    const bool need_input = l > 0 || input_grad != nullptr;
    switch (spec.kind) {
      case LayerKind::conv:
      case LayerKind::nin1x1: {
        p -= 2;
        const auto& wt = net.params()[p].value;
        auto& gw = grads[p];
        auto& gb = grads[p + 1];
        const auto kk = static_cast<std::size_t>(spec.kernel * spec.kernel);
        CMapMat<S> gy(g.data().data(), spec.channels_out, hw);
        const S* in = spec.kernel == 1 ? x.data().data() : cache.col[l].data();
        CMapMat<S> xin(in, spec.channels_in * kk, hw);
        MapMat<S>(gw.data().data(), spec.channels_out, spec.channels_in * kk).noalias() += gy * xin.transpose();
        // plain loop: Eigen's vectorised sum peels by address, so its rounding
        // would depend on where the buffer happens to be allocated
        for (std::size_t c = 0; c < spec.channels_out; ++c) {
          const S* row = g.data().data() + c * hw;
          S acc = 0;
          for (std::size_t j = 0; j < hw; ++j) acc += row[j];
          gb[c] += acc;
        }
        if (need_input) {
          CMapMat<S> wm(wt.data().data(), spec.channels_out, spec.channels_in * kk);
          if (spec.kernel == 1) {
            gx = BasicTensor<S>({spec.channels_in, h, w});
            MapMat<S>(gx.data().data(), spec.channels_in, hw).noalias() = wm.transpose() * gy;
          } else {
            std::vector<S> dcol(spec.channels_in * kk * hw);
            MapMat<S>(dcol.data(), spec.channels_in * kk, hw).noalias() = wm.transpose() * gy;
            col2im(dcol, spec.channels_in, static_cast<long>(h), static_cast<long>(w), spec.kernel, spec.pad, gx);
          }
        }
        break;
      }
      case LayerKind::relu: {
        gx = g;
        const auto& xs = x.storage();
        auto& gs = gx.storage();
        for (std::size_t i = 0; i < gs.size(); ++i) {
          if (!(xs[i] > S(0))) gs[i] = S(0);
        }
        break;
      }
      case LayerKind::maxpool2: {
        gx = BasicTensor<S>(x.shape());
        const auto& arg = cache.arg[l];
        for (std::size_t i = 0; i < arg.size(); ++i) gx[arg[i]] += g[i];
        break;
      }
      case LayerKind::gap: {
        gx = BasicTensor<S>(x.shape());
        for (std::size_t c = 0; c < x.dim(0); ++c) {
          const S v = g[c] / static_cast<S>(hw);
          for (auto& e : gx.slice(c)) e = v;
        }
        break;
      }
      case LayerKind::softmax:
        break;  // folded into the loss gradient above
    }
    if (l == 0) {
      if (input_grad != nullptr) *input_grad = std::move(gx);
    } else {
      std::swap(g, gx);
    }
  }
  return loss;
}

template <typename S>
std::vector<BasicTensor<S>> zero_grads(const Network<S>& net) {
  std::vector<BasicTensor<S>> grads;
  grads.reserve(net.params().size());
  for (const auto& prm : net.params()) grads.emplace_back(prm.value.shape());
  return grads;
}

nlohmann::json arch_to_json(const Architecture& a) {
  return {{"input_channels", a.input_channels}, {"conv_channels", a.conv_channels}, {"kernel", a.kernel},
          {"classes", a.classes}};
}

Architecture arch_from_json(const nlohmann::json& j) {
  Architecture a;
  a.input_channels = j.at("input_channels").get<std::size_t>();
  a.conv_channels = j.at("conv_channels").get<std::vector<std::size_t>>();
  a.kernel = j.at("kernel").get<int>();
  a.classes = j.at("classes").get<std::size_t>();
  return a;
}

}  // namespace

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool2: return "maxpool2";
    case LayerKind::nin1x1: return "nin1x1";
    case LayerKind::gap: return "gap";
    case LayerKind::softmax: return "softmax";
  }
  return "?";
}

std::vector<LayerSpec> layer_specs(const Architecture& arch) {
  if (arch.conv_channels.empty()) throw std::invalid_argument("architecture needs at least one conv layer");
  if (arch.kernel < 1 || arch.kernel % 2 == 0) throw std::invalid_argument("conv kernel must be odd and positive");
  if (arch.classes < 1 || arch.input_channels < 1) throw std::invalid_argument("architecture needs classes and inputs");
  std::vector<LayerSpec> out;
  std::size_t c = arch.input_channels;
  for (std::size_t i = 0; i < arch.conv_channels.size(); ++i) {
    const auto id = std::to_string(i + 1);
    const auto c_out = arch.conv_channels[i];
    if (c_out == 0) throw std::invalid_argument("conv layer with zero channels");
    out.push_back({LayerKind::conv, "conv" + id, c, c_out, arch.kernel, arch.kernel / 2});
    out.push_back({LayerKind::relu, "relu" + id, c_out, c_out, 0, 0});
    out.push_back({LayerKind::maxpool2, "pool" + id, c_out, c_out, 0, 0});
    c = c_out;
  }
  out.push_back({LayerKind::nin1x1, "nin", c, arch.classes, 1, 0});
  out.push_back({LayerKind::gap, "gap", arch.classes, arch.classes, 0, 0});
  out.push_back({LayerKind::softmax, "softmax", arch.classes, arch.classes, 0, 0});
  return out;
}

std::size_t min_input_side(const Architecture& arch) { return std::size_t{1} << arch.conv_channels.size(); }

template <typename S>
bool Trace<S>::contains(const std::string& name) const {
  return std::find(names.begin(), names.end(), name) != names.end();
}

template <typename S>
const BasicTensor<S>& Trace<S>::at(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw std::out_of_range("trace has no layer '" + name + "'");
  return outputs[static_cast<std::size_t>(it - names.begin())];
}

template <typename S>
Network<S>::Network(Architecture arch) : arch_(std::move(arch)), layers_(layer_specs(arch_)) {
  for (const auto& spec : layers_) {
    if (spec.kind != LayerKind::conv && spec.kind != LayerKind::nin1x1) continue;
    const auto kk = static_cast<std::size_t>(spec.kernel * spec.kernel);
    params_.push_back({spec.name + ".w", BasicTensor<S>({spec.channels_out, spec.channels_in * kk}), true});
    params_.push_back({spec.name + ".b", BasicTensor<S>({spec.channels_out}), false});
  }
}

template <typename S>
Network<S> Network<S>::initialized(Architecture arch, std::uint64_t seed) {
  Network net(std::move(arch));
  Rng rng(derive_seed(seed, {0x6e6574ULL}));
  for (auto& prm : net.params_) {
    if (!prm.decay) continue;
    const double fan_in = static_cast<double>(prm.value.dim(1));
    const double sd = std::sqrt(2.0 / fan_in);
    for (auto& v : prm.value.storage()) v = static_cast<S>(sd * rng.normal());
  }
  return net;
}

template <typename S>
BasicTensor<S>& Network<S>::param(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return p.value;
  }
  throw std::out_of_range("network has no parameter '" + name + "'");
}

template <typename S>
const BasicTensor<S>& Network<S>::param(const std::string& name) const {
  return const_cast<Network*>(this)->param(name);
}

template <typename S>
std::vector<S> Network<S>::forward(const BasicTensor<S>& image, Trace<S>* trace) const {
  Cache<S> cache;
  forward_cached(*this, image, cache);
  std::vector<S> scores = cache.out.back().storage();
  if (trace != nullptr) {
    trace->names.clear();
    for (const auto& spec : layers_) trace->names.push_back(spec.name);
    trace->outputs = std::move(cache.out);
  }
  return scores;
}

template <typename S>
BackwardResult<S> backward(const Network<S>& net, std::span<const BasicTensor<S>> batch, std::span<const int> labels) {
  if (batch.empty()) throw std::invalid_argument("backward: empty batch");
  if (batch.size() != labels.size()) throw std::invalid_argument("backward: batch and labels differ in length");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= net.class_count()) {
      throw std::invalid_argument("backward: label " + std::to_string(y) + " out of range");
    }
  }
  BackwardResult<S> res;
  res.grads = zero_grads(net);
  res.input_grads.resize(batch.size());
  Cache<S> cache;
  long double loss = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    loss += backward_sample(net, batch[i], labels[i], cache, res.grads, &res.input_grads[i]);
  }
  const S inv = S(1) / static_cast<S>(batch.size());
  for (auto& g : res.grads) {
    for (auto& v : g.storage()) v *= inv;
  }
  for (auto& g : res.input_grads) {
    for (auto& v : g.storage()) v *= inv;
  }
  res.loss = static_cast<S>(loss / static_cast<long double>(batch.size()));
  return res;
}

template <typename S>
SgdOptimizer<S>::SgdOptimizer(const Network<S>& net, double momentum, double weight_decay)
    : momentum_(momentum), weight_decay_(weight_decay) {
  for (const auto& p : net.params()) velocity_.emplace_back(p.value.size(), S(0));
}

template <typename S>
void SgdOptimizer<S>::step(Network<S>& net, const std::vector<BasicTensor<S>>& grads, double learning_rate) {
  auto& params = net.params();
  if (grads.size() != params.size()) throw std::invalid_argument("sgd: gradient list does not match parameters");
  const auto mu = static_cast<S>(momentum_);
  const auto lr = static_cast<S>(learning_rate);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& w = params[i].value.storage();
    const auto& g = grads[i].storage();
    auto& v = velocity_[i];
    const S decay = params[i].decay ? static_cast<S>(weight_decay_) : S(0);
    for (std::size_t j = 0; j < w.size(); ++j) {
      v[j] = mu * v[j] - lr * (g[j] + decay * w[j]);
      w[j] += v[j];
    }
  }
}

Tensor image_tensor(const ByteTensor& stack, std::size_t i) {
  const auto px = stack.slice(i);
  Tensor t({1, stack.dim(1), stack.dim(2)});
  for (std::size_t j = 0; j < px.size(); ++j) t[j] = px[j] / 255.0f;
  return t;
}

int predict(const Network<float>& net, const Tensor& image) {
  const auto scores = net.forward(image);
  return static_cast<int>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

double accuracy(const Network<float>& net, const LabeledImages& set) {
  if (set.size() == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < set.size(); ++i) hits += predict(net, image_tensor(*set.images, i)) == set.labels[i];
  return static_cast<double>(hits) / static_cast<double>(set.size());
}

std::vector<EpochMetrics> train(Network<float>& net, const LabeledImages& train_set, const LabeledImages* val_set,
                                const TrainConfig& cfg, const EpochCallback& on_epoch) {
  if (cfg.learning_rate < 0) throw std::invalid_argument("learning rate must be >= 0");
  if (cfg.batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (train_set.images == nullptr || train_set.size() == 0) throw std::invalid_argument("empty training set");
  if (train_set.images->dim(0) != train_set.size()) throw std::invalid_argument("training images and labels differ");
  for (int y : train_set.labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= net.class_count()) {
      throw std::invalid_argument("training label " + std::to_string(y) + " out of range");
    }
  }
  SgdOptimizer<float> opt(net, cfg.momentum, cfg.weight_decay);
  std::vector<std::size_t> order(train_set.size());
  std::vector<EpochMetrics> history;
  Cache<float> cache;
  auto grads = zero_grads(net);
  double lr = cfg.learning_rate;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(cfg.seed, {0x747261696eULL, static_cast<std::uint64_t>(epoch)}));
    rng.shuffle(order.begin(), order.end());
    double loss_sum = 0;
    std::size_t hits = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      for (auto& g : grads) std::fill(g.storage().begin(), g.storage().end(), 0.0f);
      double batch_loss = 0;
      for (std::size_t b = start; b < end; ++b) {
        const auto idx = order[b];
        const int y = train_set.labels[idx];
        batch_loss += backward_sample(net, image_tensor(*train_set.images, idx), y, cache, grads, static_cast<Tensor*>(nullptr));
        const auto& probs = cache.out.back().storage();
        hits += static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin()) == y;
      }
      if (!std::isfinite(batch_loss)) {
        throw NumericError("training diverged: non-finite loss in epoch " + std::to_string(epoch));
      }
      loss_sum += batch_loss;
      const float inv = 1.0f / static_cast<float>(end - start);
      for (auto& g : grads) {
        for (auto& v : g.storage()) v *= inv;
      }
      opt.step(net, grads, lr);
    }
    for (const auto& p : net.params()) {
      if (!all_finite(p.value.data())) throw NumericError("training diverged: non-finite weights in " + p.name);
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(order.size());
    m.train_acc = static_cast<double>(hits) / static_cast<double>(order.size());
    if (val_set != nullptr) m.val_acc = accuracy(net, *val_set);
    history.push_back(m);
    if (on_epoch) on_epoch(m);
    lr *= cfg.lr_decay;
  }
  return history;
}

std::string metrics_csv(const std::vector<EpochMetrics>& metrics) {
  std::ostringstream os;
  os << "epoch,train_loss,train_acc,val_acc\n";
  char buf[128];
  for (const auto& m : metrics) {
    std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f\n", m.epoch, m.train_loss, m.train_acc, m.val_acc);
    os << buf;
  }
  return os.str();
}

void save_network(const std::filesystem::path& path, const Network<float>& net, const std::string& meta_json) {
  TensorMap map;
  map.add_text("arch", arch_to_json(net.architecture()).dump());
  map.add_text("meta", meta_json);
  for (const auto& p : net.params()) map.add(p.name, p.value);
  write_container(path, map);
}

Network<float> load_network(const std::filesystem::path& path) {
  const auto map = read_container(path);
  Architecture arch;
  try {
    arch = arch_from_json(nlohmann::json::parse(map.text("arch")));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": bad architecture record: " + e.what());
  }
  Network<float> net;
  try {
    net = Network<float>(arch);
  } catch (const std::invalid_argument& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  for (auto& p : net.params()) {
    if (!map.contains(p.name)) throw DataError(path.string() + ": missing parameter " + p.name);
    const auto& t = map.real(p.name);
    if (t.shape() != p.value.shape()) throw DataError(path.string() + ": shape mismatch for " + p.name);
    if (!all_finite(t.data())) throw DataError(path.string() + ": non-finite values in " + p.name);
    p.value = t;
  }
  return net;
}

std::vector<GradCheckEntry> gradient_check(const Network<double>& net, std::span<const BasicTensor<double>> batch,
                                           std::span<const int> labels, double h, double floor) {
  const auto analytic = backward(net, batch, labels);
  auto loss_at = [&](const Network<double>& n, std::span<const BasicTensor<double>> b) {
    long double sum = 0;
    for (std::size_t i = 0; i < b.size(); ++i) {
      const auto scores = n.forward(b[i]);
      sum -= std::log(scores[static_cast<std::size_t>(labels[i])]);
    }
    return static_cast<double>(sum / static_cast<long double>(b.size()));
  };
  auto rel = [floor](double a, double n) { return std::abs(a - n) / std::max(std::abs(a) + std::abs(n), floor); };

  std::vector<GradCheckEntry> out;
  Network<double> probe = net;
  for (std::size_t i = 0; i < probe.params().size(); ++i) {
    GradCheckEntry e{probe.params()[i].name, 0.0, 0};
    auto& w = probe.params()[i].value.storage();
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double w0 = w[j];
      w[j] = w0 + h;
      const double lp = loss_at(probe, batch);
      w[j] = w0 - h;
      const double lm = loss_at(probe, batch);
      w[j] = w0;
      e.max_rel_error = std::max(e.max_rel_error, rel(analytic.grads[i][j], (lp - lm) / (2 * h)));
      ++e.probes;
    }
    out.push_back(e);
  }
  GradCheckEntry in{"input", 0.0, 0};
  std::vector<BasicTensor<double>> shifted(batch.begin(), batch.end());
  for (std::size_t s = 0; s < shifted.size(); ++s) {
    auto& x = shifted[s].storage();
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double x0 = x[j];
      x[j] = x0 + h;
      const double lp = loss_at(net, shifted);
      x[j] = x0 - h;
      const double lm = loss_at(net, shifted);
      x[j] = x0;
      in.max_rel_error = std::max(in.max_rel_error, rel(analytic.input_grads[s][j], (lp - lm) / (2 * h)));
      ++in.probes;
    }
  }
  out.push_back(in);
  return out;
}

template struct Trace<float>;
template struct Trace<double>;
template class Network<float>;
template class Network<double>;
template class SgdOptimizer<float>;
template class SgdOptimizer<double>;
template BackwardResult<float> backward(const Network<float>&, std::span<const BasicTensor<float>>, std::span<const int>);
template BackwardResult<double> backward(const Network<double>&, std::span<const BasicTensor<double>>,
                                         std::span<const int>);

}  // namespace pnc::net
