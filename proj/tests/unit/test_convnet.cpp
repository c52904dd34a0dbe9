#include <gtest/gtest.h>

#include <cmath>

#include "pnc/convnet.hpp"
#include "pnc/error.hpp"
#include "pnc/rng.hpp"
#include "test_paths.hpp"

using namespace pnc;
using namespace pnc::net;

namespace {

using Vol = std::vector<std::vector<std::vector<double>>>;  // [c][y][x]

// Straightforward nested-loop forward pass, written against the parameter
// layout only: conv w is [out, in * k * k] with (in, ky, kx) ordering.
std::vector<double> reference_forward(const Network<float>& net, const Tensor& image) {
  const auto& arch = net.architecture();
  Vol v(image.dim(0), std::vector<std::vector<double>>(image.dim(1), std::vector<double>(image.dim(2))));
  for (std::size_t c = 0; c < image.dim(0); ++c)
    for (std::size_t y = 0; y < image.dim(1); ++y)
      for (std::size_t x = 0; x < image.dim(2); ++x) v[c][y][x] = image.at(c, y, x);

  const int k = arch.kernel;
  const int pad = k / 2;
  for (std::size_t l = 0; l < arch.conv_channels.size(); ++l) {
    const auto& w = net.param("conv" + std::to_string(l + 1) + ".w");
    const auto& b = net.param("conv" + std::to_string(l + 1) + ".b");
    const int cin = static_cast<int>(v.size());
    const int h = static_cast<int>(v[0].size());
    const int wd = static_cast<int>(v[0][0].size());
    const int cout = static_cast<int>(arch.conv_channels[l]);
    Vol out(cout, std::vector<std::vector<double>>(h, std::vector<double>(wd)));
    for (int o = 0; o < cout; ++o) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < wd; ++x) {
          double s = b[o];
          for (int i = 0; i < cin; ++i)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int sy = y + ky - pad, sx = x + kx - pad;
                if (sy < 0 || sy >= h || sx < 0 || sx >= wd) continue;
                s += w[static_cast<std::size_t>(o * cin * k * k + (i * k + ky) * k + kx)] * v[i][sy][sx];
              }
          out[o][y][x] = std::max(0.0, s);
        }
      }
    }
    Vol pooled(cout, std::vector<std::vector<double>>(h / 2, std::vector<double>(wd / 2)));
    for (int o = 0; o < cout; ++o)
      for (int y = 0; y < h / 2; ++y)
        for (int x = 0; x < wd / 2; ++x)
          pooled[o][y][x] = std::max({out[o][2 * y][2 * x], out[o][2 * y][2 * x + 1], out[o][2 * y + 1][2 * x],
                                      out[o][2 * y + 1][2 * x + 1]});
    v = std::move(pooled);
  }
  const auto& w = net.param("nin.w");
  const auto& b = net.param("nin.b");
  const std::size_t cin = v.size();
  std::vector<double> logits(arch.classes);
  for (std::size_t o = 0; o < arch.classes; ++o) {
    double acc = 0;
    for (std::size_t y = 0; y < v[0].size(); ++y)
      for (std::size_t x = 0; x < v[0][0].size(); ++x) {
        double s = b[o];
        for (std::size_t i = 0; i < cin; ++i) s += w[o * cin + i] * v[i][y][x];
        acc += s;
      }
    logits[o] = acc / static_cast<double>(v[0].size() * v[0][0].size());
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0;
  for (auto& l : logits) z += (l = std::exp(l - mx));
  for (auto& l : logits) l /= z;
  return logits;
}

template <typename S>
BasicTensor<S> random_image(std::size_t c, std::size_t h, std::size_t w, std::uint64_t seed) {
  BasicTensor<S> t({c, h, w});
  Rng rng(seed);
  for (auto& v : t.storage()) v = static_cast<S>(rng.uniform());
  return t;
}

// 4 classes of 12x12 images: a bright bar in one of four positions plus noise
struct Toy {
  ByteTensor images;
  std::vector<int> labels;
};

Toy toy_set(std::size_t n, std::uint64_t seed) {
  Toy t{ByteTensor({n, 12, 12}), {}};
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const int cls = static_cast<int>(i % 4);
    t.labels.push_back(cls);
    for (std::size_t y = 0; y < 12; ++y) {
      for (std::size_t x = 0; x < 12; ++x) {
        const bool on = cls == 0 ? y < 3 : cls == 1 ? y > 8 : cls == 2 ? x < 3 : x > 8;
        t.images[(i * 12 + y) * 12 + x] = static_cast<std::uint8_t>((on ? 180 : 0) + rng.index(60));
      }
    }
  }
  return t;
}

Architecture small_arch(std::size_t classes = 4) {
  Architecture a;
  a.conv_channels = {4, 6};
  a.kernel = 3;
  a.classes = classes;
  return a;
}

}  // namespace

TEST(Layers, CanonicalOrder) {
  const auto specs = layer_specs(Architecture{});
  std::vector<std::string> names;
  for (const auto& s : specs) names.push_back(s.name);
  EXPECT_EQ(names, (std::vector<std::string>{"conv1", "relu1", "pool1", "conv2", "relu2", "pool2", "conv3", "relu3",
                                             "pool3", "conv4", "relu4", "pool4", "nin", "gap", "softmax"}));
  EXPECT_EQ(specs[0].pad, 2);
  EXPECT_EQ(specs[9].channels_out, 256u);
  EXPECT_EQ(min_input_side(Architecture{}), 16u);
}

TEST(Layers, EvenKernelRejected) {
  Architecture a;
  a.kernel = 4;
  EXPECT_THROW(layer_specs(a), std::invalid_argument);
}

TEST(Forward, IdentityOneByOneConv) {
  Architecture a;
  a.conv_channels = {1};
  a.kernel = 1;
  a.classes = 2;
  Network<float> net(a);
  net.param("conv1.w")[0] = 1.0f;
  const auto img = random_image<float>(1, 6, 6, 1);
  Trace<float> trace;
  net.forward(img, &trace);
  EXPECT_EQ(trace.at("conv1"), img);
}

TEST(Forward, ZeroWeightsGiveUniformSoftmax) {
  const Network<float> net(small_arch(5));
  const auto p = net.forward(random_image<float>(1, 8, 8, 2));
  for (float v : p) EXPECT_FLOAT_EQ(v, 0.2f);
}

TEST(Forward, MatchesNestedLoopReference) {
  Architecture a;
  a.conv_channels = {3, 5, 4};
  a.kernel = 5;
  a.classes = 7;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto net = Network<float>::initialized(a, seed);
    const auto img = random_image<float>(1, 19, 21, 10 + seed);  // odd sizes exercise floor pooling
    const auto got = net.forward(img);
    const auto want = reference_forward(net, img);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-5);
  }
}

TEST(Forward, TraceShapes) {
  const auto net = Network<float>::initialized(Architecture{}, 1);
  Trace<float> tr;
  net.forward(random_image<float>(1, 84, 84, 3), &tr);
  EXPECT_EQ(tr.at("relu4").shape(), (std::vector<std::size_t>{256, 10, 10}));
  EXPECT_EQ(tr.at("pool4").shape(), (std::vector<std::size_t>{256, 5, 5}));
  EXPECT_EQ(tr.at("nin").shape(), (std::vector<std::size_t>{100, 5, 5}));
  EXPECT_EQ(tr.at("gap").shape(), (std::vector<std::size_t>{100, 1, 1}));
  EXPECT_THROW(tr.at("conv9"), std::out_of_range);
}

TEST(Forward, TooSmallInputRejected) {
  const auto net = Network<float>::initialized(Architecture{}, 1);
  EXPECT_THROW(net.forward(random_image<float>(1, 8, 84, 1)), std::invalid_argument);
  EXPECT_THROW(net.forward(random_image<float>(2, 84, 84, 1)), std::invalid_argument);
}

TEST(Backward, CentralDifferences) {
  Architecture a;
  a.conv_channels = {3, 4};
  a.kernel = 3;
  a.classes = 3;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    auto net = Network<double>::initialized(a, seed);
    for (auto& p : net.params())
      if (!p.decay) {
        Rng rng(seed + 100);
        for (auto& v : p.value.storage()) v = rng.uniform(-0.1, 0.1);
      }
    std::vector<BasicTensor<double>> batch{random_image<double>(1, 8, 8, seed), random_image<double>(1, 8, 8, seed + 7)};
    const std::vector<int> labels{0, 2};
    for (const auto& e : gradient_check(net, batch, labels)) {
      EXPECT_LT(e.max_rel_error, 1e-3) << e.name << " seed " << seed;
      EXPECT_GT(e.probes, 0u);
    }
  }
}

TEST(Backward, IdenticalBatchEqualsSingle) {
  const auto net = Network<double>::initialized(small_arch(), 4);
  const auto img = random_image<double>(1, 8, 8, 5);
  const std::vector<BasicTensor<double>> one{img};
  const std::vector<BasicTensor<double>> three{img, img, img};
  const std::vector<int> l1{1};
  const std::vector<int> l3{1, 1, 1};
  const auto a = backward(net, std::span<const BasicTensor<double>>(one), std::span<const int>(l1));
  const auto b = backward(net, std::span<const BasicTensor<double>>(three), std::span<const int>(l3));
  EXPECT_NEAR(a.loss, b.loss, 1e-12);
  for (std::size_t i = 0; i < a.grads.size(); ++i)
    for (std::size_t j = 0; j < a.grads[i].size(); ++j) EXPECT_NEAR(a.grads[i][j], b.grads[i][j], 1e-12);
}

TEST(Backward, RejectsBadLabels) {
  const auto net = Network<double>::initialized(small_arch(), 4);
  const std::vector<BasicTensor<double>> batch{random_image<double>(1, 8, 8, 5)};
  const std::vector<int> labels{4};
  EXPECT_THROW(backward(net, std::span<const BasicTensor<double>>(batch), std::span<const int>(labels)),
               std::invalid_argument);
}

TEST(Train, OverfitsToySetAndGradientVanishes) {
  const auto toy = toy_set(32, 1);
  auto net = Network<float>::initialized(small_arch(), 3);
  const auto grad_norm = [&](const Network<float>& n) {
    std::vector<Tensor> batch;
    for (std::size_t i = 0; i < 32; ++i) batch.push_back(image_tensor(toy.images, i));
    const auto r = backward(n, std::span<const Tensor>(batch), std::span<const int>(toy.labels));
    double s = 0;
    for (const auto& g : r.grads)
      for (float v : g.storage()) s += static_cast<double>(v) * v;
    return std::pair{static_cast<double>(r.loss), std::sqrt(s)};
  };
  const auto [loss0, norm0] = grad_norm(net);
  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.batch_size = 8;
  cfg.epochs = 200;
  cfg.weight_decay = 0;
  const LabeledImages set{&toy.images, toy.labels};
  const auto hist = train(net, set, nullptr, cfg);
  EXPECT_GE(accuracy(net, set), 0.99);
  const auto [loss1, norm1] = grad_norm(net);
  EXPECT_LT(loss1, 0.05 * loss0);
  EXPECT_LT(norm1, norm0);
  EXPECT_EQ(hist.size(), 200u);
}

TEST(Train, ZeroLearningRateLeavesWeights) {
  const auto toy = toy_set(8, 2);
  auto net = Network<float>::initialized(small_arch(), 3);
  const auto before = net.params();
  TrainConfig cfg;
  cfg.learning_rate = 0;
  cfg.epochs = 2;
  train(net, {&toy.images, toy.labels}, nullptr, cfg);
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(net.params()[i].value, before[i].value);
}

TEST(Train, SameSeedBitIdentical) {
  const auto toy = toy_set(16, 3);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  cfg.seed = 9;
  auto a = Network<float>::initialized(small_arch(), 9);
  auto b = Network<float>::initialized(small_arch(), 9);
  const auto ha = train(a, {&toy.images, toy.labels}, nullptr, cfg);
  const auto hb = train(b, {&toy.images, toy.labels}, nullptr, cfg);
  for (std::size_t i = 0; i < a.params().size(); ++i) EXPECT_EQ(a.params()[i].value, b.params()[i].value);
  EXPECT_EQ(metrics_csv(ha), metrics_csv(hb));
}

TEST(Train, NonFiniteWeightsRaiseNumericError) {
  const auto toy = toy_set(8, 2);
  auto net = Network<float>::initialized(small_arch(), 3);
  net.param("conv1.w")[0] = NAN;
  TrainConfig cfg;
  cfg.epochs = 1;
  EXPECT_THROW(train(net, {&toy.images, toy.labels}, nullptr, cfg), NumericError);
}

TEST(Train, WeightDecaySkipsBiases) {
  const auto net0 = Network<float>::initialized(small_arch(), 3);
  for (const auto& p : net0.params()) EXPECT_EQ(p.decay, p.name.ends_with(".w")) << p.name;
  auto net = net0;
  for (auto& p : net.params())
    for (auto& v : p.value.storage()) v = 1.0f;
  SgdOptimizer<float> opt(net, 0.0, 0.5);
  std::vector<Tensor> zero;
  for (const auto& p : net.params()) zero.emplace_back(p.value.shape());
  opt.step(net, zero, 0.1);
  EXPECT_FLOAT_EQ(net.param("conv1.w")[0], 0.95f);
  EXPECT_FLOAT_EQ(net.param("conv1.b")[0], 1.0f);
}

TEST(Serialize, SaveLoadRoundTrip) {
  const auto net = Network<float>::initialized(small_arch(6), 5);
  const auto dir = pnc_test::scratch_dir("convnet_io");
  save_network(dir / "m.tnsr", net, "{\"k\":1}");
  const auto back = load_network(dir / "m.tnsr");
  EXPECT_EQ(back.architecture(), net.architecture());
  for (std::size_t i = 0; i < net.params().size(); ++i) EXPECT_EQ(back.params()[i].value, net.params()[i].value);
  const auto img = random_image<float>(1, 12, 12, 1);
  EXPECT_EQ(back.forward(img), net.forward(img));
}

TEST(Serialize, MetricsCsvHeader) {
  const std::vector<EpochMetrics> m{{1, 0.5, 0.25, -1}};
  EXPECT_EQ(metrics_csv(m), "epoch,train_loss,train_acc,val_acc\n1,0.500000,0.250000,-1.000000\n");
}
