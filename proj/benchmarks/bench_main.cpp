#include <benchmark/benchmark.h>

#include "pnc/clustering.hpp"
#include "pnc/convnet.hpp"
#include "pnc/evaluation.hpp"
#include "pnc/io.hpp"
#include "pnc/rng.hpp"

using namespace pnc;

namespace {

Tensor random_image(std::size_t side, std::uint64_t seed) {
  Tensor t({1, side, side});
  Rng rng(seed);
  for (auto& v : t.storage()) v = static_cast<float>(rng.uniform());
  return t;
}

std::vector<WeightedPoint> cloud(std::size_t n) {
  Rng rng(3);
  std::vector<WeightedPoint> p;
  for (std::size_t i = 0; i < n; ++i) {
    const double gx = 40.0 * static_cast<double>(i % 4);
    p.push_back({gx + 4 * rng.normal(), 3 * rng.normal(), rng.uniform(0.1, 1)});
  }
  return p;
}

void BM_Forward(benchmark::State& state) {
  const auto net = net::Network<float>::initialized(net::Architecture{}, 1);
  const auto img = random_image(static_cast<std::size_t>(state.range(0)), 2);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(img));
}
BENCHMARK(BM_Forward)->Arg(84)->Arg(168)->Unit(benchmark::kMillisecond);

void BM_TrainBatch(benchmark::State& state) {
  net::Architecture a;
  auto net = net::Network<float>::initialized(a, 1);
  std::vector<Tensor> batch;
  std::vector<int> labels;
  for (int i = 0; i < 8; ++i) {
    batch.push_back(random_image(84, static_cast<std::uint64_t>(i)));
    labels.push_back(i);
  }
  for (auto _ : state) {
    auto r = net::backward(net, std::span<const Tensor>(batch), std::span<const int>(labels));
    benchmark::DoNotOptimize(r.loss);
  }
}
BENCHMARK(BM_TrainBatch)->Unit(benchmark::kMillisecond);

void BM_DensityPeaks(benchmark::State& state) {
  const auto pts = cloud(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(density_peaks(pts, 2.0, 0.5, 10.0).count());
}
BENCHMARK(BM_DensityPeaks)->Arg(200)->Arg(1000)->Arg(4000)->Unit(benchmark::kMillisecond);

void BM_Gmm(benchmark::State& state) {
  const auto pts = cloud(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(gmm_fit(pts, 4, 1).iterations);
}
BENCHMARK(BM_Gmm)->Arg(1000)->Arg(4000)->Unit(benchmark::kMillisecond);

void BM_EllipseContainment(benchmark::State& state) {
  const Pointer e = Ellipse{20, 20, 9, 5};
  const BBox b{12, 14, 30, 26};
  for (auto _ : state) benchmark::DoNotOptimize(containment_ratio(e, b));
}
BENCHMARK(BM_EllipseContainment)->Unit(benchmark::kMicrosecond);

void BM_TnsrEncodeDecode(benchmark::State& state) {
  TensorMap m;
  Tensor t({256, 1024});
  Rng rng(1);
  for (auto& v : t.storage()) v = static_cast<float>(rng.uniform());
  m.add("w", std::move(t));
  for (auto _ : state) benchmark::DoNotOptimize(decode_container(encode_container(m)).size());
}
BENCHMARK(BM_TnsrEncodeDecode)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
