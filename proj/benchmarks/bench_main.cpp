#include <vector>

#include <benchmark/benchmark.h>

#include "lmk/geometry.hpp"
#include "lmk/layers.hpp"
#include "lmk/losses.hpp"
#include "lmk/netarch.hpp"
#include "lmk/readout.hpp"
#include "lmk/rng.hpp"

using namespace lmk;

namespace {

Tensor random_tensor(std::vector<int> shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (float& v : t.values()) v = static_cast<float>(uniform(rng, -1.0, 1.0));
  return t;
}

ModelConfig desk_model() {
  ModelConfig cfg;
  cfg.width_multiplier = 0.125;
  return cfg;
}

void BM_Conv3x3(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), hw = static_cast<int>(state.range(1));
  const Tensor x = random_tensor({c, hw, hw}, 1), w = random_tensor({c, c, 3, 3}, 2), b = random_tensor({c}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(layers::conv2d(x, w, b));
  state.SetItemsProcessed(state.iterations() * 2LL * c * c * 9 * hw * hw);
}
BENCHMARK(BM_Conv3x3)->Args({4, 64})->Args({16, 64})->Args({32, 32})->Args({64, 128});

void BM_Conv3x3Backward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), hw = static_cast<int>(state.range(1));
  const Tensor x = random_tensor({c, hw, hw}, 1), w = random_tensor({c, c, 3, 3}, 2), g = random_tensor({c, hw, hw}, 3);
  Tensor gx, gw(std::vector<int>{c, c, 3, 3}), gb(std::vector<int>{c});
  for (auto _ : state) {
    layers::conv2d_backward(x, w, g, gw, gb, &gx);
    benchmark::DoNotOptimize(gw.values().data());
  }
}
BENCHMARK(BM_Conv3x3Backward)->Args({4, 64})->Args({32, 32});

void BM_FeatureForward(benchmark::State& state) {
  const int hw = static_cast<int>(state.range(0));
  const FeatureExtractor f(desk_model(), 7);
  const Image x = random_tensor({3, hw, hw}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(f.forward(x));
}
BENCHMARK(BM_FeatureForward)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_FeatureForwardBackward(benchmark::State& state) {
  const FeatureExtractor f(desk_model(), 7);
  const Image x = random_tensor({3, 64, 64}, 4);
  const FeatureMap g = random_tensor({64, 64, 64}, 5);
  for (auto _ : state) {
    FeatureExtractor::Tape tape;
    f.forward(x, &tape);
    Gradients grads = f.parameters().zeros_like();
    f.backward(tape, g, grads);
    benchmark::DoNotOptimize(grads.data());
  }
}
BENCHMARK(BM_FeatureForwardBackward)->Unit(benchmark::kMillisecond);

void BM_HeadForwardBackward(benchmark::State& state) {
  const LandmarkHead t(desk_model(), 8);
  const FeatureMap f = random_tensor({64, 64, 64}, 6);
  const Tensor g = random_tensor({10, 64, 64}, 9);
  for (auto _ : state) {
    LandmarkHead::Tape tape;
    t.forward(f, &tape);
    Gradients grads = t.parameters().zeros_like();
    t.backward(tape, g, grads, false);
    benchmark::DoNotOptimize(grads.data());
  }
}
BENCHMARK(BM_HeadForwardBackward)->Unit(benchmark::kMillisecond);

std::vector<ProbMap> random_probmaps(int k, int hw, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<ProbMap> out;
  for (int i = 0; i < k; ++i) {
    Heatmap h(hw, hw);
    for (double& v : h.values) v = 4.0 * uniform01(rng);
    out.push_back(spatial_softmax(h));
  }
  return out;
}

void BM_DiversityLoss(benchmark::State& state) {
  const auto maps = random_probmaps(10, 64, 11);
  for (auto _ : state) benchmark::DoNotOptimize(diversity_loss(maps, 8));
}
BENCHMARK(BM_DiversityLoss);

void BM_VarianceLoss(benchmark::State& state) {
  const std::vector<std::vector<ProbMap>> batch(16, random_probmaps(10, 64, 12));
  for (auto _ : state) benchmark::DoNotOptimize(variance_loss(batch));
}
BENCHMARK(BM_VarianceLoss);

void BM_ContrastiveLoss(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Eigen::MatrixXd a = Eigen::MatrixXd::Random(n, 64), p = Eigen::MatrixXd::Random(n, 64);
  for (auto _ : state) benchmark::DoNotOptimize(contrastive_loss(a, p, 0.1));
}
BENCHMARK(BM_ContrastiveLoss)->Arg(64)->Arg(256);

void BM_WarpElastic(benchmark::State& state) {
  const DomainSpec dom{64, 64, 3};
  const CoordMap g = compose(make_elastic(dom, {5, 5}, 0.05, 16.0, 3), make_affine(0.26, {1.0, 1.0}, 0.0, {0.0, 0.0}, dom.center()));
  const Image x = random_tensor({3, 64, 64}, 13);
  for (auto _ : state) benchmark::DoNotOptimize(warp_image(g, x));
}
BENCHMARK(BM_WarpElastic)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
