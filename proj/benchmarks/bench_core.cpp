#include <random>

#include <benchmark/benchmark.h>

#include <advforge/detect_hist.hpp>
#include <advforge/detect_reg.hpp>
#include <advforge/detect_residual.hpp>
#include <advforge/nn.hpp>
#include <advforge/numerics.hpp>

#include "fixtures.hpp"

using namespace advforge;

namespace {

const nn::Network& lenet() {
  static const nn::Network net = nn::make_lenet({1, 28, 28}, 10, 1);
  return net;
}

Vec image(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return testing::random_vec(784, rng, 0.0, 1.0);
}

void BM_Forward(benchmark::State& state) {
  const Vec x = image(1);
  for (auto _ : state) benchmark::DoNotOptimize(nn::forward(lenet(), x));
}
BENCHMARK(BM_Forward);

void BM_GradInput(benchmark::State& state) {
  const Vec x = image(2);
  for (auto _ : state) benchmark::DoNotOptimize(nn::grad_input(lenet(), x, 3));
}
BENCHMARK(BM_GradInput);

void BM_LocalAffine(benchmark::State& state) {
  const Vec x = image(3);
  for (auto _ : state) benchmark::DoNotOptimize(nn::local_affine_output(lenet(), x));
}
BENCHMARK(BM_LocalAffine);

void BM_Pinv(benchmark::State& state) {
  std::mt19937_64 rng(4);
  const Matrix a = testing::random_matrix(10, state.range(0), rng);
  for (auto _ : state) benchmark::DoNotOptimize(numerics::pinv(a));
}
BENCHMARK(BM_Pinv)->Arg(84)->Arg(784);

void BM_Regularize(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::vector<Vec> images, feats;
  for (int k = 0; k < n; ++k) {
    images.push_back(image(100 + k));
    feats.push_back(nn::feature(lenet(), images.back()));
  }
  reg::RegularizationConfig cfg;
  cfg.knn = 50;
  const reg::WeightedGraph g = reg::build_graph(images, feats, cfg);
  for (auto _ : state) benchmark::DoNotOptimize(reg::regularize(g, cfg));
}
BENCHMARK(BM_Regularize)->Arg(200)->Arg(800)->Unit(benchmark::kMillisecond);

void BM_MethodC(benchmark::State& state) {
  const Vec x = image(5);
  const auto cfg = residual::ResidualDetectConfig::defaults(residual::Method::C);
  for (auto _ : state) benchmark::DoNotOptimize(residual::method_c(lenet(), x, cfg));
}
BENCHMARK(BM_MethodC)->Unit(benchmark::kMillisecond);

void BM_KMeans(benchmark::State& state) {
  std::mt19937_64 rng(6);
  std::vector<Vec> pts;
  for (int k = 0; k < 2000; ++k) pts.push_back(testing::random_vec(10, rng));
  for (auto _ : state) benchmark::DoNotOptimize(numerics::kmeans(pts, 10, 1));
}
BENCHMARK(BM_KMeans)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
