#include <benchmark/benchmark.h>

#include "sgcam/sgcam.hpp"

namespace {

sgcam::Tensor uniform_input(std::uint64_t seed) {
  sgcam::GaussianRng rng(seed);
  sgcam::Tensor x({1, 16, 16}, 0.0);
  for (double& v : x.data()) v = rng.uniform();
  return x;
}

void BM_Conv2d(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  sgcam::Tensor x({c, 32, 32}, 0.5);
  sgcam::Tensor k({c, c, 3, 3}, 0.1);
  sgcam::Tensor b({c}, 0.0);
  for (auto _ : state) benchmark::DoNotOptimize(sgcam::conv2d(x, k, b, 1, 1));
}
BENCHMARK(BM_Conv2d)->Arg(1)->Arg(4)->Arg(16);

void BM_Forward(benchmark::State& state) {
  const sgcam::Model model = sgcam::random_fixture(1);
  const sgcam::Tensor x = uniform_input(2);
  for (auto _ : state) benchmark::DoNotOptimize(sgcam::forward(model, x));
}
BENCHMARK(BM_Forward);

sgcam::SaliencyRequest request(std::size_t samples, std::size_t threads) {
  sgcam::SaliencyRequest r;
  r.layer = "conv1";
  r.samples = samples;
  r.threads = threads;
  r.seed = 3;
  return r;
}

void BM_SmoothTriple(benchmark::State& state) {
  const sgcam::Model model = sgcam::random_fixture(1);
  const sgcam::Tensor x = uniform_input(2);
  const auto r = request(static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(sgcam::smooth_triple(model, x, r));
}
BENCHMARK(BM_SmoothTriple)->Arg(1)->Arg(25);

void BM_RunSmoothGradCamPP(benchmark::State& state) {
  const sgcam::Model model = sgcam::random_fixture(1);
  const sgcam::Tensor x = uniform_input(2);
  const auto r = request(25, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(sgcam::run(model, x, r));
}
BENCHMARK(BM_RunSmoothGradCamPP)->Arg(1)->Arg(4);

}  // namespace

BENCHMARK_MAIN();
