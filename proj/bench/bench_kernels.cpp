// Parallel kernels against their serial reference loop nests.

#include <benchmark/benchmark.h>

#include <vector>

#include "audiotex/kernels.hpp"
#include "audiotex/random.hpp"

namespace {

using namespace audiotex;

struct ConvCase {
  Tensor4 input;
  Tensor4 grad_out;
  std::vector<float> weights;
  kernels::ConvWeights conv;
};

ConvCase make_case(std::size_t in_ch, std::size_t out_ch, std::size_t width,
                   std::size_t kernel) {
  ConvCase c;
  Rng rng(1);
  c.input = Tensor4({1, in_ch, 1, width});
  for (double& v : c.input.flat()) v = uniform01(rng);
  c.grad_out = Tensor4({1, out_ch, 1, width});
  for (double& v : c.grad_out.flat()) v = uniform(rng, -1.0, 1.0);
  c.weights.resize(out_ch * in_ch * kernel);
  for (float& w : c.weights) w = static_cast<float>(uniform(rng, -0.1, 0.1));
  c.conv = {c.weights, {}, out_ch, in_ch, 1, kernel};
  return c;
}

void BM_ConvForward(benchmark::State& state) {
  const auto c = make_case(129, static_cast<std::size_t>(state.range(0)), 64, 11);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::conv2d_same(c.input, c.conv));
}

void BM_ConvForwardReference(benchmark::State& state) {
  const auto c = make_case(129, static_cast<std::size_t>(state.range(0)), 64, 11);
  for (auto _ : state)
    benchmark::DoNotOptimize(kernels::reference::conv2d_same(c.input, c.conv));
}

void BM_ConvInputGrad(benchmark::State& state) {
  const auto c = make_case(129, static_cast<std::size_t>(state.range(0)), 64, 11);
  for (auto _ : state)
    benchmark::DoNotOptimize(kernels::conv2d_same_input_grad(c.grad_out, c.conv));
}

void BM_ConvInputGradReference(benchmark::State& state) {
  const auto c = make_case(129, static_cast<std::size_t>(state.range(0)), 64, 11);
  for (auto _ : state)
    benchmark::DoNotOptimize(kernels::reference::conv2d_same_input_grad(c.grad_out, c.conv));
}

void BM_Gram(benchmark::State& state) {
  const auto c = make_case(static_cast<std::size_t>(state.range(0)), 1, 431, 1);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::gram(c.input));
}

void BM_GramReference(benchmark::State& state) {
  const auto c = make_case(static_cast<std::size_t>(state.range(0)), 1, 431, 1);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::reference::gram(c.input));
}

}  // namespace

BENCHMARK(BM_ConvForward)->Arg(64)->Arg(256);
BENCHMARK(BM_ConvForwardReference)->Arg(64)->Arg(256);
BENCHMARK(BM_ConvInputGrad)->Arg(64)->Arg(256);
BENCHMARK(BM_ConvInputGradReference)->Arg(64)->Arg(256);
BENCHMARK(BM_Gram)->Arg(256)->Arg(1024);
BENCHMARK(BM_GramReference)->Arg(256)->Arg(1024);

BENCHMARK_MAIN();
