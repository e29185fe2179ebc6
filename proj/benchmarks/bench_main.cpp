#include <benchmark/benchmark.h>

#include "dyntex/gram.hpp"
#include "dyntex/layers.hpp"
#include "dyntex/loss.hpp"
#include "dyntex/network.hpp"

namespace dyntex {
namespace {

template <typename T>
Tensor<T> noise(Shape s, std::uint64_t seed) {
  return Tensor<T>::filled(std::move(s), GaussianFill{0.0, 1.0, seed});
}

// VGG-like 3x3 conv, pad 1; args: spatial size, in channels, out channels.
template <typename T>
void BM_ConvForward(benchmark::State& state) {
  const auto hw = static_cast<std::size_t>(state.range(0));
  const auto cin = static_cast<std::size_t>(state.range(1)), cout = static_cast<std::size_t>(state.range(2));
  const auto x = noise<T>(Shape{hw, hw, cin}, 1);
  const auto packed = pack_kernel(noise<T>(Shape{cout, cin, 3, 3}, 2));
  const auto bias = noise<T>(Shape{cout}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d_forward_packed(x, packed, bias, 1, 1));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(hw * hw * cin * cout * 9));
}

template <typename T>
void BM_ConvBackwardInput(benchmark::State& state) {
  const auto hw = static_cast<std::size_t>(state.range(0));
  const auto cin = static_cast<std::size_t>(state.range(1)), cout = static_cast<std::size_t>(state.range(2));
  const auto g = noise<T>(Shape{hw, hw, cout}, 1);
  const auto packed = pack_kernel(noise<T>(Shape{cout, cin, 3, 3}, 2));
  for (auto _ : state) benchmark::DoNotOptimize(conv2d_backward_input_packed(g, packed, 1, 1));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(hw * hw * cin * cout * 9));
}

// Window Gram: M rows, dt * N columns.
template <typename T>
void BM_WindowGram(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0)), k = static_cast<std::size_t>(state.range(1));
  const auto f = noise<T>(Shape{m, k}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(gram(f));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(m * k * k));
}

// One loss-and-gradient evaluation, the unit of work in every L-BFGS step.
template <typename T>
void BM_FrameLossGrad(benchmark::State& state) {
  const auto hw = static_cast<std::size_t>(state.range(0));
  const auto dt = static_cast<std::size_t>(state.range(1));
  const auto net = make_random_network<T>(load_descriptor(DYNTEX_DATA_DIR "/tiny_five_block.json"), 5);
  const std::vector<std::string> layers{"conv1_1", "conv2_1", "conv3_1", "conv4_1", "conv5_1"};
  std::vector<Tensor<T>> source;
  for (std::size_t i = 0; i < dt + 1; ++i) source.push_back(noise<T>(Shape{hw, hw, 3}, 10 + i));
  const auto target = compute_statistics<T>(source, net, layers, dt, std::vector<double>(layers.size(), 1.0));
  const std::vector<Tensor<T>> prev(source.begin(), source.begin() + static_cast<std::ptrdiff_t>(dt - 1));
  const auto ctx = make_context<T>(net, prev, layers);
  const auto x = noise<T>(Shape{hw, hw, 3}, 99);
  Tensor<T> grad;
  for (auto _ : state) benchmark::DoNotOptimize(frame_loss_grad(x, ctx, target, net, grad).total);
}

BENCHMARK(BM_ConvForward<float>)->Args({64, 64, 64})->Args({32, 128, 128})->Args({16, 256, 256})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvForward<double>)->Args({64, 64, 64})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardInput<float>)->Args({64, 64, 64})->Args({32, 128, 128})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardInput<double>)->Args({64, 64, 64})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_WindowGram<float>)->Args({4096, 128})->Args({1024, 512})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_WindowGram<double>)->Args({4096, 128})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FrameLossGrad<float>)->Args({64, 2})->Args({64, 4})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FrameLossGrad<double>)->Args({64, 2})->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace dyntex

BENCHMARK_MAIN();
