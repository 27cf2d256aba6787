// OpenMP kernels against their serial references, plus end-to-end model
// forward/backward. Run with --benchmark_filter to narrow the set.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "guidedepth/blocks.hpp"
#include "guidedepth/kernels.hpp"
#include "guidedepth/losses.hpp"

using namespace guidedepth;
using namespace guidedepth::kernels;

namespace {

std::vector<float> random_vector(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// Args: channels in, channels out, spatial size, kernel.
ConvGeometry geometry(const benchmark::State& s) {
  ConvGeometry g;
  g.input = {1, static_cast<int>(s.range(0)), static_cast<int>(s.range(2)),
             static_cast<int>(s.range(2))};
  g.out_channels = static_cast<int>(s.range(1));
  g.kernel_h = g.kernel_w = static_cast<int>(s.range(3));
  g.padding = g.kernel_h / 2;
  return g;
}

template <bool kReference>
void BM_ConvForward(benchmark::State& state) {
  const auto g = geometry(state);
  const auto x = random_vector(g.input.numel(), 1);
  const auto w = random_vector(g.weight().numel(), 2);
  const auto b = random_vector(g.out_channels, 3);
  std::vector<float> y(g.output().numel());
  for (auto _ : state) {
    if constexpr (kReference) {
      conv2d_forward_reference<float>(g, x, w, b, y);
    } else {
      conv2d_forward<float>(g, x, w, b, y);
    }
    benchmark::DoNotOptimize(y.data());
  }
  state.counters["MACs/s"] = benchmark::Counter(static_cast<double>(g.macs()),
                                                benchmark::Counter::kIsIterationInvariantRate);
}

template <bool kReference>
void BM_ConvBackward(benchmark::State& state) {
  const auto g = geometry(state);
  const auto x = random_vector(g.input.numel(), 1);
  const auto w = random_vector(g.weight().numel(), 2);
  const auto dy = random_vector(g.output().numel(), 4);
  std::vector<float> dx(x.size()), dw(w.size()), db(g.out_channels);
  for (auto _ : state) {
    if constexpr (kReference) {
      conv2d_backward_input_reference<float>(g, dy, w, dx);
      conv2d_backward_weight_reference<float>(g, dy, x, dw, db);
    } else {
      conv2d_backward_input<float>(g, dy, w, dx);
      conv2d_backward_weight<float>(g, dy, x, dw, db);
    }
    benchmark::DoNotOptimize(dx.data());
    benchmark::DoNotOptimize(dw.data());
  }
}

void conv_args(benchmark::internal::Benchmark* b) {
  b->Args({8, 8, 48, 3})->Args({32, 32, 60, 3})->Args({64, 64, 30, 3})->Args({64, 64, 120, 1});
  b->Unit(benchmark::kMicrosecond);
}

void BM_BilinearUp2(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), s = static_cast<int>(state.range(1));
  const Shape in{1, c, s, s};
  const auto x = random_vector(in.numel(), 5);
  std::vector<float> y(static_cast<std::size_t>(c) * 4 * s * s);
  for (auto _ : state) {
    bilinear_forward<float>(in, 2 * s, 2 * s, x, y);
    benchmark::DoNotOptimize(y.data());
  }
}

// Args: guidance variant index (0 Image/GUB, 1 Image/Direct, 4 None), height.
ModelConfig variant(int index) {
  ModelConfig c = ModelConfig::guidedepth_tiny();
  const GuidanceType types[] = {GuidanceType::kImage, GuidanceType::kImage, GuidanceType::kLaplacian,
                                GuidanceType::kLaplacian, GuidanceType::kNone};
  c.guidance_type = types[index];
  c.guidance_branch = index % 2 == 1 ? GuidanceBranch::kDirect : GuidanceBranch::kGub;
  return c;
}

void BM_ModelForward(benchmark::State& state) {
  auto m = init_model<float>(variant(static_cast<int>(state.range(0))), 0);
  const int h = static_cast<int>(state.range(1)), w = h * 4 / 3;
  auto x = Tensor<float>::from_vector({1, 3, h, w}, random_vector(3 * h * w, 6));
  Tape<float> none(false);
  model_forward(none, m, x, NormMode::kTrain);  // initialise running stats
  for (auto _ : state) {
    auto y = model_forward(none, m, x, NormMode::kEval);
    benchmark::DoNotOptimize(y.data().data());
  }
}

void BM_TrainStep(benchmark::State& state) {
  auto m = init_model<float>(ModelConfig::guidedepth_tiny(), 0);
  const int n = static_cast<int>(state.range(0));
  auto x = Tensor<float>::from_vector({n, 3, 48, 64}, random_vector(n * 3 * 48 * 64, 7));
  auto y = Tensor<float>::full({n, 1, 48, 64}, 2.0f);
  const auto cfg = LossConfig::for_dynamic_range(5.0);
  for (auto _ : state) {
    zero_grad(m);
    Tape<float> tape;
    auto loss = combined_loss(tape, y, model_forward(tape, m, x, NormMode::kTrain), cfg).total;
    tape.backward(loss);
    benchmark::DoNotOptimize(loss.item());
  }
}

}  // namespace

BENCHMARK(BM_ConvForward<false>)->Name("conv_forward/omp")->Apply(conv_args);
BENCHMARK(BM_ConvForward<true>)->Name("conv_forward/reference")->Apply(conv_args);
BENCHMARK(BM_ConvBackward<false>)->Name("conv_backward/omp")->Apply(conv_args);
BENCHMARK(BM_ConvBackward<true>)->Name("conv_backward/reference")->Apply(conv_args);
BENCHMARK(BM_BilinearUp2)->Args({16, 60})->Args({64, 30})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ModelForward)
    ->ArgsProduct({{0, 1, 4}, {48, 240}})
    ->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TrainStep)->Arg(8)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
