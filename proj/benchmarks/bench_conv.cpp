#include <benchmark/benchmark.h>

#include "minconv/approx.hpp"
#include "minconv/rng.hpp"
#include "minconv/simlab.hpp"

using namespace minconv;

namespace {

Tensor<float> random_tensor(Extents shape, std::uint64_t seed) {
  Tensor<float> t(std::move(shape));
  Rng rng(seed);
  for (auto& v : t.values()) v = static_cast<float>(rng.normal(0.0, 1.0));
  return t;
}

// LeNet's second convolution: 32 -> 64 channels, 5x5, 14x14 input.
struct ConvCase {
  Tensor<float> x = random_tensor({16, 32, 14, 14}, 1);
  Tensor<float> w = random_tensor({64, 32, 5, 5}, 2);
  Shape2D s{5, 5, 1, 2};
};

void BM_ExactConv(benchmark::State& state) {
  ConvCase c;
  for (auto _ : state) benchmark::DoNotOptimize(exact_conv_forward(c.x, c.w, c.s));
}
BENCHMARK(BM_ExactConv)->Unit(benchmark::kMillisecond);

void BM_ApproxConv(benchmark::State& state) {
  ConvCase c;
  const auto mu_w = filter_abs_means(c.w);
  const auto w_tilde = rescale_weights(clip_filters(c.w, std::span<const double>(mu_w)),
                                       std::span<const double>(mu_w), mean_abs<float>(c.x.values()));
  for (auto _ : state) benchmark::DoNotOptimize(approx_conv_forward(c.x, w_tilde, std::span<const double>(mu_w), c.s));
}
BENCHMARK(BM_ApproxConv)->Unit(benchmark::kMillisecond);

void BM_Im2col(benchmark::State& state) {
  ConvCase c;
  const ImageDims dims{32, 14, 14};
  std::vector<float> cols(14 * 14 * 32 * 25);
  for (auto _ : state) {
    im2col<float>(c.x.slab(0), dims, c.s, cols);
    benchmark::DoNotOptimize(cols.data());
  }
}
BENCHMARK(BM_Im2col);

void BM_Correlation(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto dx = simlab::DistributionSpec::parse("N(0,1)");
  for (auto _ : state) benchmark::DoNotOptimize(simlab::correlation(simlab::OperatorKind::min_selector, dx, dx, n, 7));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_Correlation)->Arg(100000)->Arg(1000000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
