// Serial reference vs OpenMP kernels at the default desk-scale shapes:
// a 3072-64-32-51 model (about 200k parameters), 10 client updates and an
// 800-sample test set.

#include <benchmark/benchmark.h>

#include <vector>

#include "flpoison/kernels.hpp"
#include "flpoison/nn.hpp"
#include "flpoison/rng.hpp"
#include "flpoison/synthdata.hpp"

using namespace flpoison;

namespace {

const LayerSizes kDefaultModel = {3072, 64, 32, 51};

struct Updates {
  std::vector<std::vector<double>> storage;
  std::vector<std::span<const double>> views;
};

const Updates& updates() {
  static const Updates u = [] {
    Updates out;
    Rng rng = make_rng(1);
    const std::size_t p = parameter_count(kDefaultModel);
    out.storage.assign(10, std::vector<double>(p));
    for (auto& v : out.storage) {
      for (double& x : v) x = uniform(rng, -0.1, 0.1);
    }
    for (const auto& v : out.storage) out.views.emplace_back(v);
    return out;
  }();
  return u;
}

const std::vector<Sample>& test_set() {
  static const std::vector<Sample> data = generate_dataset(800, 2);
  return data;
}

const ModelParams& model() {
  static const ModelParams m = init_model(kDefaultModel, 3);
  return m;
}

template <auto Kernel>
void vectors_kernel(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(updates().views));
}

template <auto Kernel>
void trimmed_kernel(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(updates().views, 2));
}

template <auto Kernel>
void loss_kernel(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(model(), test_set()));
}

}  // namespace

BENCHMARK(vectors_kernel<kernels::serial::coordinate_mean>)->Name("coordinate_mean/serial");
BENCHMARK(vectors_kernel<kernels::parallel::coordinate_mean>)->Name("coordinate_mean/parallel");
BENCHMARK(trimmed_kernel<kernels::serial::coordinate_trimmed_mean>)->Name("trimmed_mean/serial");
BENCHMARK(trimmed_kernel<kernels::parallel::coordinate_trimmed_mean>)->Name("trimmed_mean/parallel");
BENCHMARK(vectors_kernel<kernels::serial::pairwise_sq_distances>)->Name("pairwise_distances/serial");
BENCHMARK(vectors_kernel<kernels::parallel::pairwise_sq_distances>)->Name("pairwise_distances/parallel");
BENCHMARK(vectors_kernel<kernels::serial::gram_matrix>)->Name("gram/serial");
BENCHMARK(vectors_kernel<kernels::parallel::gram_matrix>)->Name("gram/parallel");
BENCHMARK(loss_kernel<kernels::serial::mean_l1_loss>)->Name("test_loss/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(loss_kernel<kernels::parallel::mean_l1_loss>)->Name("test_loss/parallel")->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
