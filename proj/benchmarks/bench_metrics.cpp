#include <benchmark/benchmark.h>

#include <Eigen/Dense>

#include "ggdr/analysis.hpp"
#include "ggdr/eval.hpp"

namespace {

Eigen::MatrixXd random_points(Eigen::Index n, Eigen::Index d, unsigned seed) {
  std::srand(seed);
  return Eigen::MatrixXd::Random(n, d);
}

void BM_Fid(benchmark::State& st) {
  const auto d = st.range(0);
  const auto a = ggdr::gaussian_stats(random_points(4 * d, d, 1));
  const auto b = ggdr::gaussian_stats(random_points(4 * d, d, 2));
  for (auto _ : st) benchmark::DoNotOptimize(ggdr::fid(a, b));
}
BENCHMARK(BM_Fid)->Arg(16)->Arg(160)->Arg(512)->Unit(benchmark::kMillisecond);

void BM_PrecisionRecall(benchmark::State& st) {
  const auto n = st.range(0);
  const auto real = random_points(n, 160, 3);
  const auto fake = random_points(n, 160, 4);
  for (auto _ : st) benchmark::DoNotOptimize(ggdr::precision_recall(real, fake, 3));
  st.SetComplexityN(n);
}
BENCHMARK(BM_PrecisionRecall)->RangeMultiplier(2)->Range(256, 2048)->Complexity()->Unit(benchmark::kMillisecond);

void BM_KMeans(benchmark::State& st) {
  const auto points = random_points(st.range(0), 64, 5);
  for (auto _ : st) benchmark::DoNotOptimize(ggdr::kmeans(points, 6, 0));
}
BENCHMARK(BM_KMeans)->Arg(1024)->Arg(4096)->Unit(benchmark::kMillisecond);

}  // namespace
