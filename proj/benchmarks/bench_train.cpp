#include <benchmark/benchmark.h>

#include "ggdr/data_io.hpp"
#include "ggdr/train.hpp"

namespace {

ggdr::TrainConfig bench_config(double lambda) {
  ggdr::TrainConfig cfg;
  cfg.net.image_size = 32;
  cfg.net.base_channels = 8;
  cfg.net.channel_max = 64;
  cfg.lambda_reg = lambda;
  cfg.r1_interval = 1 << 30;
  cfg.ema_enabled = false;
  return cfg;
}

void BM_DStep(benchmark::State& st) {
  torch::set_num_threads(1);
  auto state = ggdr::init_train_state(bench_config(static_cast<double>(st.range(0))));
  const auto data = ggdr::make_synthetic_shapes(64, 32, 0).dataset;
  auto it = ggdr::make_train_iterator(state, data);
  const auto batch = it.next();
  for (auto _ : st) {
    benchmark::DoNotOptimize(ggdr::d_step(state, batch));
  }
}
BENCHMARK(BM_DStep)->Arg(0)->Arg(10)->Unit(benchmark::kMillisecond);

void BM_GStep(benchmark::State& st) {
  torch::set_num_threads(1);
  auto state = ggdr::init_train_state(bench_config(10.0));
  for (auto _ : st) {
    benchmark::DoNotOptimize(ggdr::g_step(state));
  }
}
BENCHMARK(BM_GStep)->Unit(benchmark::kMillisecond);

}  // namespace
