#include <benchmark/benchmark.h>

#include <cstdint>

#include "tsmux/bin_table.hpp"
#include "tsmux/config.hpp"

namespace dy = tsmux::dynamics;

namespace {

struct Setup {
  dy::DynamicsParams params;
  dy::BinTiming timing;
};

Setup setup(double p) {
  const auto cfg = tsmux::config::load_config(TSMUX_BENCH_CONFIG);
  Setup s;
  s.timing = {100e-12, cfg.dynamics.decision_lag};
  const dy::DynamicsParams base = tsmux::config::dynamics_params(cfg);
  s.params = dy::with_scale(base, dy::calibrate_pump(p, base, s.timing));
  return s;
}

}  // namespace

static void BM_Trajectory(benchmark::State& state) {
  const double p = state.range(0) / 100.0;
  const Setup s = setup(p);
  const dy::TrajectoryEngine engine(dy::TwoModeState::fock(dy::initial_cutoff(p, 0), 0, 0), 0.0, s.timing.duration,
                                    s.timing.split(), s.params);
  std::uint64_t seed = 1;
  for (auto _ : state) benchmark::DoNotOptimize(engine.run(seed++));
}
BENCHMARK(BM_Trajectory)->Arg(1)->Arg(5)->Arg(25)->Unit(benchmark::kMicrosecond);

static void BM_PumpCalibration(benchmark::State& state) {
  const auto cfg = tsmux::config::load_config(TSMUX_BENCH_CONFIG);
  const dy::DynamicsParams params = tsmux::config::dynamics_params(cfg);
  const dy::BinTiming timing{100e-12, cfg.dynamics.decision_lag};
  for (auto _ : state) benchmark::DoNotOptimize(dy::calibrate_pump(0.05, params, timing));
}
BENCHMARK(BM_PumpCalibration)->Unit(benchmark::kMillisecond);

static void BM_BinTable(benchmark::State& state) {
  const Setup s = setup(0.05);
  const auto cfg = tsmux::config::load_config(TSMUX_BENCH_CONFIG);
  dy::TableRequest r;
  r.pump_probability = 0.05;
  r.trajectories = static_cast<int>(state.range(0));
  r.master_seed = 7;
  for (auto _ : state) {
    benchmark::DoNotOptimize(dy::estimate_bin_table(r, tsmux::config::dynamics_params(cfg), s.timing));
  }
}
BENCHMARK(BM_BinTable)->Arg(1000)->Unit(benchmark::kMillisecond);
