#include <benchmark/benchmark.h>

#include <vector>

#include "tsmux/spectral.hpp"

namespace sp = tsmux::spectral;

static void BM_CirculatingResponse(benchmark::State& state) {
  const sp::DeviceGeometry g = sp::make_geometry({});
  const sp::FilterTuning t = sp::static_tuning(g);
  std::vector<double> omega(static_cast<std::size_t>(state.range(0)));
  for (std::size_t k = 0; k < omega.size(); ++k) {
    omega[k] = g.pump_frequency + g.free_spectral_range() * (-2.5 + 5.0 * k / omega.size());
  }
  for (auto _ : state) benchmark::DoNotOptimize(sp::circulating_response(omega, t.idler, t.signal, g));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_CirculatingResponse)->Arg(1000)->Arg(20000);

static void BM_ModePeakPower(benchmark::State& state) {
  const sp::DeviceGeometry g = sp::make_geometry({});
  const double target = sp::mode_arithmetic(0, g).suppressed;
  for (auto _ : state) benchmark::DoNotOptimize(sp::mode_peak_power(target, g, g.aux_through));
}
BENCHMARK(BM_ModePeakPower);
