#include "tsmux/verification.hpp"

#include <algorithm>
#include <cmath>
#include <thread>
#include <vector>

#include "tsmux/master_equation.hpp"
#include "tsmux/seeding.hpp"

namespace tsmux::dynamics {

double Comparison::z() const {
  const double diff = std::abs(estimate - oracle);
  if (diff <= 1e-12 * std::max(1.0, std::abs(oracle))) return 0.0;
  return sigma > 0.0 ? diff / sigma : INFINITY;
}

namespace {

struct Sample {
  bool pair = false;
  double signal = 0.0;
  double idler = 0.0;
};

Comparison summarize(const std::vector<double>& x, double oracle) {
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= std::max(1.0, n - 1.0);
  return {mean, std::sqrt(var / n), oracle};
}

}  // namespace

UnravelingCheck check_unraveling(double pump_probability, const DynamicsParams& params, const BinTiming& timing,
                                 int trajectories, std::uint64_t master_seed, int jobs) {
  timing.validate();
  const double scale = calibrate_pump(pump_probability, params, timing);
  const DynamicsParams p = with_scale(params, scale);
  const int cutoff = initial_cutoff(pump_probability, 0);
  const TwoModeState vacuum = TwoModeState::fock(cutoff, 0, 0);
  const TrajectoryEngine engine(vacuum, 0.0, timing.duration, timing.split(), p);
  const std::uint64_t stream = label_id("unraveling") ^ table_stream(timing, pump_probability, 0);

  std::vector<Sample> samples(static_cast<std::size_t>(trajectories));
  auto work = [&](int begin, int stop) {
    for (int k = begin; k < stop; ++k) {
      const TrajectoryRecord r = engine.run(derive_seed(master_seed, stream, static_cast<std::uint64_t>(k)));
      Sample& s = samples[static_cast<std::size_t>(k)];
      s.pair = !r.jumps.empty() || r.sampled_signal != 0 || r.sampled_idler != 0;
      s.signal = r.final_state.mean_signal();
      s.idler = r.final_state.mean_idler();
    }
  };
  const int workers = std::clamp(jobs, 1, std::max(1, trajectories));
  if (workers == 1) {
    work(0, trajectories);
  } else {
    std::vector<std::thread> pool;
    const int chunk = (trajectories + workers - 1) / workers;
    for (int j = 0; j < workers; ++j) {
      const int begin = j * chunk;
      const int stop = std::min(trajectories, begin + chunk);
      if (begin < stop) pool.emplace_back(work, begin, stop);
    }
    for (auto& t : pool) t.join();
  }

  const DensityMatrix start = DensityMatrix::pure(vacuum);
  const DensityMatrix full = master_equation_evolve(start, 0.0, timing.duration, p);
  MasterEquationOptions dark;
  dark.include_jumps = false;
  const DensityMatrix no_jump = master_equation_evolve(start, 0.0, timing.duration, p, dark);

  std::vector<double> pair;
  std::vector<double> signal;
  std::vector<double> idler;
  for (const Sample& s : samples) {
    pair.push_back(s.pair ? 1.0 : 0.0);
    signal.push_back(s.signal);
    idler.push_back(s.idler);
  }
  UnravelingCheck c;
  c.pump_probability = pump_probability;
  c.trajectories = trajectories;
  c.cutoff = cutoff;
  c.pair = summarize(pair, 1.0 - no_jump.population(0, 0));
  c.signal = summarize(signal, full.mean_signal());
  c.idler = summarize(idler, full.mean_idler());
  c.oracle_trace = full.trace();
  return c;
}

}  // namespace tsmux::dynamics
