#include "tsmux/optimizer.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "tsmux/errors.hpp"

namespace tsmux::protocol {

std::vector<double> bin_duration_grid(double kappa_idler, int count) {
  if (!(kappa_idler > 0.0)) throw ConfigError("bin duration grid needs kappa_i > 0");
  if (count < 1) throw ConfigError("bin duration grid needs at least one point");
  const double unit = 1.0 / (2.0 * kappa_idler);
  std::vector<double> out;
  for (int k = 0; k < count; ++k) {
    const double f = count == 1 ? 0.0 : static_cast<double>(k) / (count - 1);
    out.push_back(5.0 * unit * std::pow(40.0, f));
  }
  return out;
}

namespace {

// Search point: pump values at the four sample slots plus the discrete controls.
struct Point {
  std::array<double, 4> levels{};
  double floor = 0.0;
  int evacuation_bin = 2;
  int release_cap = 3;
};

std::array<int, 4> slot_bins(int bins, int evacuation_bin) {
  const int last = (evacuation_bin <= bins) ? std::max(1, evacuation_bin - 1) : bins;
  std::array<int, 4> s = {1, (bins + 2) / 3, (2 * bins + 2) / 3, last};
  for (int& b : s) b = std::clamp(b, 1, bins);
  return s;
}

ProtocolConfig build(const ProtocolConfig& base, int bins, const Point& p) {
  ProtocolConfig c = base;
  c.bins = bins;
  c.evacuation_floor = p.floor;
  c.evacuation_bin = p.evacuation_bin;
  c.release_cap = p.release_cap;
  c.pump_samples.clear();
  const std::array<int, 4> s = slot_bins(bins, p.evacuation_bin);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const bool seen = std::any_of(c.pump_samples.begin(), c.pump_samples.end(),
                                  [&](const PumpSample& q) { return q.bin == s[i]; });
    if (!seen) c.pump_samples.push_back({s[i], p.levels[i]});
  }
  return c;
}

// Carries the previous optimum's schedule over to the new sample positions.
Point extend(const BinOptimum& prev, int bins) {
  Point p;
  p.floor = prev.config.evacuation_floor;
  p.release_cap = prev.config.release_cap;
  p.evacuation_bin = prev.config.evacuation_bin > prev.config.bins ? bins + 1 : prev.config.evacuation_bin;
  const std::vector<double>& sched = prev.evaluation.pump_schedule;
  const std::array<int, 4> s = slot_bins(bins, p.evacuation_bin);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const int b = std::clamp(s[i], 1, prev.config.bins);
    p.levels[i] = sched.at(static_cast<std::size_t>(b));
  }
  return p;
}

}  // namespace

DurationRun optimize_duration(const ProtocolConfig& base, double duration, const SearchSpace& space,
                              Evaluator& evaluator, const Progress& progress) {
  if (space.max_bins < 1) throw ConfigError("search space needs max_bins >= 1");
  if (space.release_caps.empty()) throw ConfigError("search space needs at least one release cap");
  DurationRun run;
  run.bin_duration = duration;
  ProtocolConfig physics = base;
  physics.timing.duration = duration;

  std::vector<double> floors = space.floors;
  floors.push_back(base.thresholds.fidelity);
  std::sort(floors.begin(), floors.end());
  floors.erase(std::unique(floors.begin(), floors.end()), floors.end());

  std::vector<double> sub = {0.0};
  for (int bins = 1; bins <= space.max_bins; ++bins) {
    evaluator.set_sub_cycle(sub);
    ProtocolConfig probe = physics;
    probe.bins = bins;
    probe.evacuation_bin = bins + 1;
    const double top = evaluator.pump_cap(probe, 0);
    std::vector<double> levels;
    for (double g : evaluator.context().pump_grid) {
      if (g <= top) levels.push_back(g);
    }

    Point point;
    if (run.per_bins.empty()) {
      point.levels.fill(top);
      point.floor = floors.front();
      point.evacuation_bin = bins + 1;
      point.release_cap = space.release_caps.front();
    } else {
      point = extend(run.per_bins.back(), bins);
    }
    auto score = [&](const Point& p) { return evaluator.evaluate(build(physics, bins, p)).success; };
    double best = score(point);

    for (int sweep = 0; sweep < space.sweeps; ++sweep) {
      bool improved = false;
      auto consider = [&](const Point& candidate) {
        const double v = score(candidate);
        if (v > best + 1e-12) {
          best = v;
          point = candidate;
          improved = true;
        }
      };
      for (std::size_t slot = 0; slot < point.levels.size(); ++slot) {
        for (double level : levels) {
          if (level == point.levels[slot]) continue;
          Point c = point;
          c.levels[slot] = level;
          consider(c);
        }
      }
      for (double f : floors) {
        if (f == point.floor) continue;
        Point c = point;
        c.floor = f;
        consider(c);
      }
      for (int m = 1; m <= bins + 1; ++m) {
        if (m == point.evacuation_bin) continue;
        Point c = point;
        c.evacuation_bin = m;
        consider(c);
      }
      for (int cap : space.release_caps) {
        if (cap == point.release_cap) continue;
        Point c = point;
        c.release_cap = cap;
        consider(c);
      }
      if (!improved) break;
    }

    BinOptimum opt;
    opt.bins = bins;
    opt.bin_duration = duration;
    opt.config = build(physics, bins, point);
    opt.evaluation = evaluator.evaluate(opt.config, true);
    opt.success = opt.evaluation.success;
    sub.push_back(opt.success);
    if (progress) progress(duration, bins, opt.success);
    run.per_bins.push_back(std::move(opt));
  }
  return run;
}

OptimizationResult optimize(const ProtocolConfig& base, const std::vector<double>& durations,
                            const SearchSpace& space, const EvaluatorFactory& make_evaluator,
                            const Progress& progress) {
  if (durations.empty()) throw ConfigError("optimize needs at least one bin duration");
  OptimizationResult result;
  for (double d : durations) {
    Evaluator ev = make_evaluator(d);
    result.runs.push_back(optimize_duration(base, d, space, ev, progress));
  }
  for (int bins = 1; bins <= space.max_bins; ++bins) {
    const BinOptimum* best = nullptr;
    for (const DurationRun& r : result.runs) {
      const BinOptimum& o = r.per_bins[static_cast<std::size_t>(bins - 1)];
      if (best == nullptr || o.success > best->success) best = &o;
    }
    BinOptimum chosen = *best;
    if (!result.best.empty() && result.best.back().success > chosen.success) {
      // A longer cycle can always idle through its first bins.
      chosen = result.best.back();
    }
    result.best.push_back(std::move(chosen));
  }
  return result;
}

}  // namespace tsmux::protocol
