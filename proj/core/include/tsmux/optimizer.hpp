#pragma once

#include <functional>
#include <vector>

#include "tsmux/protocol.hpp"

namespace tsmux::protocol {

struct SearchSpace {
  int max_bins = 10;
  /// F_ev candidates; the fidelity threshold is always added.
  std::vector<double> floors = {0.0, 0.5, 0.8, 0.9, 0.95};
  std::vector<int> release_caps = {3};
  int sweeps = 3;
};

struct BinOptimum {
  int bins = 0;
  double bin_duration = 0.0;
  double success = 0.0;
  ProtocolConfig config;
  Evaluation evaluation;
};

struct DurationRun {
  double bin_duration = 0.0;
  std::vector<BinOptimum> per_bins;  ///< index M - 1
};

struct OptimizationResult {
  std::vector<DurationRun> runs;
  std::vector<BinOptimum> best;  ///< best over durations for each M, index M - 1
};

/// Builds an evaluator (tables and release model) for one bin duration.
using EvaluatorFactory = std::function<Evaluator(double)>;
using Progress = std::function<void(double duration, int bins, double success)>;

/// Geometric grid of `count` bin durations spanning [5, 200] / (2 kappa_i).
[[nodiscard]] std::vector<double> bin_duration_grid(double kappa_idler, int count);

/// Coordinate descent for M = 1..max_bins at every duration, each M starting from the M - 1
/// optimum. `base` supplies the fixed physics (efficiency, thresholds, decision lag, kappa_L).
[[nodiscard]] OptimizationResult optimize(const ProtocolConfig& base, const std::vector<double>& durations,
                                          const SearchSpace& space, const EvaluatorFactory& make_evaluator,
                                          const Progress& progress = {});

/// Runs one duration; exposed for incremental sweeps.
[[nodiscard]] DurationRun optimize_duration(const ProtocolConfig& base, double duration, const SearchSpace& space,
                                            Evaluator& evaluator, const Progress& progress = {});

}  // namespace tsmux::protocol
