#pragma once

#include <cstdint>

#include "tsmux/bin_table.hpp"

namespace tsmux::dynamics {

/// Trajectory estimate with its standard error next to the density-matrix value.
struct Comparison {
  double estimate = 0.0;
  double sigma = 0.0;
  double oracle = 0.0;

  /// |estimate - oracle| in units of sigma; 0 when both agree exactly.
  [[nodiscard]] double z() const;
  [[nodiscard]] bool within(double sigmas) const { return z() <= sigmas; }
};

struct UnravelingCheck {
  double pump_probability = 0.0;
  int trajectories = 0;
  int cutoff = 0;
  Comparison pair;    ///< P(at least one pair by the bin end)
  Comparison signal;  ///< <n_s> at the bin end
  Comparison idler;   ///< <n_i> at the bin end
  double oracle_trace = 0.0;

  [[nodiscard]] bool pass(double sigmas = 3.0) const {
    return pair.within(sigmas) && signal.within(sigmas) && idler.within(sigmas);
  }
};

/// Runs `trajectories` fresh-cavity trajectories at one pump setting and compares them with the
/// master equation (full, and without recycling terms for the pair probability).
[[nodiscard]] UnravelingCheck check_unraveling(double pump_probability, const DynamicsParams& params,
                                               const BinTiming& timing, int trajectories, std::uint64_t master_seed,
                                               int jobs = 1);

}  // namespace tsmux::dynamics
