#pragma once

#include <vector>

#include "tsmux/bin_table.hpp"
#include "tsmux/drive.hpp"

namespace tsmux::dynamics {

/// Fate probabilities of one signal photon present at the start of a release bin.
struct ReleaseCurve {
  std::vector<double> time;
  std::vector<double> cavity;  ///< p_c(t)
  std::vector<double> signal;  ///< p_s(t), coupled into the signal waveguide
  std::vector<double> loss;    ///< p_L(t) = 1 - p_c - p_s
};

/// Integrates the rate equations for a placed profile. `times` must be sorted and >= start.
[[nodiscard]] ReleaseCurve release_probabilities(const std::vector<double>& times, const ReleaseProfile& profile,
                                                 double kappa_loss);

struct ReleaseSettings {
  double response_rate = 0.0;  ///< kappa_psi (1/s)
  double width = 1e-12;        ///< default tau_r (s)
  double kappa_max = 0.0;      ///< coupling cap (rad/s)
};

/// Fate probabilities at the decision time and at the end of the bin.
struct ReleaseStages {
  double cavity_at_decision = 1.0;
  double signal_at_decision = 0.0;
  double cavity_at_end = 1.0;
  double signal_at_end = 0.0;
};

/// Profile over [0, duration] reaching p_c(duration) = target. Uses the default width and scales
/// the peak; when the cap is reached first the width is increased instead. Throws
/// NumericalError if the target is below what the widest pulse in the bin can reach.
[[nodiscard]] ReleaseProfile calibrate_release(double target, const BinTiming& timing,
                                               const ReleaseSettings& settings, double kappa_loss);

[[nodiscard]] ReleaseStages release_stages(const ReleaseProfile& profile, const BinTiming& timing,
                                           double kappa_loss);

}  // namespace tsmux::dynamics
