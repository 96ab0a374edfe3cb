#pragma once

#include <vector>

namespace tsmux::dynamics {

/// Classical pump-mode drive. The pair-generation rate is X(t) = scale * F(t)^2 / max F^2 where
/// F is the pump field filtered by the pump cavity (rate kappa_p) and |S|^2 is Gaussian of width
/// `width`, centred at `center`.
struct PumpPulse {
  double scale = 0.0;     ///< peak X (rad/s)
  double width = 1e-12;   ///< tau_p (s)
  double center = 0.0;    ///< t_p (s)
  double kappa_pump = 0.0;
  double log_peak_field = 0.0;  ///< log max F, filled by place_pump
  bool placed = false;
};

/// X(t) in rad/s. Requires a pulse returned by place_pump.
[[nodiscard]] double pump_energy(double t, const PumpPulse& pulse);

/// Offset (t - t_p) at which X peaks.
[[nodiscard]] double pump_peak_offset(double kappa_pump, double width);

/// Returns `pulse` with `center` moved so that X(bin_start) = rise_ratio * max X on the rising edge.
[[nodiscard]] PumpPulse place_pump(PumpPulse pulse, double bin_start, double rise_ratio = 1e-3);

/// First time after the peak at which X(t) falls below `fraction` * kappa_p. Past it the drive
/// is treated as switched off.
[[nodiscard]] double pump_quench_time(const PumpPulse& pulse, double fraction = 1e-7);

/// Signal coupling during a release: a Gaussian control pulse (width tau_r, centre t_r) seen
/// through a first-order response of rate kappa_psi, switched on at `start`, scaled to `peak`.
struct ReleaseProfile {
  double start = 0.0;          ///< t_{m-1}
  double response_rate = 0.0;  ///< kappa_psi (1/s)
  double width = 1e-12;        ///< tau_r (s)
  double center = 0.0;         ///< t_r (s)
  double peak = 0.0;           ///< max kappa_s (rad/s) before clipping
  double kappa_max = 0.0;      ///< clip level; <= 0 disables clipping
  double shape_max = 0.0;      ///< max of release_shape, filled by place_release
};

/// Places t_r so that the Gaussian control pulse is 1e-3 of its peak at `start` and records
/// the shape maximum.
[[nodiscard]] ReleaseProfile place_release(ReleaseProfile profile);

/// Unnormalised response g(t); zero for t <= start.
[[nodiscard]] double release_shape(double t, const ReleaseProfile& profile);

/// Time and value of the maximum of release_shape.
struct ShapePeak {
  double time = 0.0;
  double value = 0.0;
};
[[nodiscard]] ShapePeak release_shape_peak(const ReleaseProfile& profile);

/// kappa_s(t) = min(peak * g(t) / max g, kappa_max).
[[nodiscard]] double release_rate(double t, const ReleaseProfile& profile);

}  // namespace tsmux::dynamics
