#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <vector>

#include "tsmux/drive.hpp"
#include "tsmux/fock.hpp"

namespace tsmux::dynamics {

/// Rates are field decay rates in rad/s; collapse operators are sqrt(2 kappa) a.
struct DynamicsParams {
  double detuning_idler = 0.0;
  double detuning_signal = 0.0;
  double kappa_idler = 0.0;
  double kappa_signal = 0.0;  ///< static signal coupling; zero in pump bins
  double kappa_loss = 0.0;
  PumpPulse pump;
  double quench_fraction = 1e-7;  ///< drive is off once X < quench_fraction * kappa_p
  double steps_per_rate = 50.0;

  void validate() const;
  /// Largest rate that bounds the integration step.
  [[nodiscard]] double fastest_rate() const;
};

enum class JumpChannel { idler_out, idler_loss, signal_out, signal_loss };

struct JumpEvent {
  double time = 0.0;
  JumpChannel channel = JumpChannel::idler_out;
};

struct TrajectoryRecord {
  std::vector<JumpEvent> jumps;
  TwoModeState final_state;         ///< normalised, at t1
  int sampled_signal = 0;           ///< projective sample of n_s at t1
  int sampled_idler = 0;            ///< matching n_i
  double max_edge_population = 0.0; ///< largest cutoff-shell population seen
  double split_time = 0.0;

  /// Jumps of `channel` in (from, to].
  [[nodiscard]] int count(JumpChannel channel, double from, double to) const;
  [[nodiscard]] int idler_before_split() const;
  [[nodiscard]] int idler_after_split(double end) const;
};

/// Quantum-jump integrator for one bin. The deterministic no-jump evolution of each initial
/// sector is computed once and shared by all trajectories; `run` is thread-safe.
class TrajectoryEngine {
 public:
  TrajectoryEngine(TwoModeState initial, double t0, double t1, double t_split, DynamicsParams params);
  ~TrajectoryEngine();
  TrajectoryEngine(TrajectoryEngine&&) noexcept;
  TrajectoryEngine& operator=(TrajectoryEngine&&) noexcept;

  [[nodiscard]] TrajectoryRecord run(std::uint64_t seed) const;

  /// Step size of the drive-on phase and the time the drive is switched off.
  [[nodiscard]] double step() const;
  [[nodiscard]] double drive_end() const;
  /// 1 - |<0,0|psi~(t1)>|^2 for the no-jump evolution from the initial state.
  [[nodiscard]] double no_jump_pair_probability() const;
  /// Normalised no-jump state at t1 (Schroedinger picture).
  [[nodiscard]] TwoModeState no_jump_state() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Single trajectory; builds an engine internally.
[[nodiscard]] TrajectoryRecord run_trajectory(const TwoModeState& initial, double t0, double t1, double t_split,
                                              const DynamicsParams& params, std::uint64_t seed);

}  // namespace tsmux::dynamics
