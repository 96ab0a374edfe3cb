#pragma once

#include <array>
#include <vector>

#include "tsmux/bin_table.hpp"
#include "tsmux/release.hpp"

namespace tsmux::inference {

/// Unnormalised joint masses P(n, sequence) indexed by the signal photon number n.
using Masses = std::vector<double>;

/// Binomial probability that `detected` of `emitted` photons are registered.
[[nodiscard]] double thin_detector(int emitted, int detected, double efficiency);

/// Probability that of n_prev photons, n_cavity stay and n_signal leave through the signal
/// filter, the rest being lost. Zero for impossible counts.
[[nodiscard]] double release_multinomial(int n_prev, int n_signal, int n_cavity, double p_cavity, double p_signal);

/// Photon-number distribution after storing for dt with intrinsic loss only.
[[nodiscard]] Masses storage_update(const Masses& masses, double dt, double kappa_loss);

/// Second-order correlation of a photon-number distribution. Throws NumericalError when the
/// mean photon number is zero.
[[nodiscard]] double g2_of(const Masses& masses);

/// Estimated photon number from the detection number at the decision time.
[[nodiscard]] int estimate_state(int x_star, int x_prev);

struct Thresholds {
  double fidelity = 0.985;
  double g2 = 1.0;
};

struct Verdict {
  double fidelity = 0.0;
  double g2 = 0.0;
  bool pass = false;
};

/// Fidelity P(n = 1 | sequence) and g2 of the normalised masses, with the threshold test.
/// A distribution with zero mean photon number fails.
[[nodiscard]] Verdict judge(const Masses& masses, const Thresholds& thresholds);

/// One bin's effect on a photon number: next photon number, change of the detection number up
/// to the decision time and after it, and probability.
struct Transition {
  int n_next = 0;
  int dx_pre = 0;
  int dx_post = 0;
  double probability = 0.0;
};

class TransitionKernel {
 public:
  /// Pumped bin. tables[k] is the outcome table for initial signal number k; idler emissions are
  /// thinned with the detector efficiency. Prior photon numbers above 2 have no transitions.
  [[nodiscard]] static TransitionKernel pump(const std::array<const dynamics::BinOutcomeTable*, 3>& tables,
                                             double efficiency);
  /// Release bin for up to max_prev photons; signal detections decrease the detection number.
  [[nodiscard]] static TransitionKernel release(const dynamics::ReleaseStages& stages, double efficiency,
                                                int max_prev);
  /// Storage with survival probability p_keep per photon; no detections.
  [[nodiscard]] static TransitionKernel storage(double p_keep, int max_prev);

  [[nodiscard]] int max_prev() const { return static_cast<int>(rows_.size()) - 1; }
  [[nodiscard]] const std::vector<Transition>& from(int n_prev) const;

 private:
  std::vector<std::vector<Transition>> rows_;
};

/// Posterior masses for observed increments (dx_pre, dx_post). Prior mass on photon numbers the
/// kernel does not cover is added to *dropped when given.
[[nodiscard]] Masses apply_kernel(const Masses& prior, const TransitionKernel& kernel, int dx_pre, int dx_post,
                                  double* dropped = nullptr);
/// Same with the post-decision detections summed out.
[[nodiscard]] Masses apply_kernel_at_decision(const Masses& prior, const TransitionKernel& kernel, int dx_pre,
                                              double* dropped = nullptr);

/// Pumped-bin update of P(n^{m-1}, x^{m-1}) to P(n^m, x^{m*}, x^m).
[[nodiscard]] Masses pump_update(const Masses& prior, const std::array<const dynamics::BinOutcomeTable*, 3>& tables,
                                 double efficiency, int x_prev, int x_star, int x_end);

/// Release-bin update with the fate probabilities at the decision time and bin end.
[[nodiscard]] Masses release_update(const Masses& prior, const dynamics::ReleaseStages& stages, double efficiency,
                                    int x_prev, int x_star, int x_end);

}  // namespace tsmux::inference
