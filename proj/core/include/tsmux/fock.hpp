#pragma once

#include <complex>
#include <vector>

namespace tsmux::dynamics {

using Complex = std::complex<double>;

/// Truncated two-mode Fock state; amplitudes indexed by (n_s, n_i) with 0 <= n <= cutoff.
class TwoModeState {
 public:
  TwoModeState() = default;
  explicit TwoModeState(int cutoff);

  /// |n_s, n_i>, normalised.
  [[nodiscard]] static TwoModeState fock(int cutoff, int n_signal, int n_idler);

  [[nodiscard]] int cutoff() const { return cutoff_; }
  [[nodiscard]] int dimension() const { return (cutoff_ + 1) * (cutoff_ + 1); }
  [[nodiscard]] int index(int n_signal, int n_idler) const { return n_signal * (cutoff_ + 1) + n_idler; }

  [[nodiscard]] Complex amplitude(int n_signal, int n_idler) const { return amp_[index(n_signal, n_idler)]; }
  Complex& amplitude(int n_signal, int n_idler) { return amp_[index(n_signal, n_idler)]; }
  [[nodiscard]] const std::vector<Complex>& amplitudes() const { return amp_; }
  std::vector<Complex>& amplitudes() { return amp_; }

  [[nodiscard]] double norm_squared() const;
  void normalize();
  [[nodiscard]] double population(int n_signal, int n_idler) const;
  [[nodiscard]] double mean_signal() const;
  [[nodiscard]] double mean_idler() const;
  /// Population with either mode at the cutoff, relative to the norm.
  [[nodiscard]] double edge_population() const;
  /// Signal-number distribution with the idler traced out, normalised.
  [[nodiscard]] std::vector<double> signal_distribution() const;

 private:
  int cutoff_ = 0;
  std::vector<Complex> amp_;
};

}  // namespace tsmux::dynamics
