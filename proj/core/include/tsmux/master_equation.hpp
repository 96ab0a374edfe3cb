#pragma once

#include <complex>
#include <vector>

#include "tsmux/fock.hpp"
#include "tsmux/trajectory.hpp"

namespace tsmux::dynamics {

/// Dense two-mode density operator over the same truncated basis as TwoModeState.
class DensityMatrix {
 public:
  DensityMatrix() = default;
  explicit DensityMatrix(int cutoff);
  [[nodiscard]] static DensityMatrix pure(const TwoModeState& psi);

  [[nodiscard]] int cutoff() const { return cutoff_; }
  [[nodiscard]] int dimension() const { return dim_; }
  [[nodiscard]] Complex operator()(int row, int col) const { return rho_[static_cast<std::size_t>(row) * dim_ + col]; }
  Complex& operator()(int row, int col) { return rho_[static_cast<std::size_t>(row) * dim_ + col]; }
  [[nodiscard]] std::vector<Complex>& data() { return rho_; }
  [[nodiscard]] const std::vector<Complex>& data() const { return rho_; }

  [[nodiscard]] double trace() const;
  [[nodiscard]] double population(int n_signal, int n_idler) const;
  [[nodiscard]] double mean_signal() const;
  [[nodiscard]] double mean_idler() const;
  [[nodiscard]] double edge_population() const;

 private:
  int cutoff_ = 0;
  int dim_ = 0;
  std::vector<Complex> rho_;
};

struct MasterEquationOptions {
  /// When false the recycling terms C rho C^dagger are dropped, giving the no-jump conditional
  /// operator whose trace is the probability of no collapse.
  bool include_jumps = true;
  double steps_per_rate = 50.0;
  double truncation_limit = 1e-4;
};

/// Lindblad evolution in the Schroedinger picture (detunings included) with fixed-step RK4.
/// Throws TruncationError if the cutoff shell exceeds options.truncation_limit.
[[nodiscard]] DensityMatrix master_equation_evolve(const DensityMatrix& initial, double t0, double t1,
                                                   const DynamicsParams& params,
                                                   const MasterEquationOptions& options = {});

}  // namespace tsmux::dynamics
