#pragma once

#include <array>
#include <complex>
#include <span>
#include <vector>

namespace tsmux::spectral {

using Complex = std::complex<double>;

inline constexpr double kSpeedOfLight = 299'792'458.0;  // m/s

/// Inputs for building a storage-ring geometry with the standard path-length ratios.
struct GeometrySpec {
  double ring_length = 100e-6;     ///< storage ring circumference L_c (m)
  double index_real = 2.5;         ///< real part of the effective index
  double index_imag = 1e-7;        ///< imaginary part of the effective index (loss)
  double group_index = 4.0;
  double filter_through_sq = 0.95; ///< nu^2 of the idler and signal MZI couplers
  double aux_through_sq = 0.9;     ///< nu_a^2 of the auxiliary ring coupler
  double wavelength = 1.55e-6;     ///< pump wavelength target (m); snapped to a ring resonance
};

/// Physical parameters of the MZI-coupled storage ring, drop filter and auxiliary ring.
///
/// All spectral quantities are derived from these fields. Frequencies are angular (rad/s),
/// lengths in metres.
struct DeviceGeometry {
  double ring_length = 0.0;
  double idler_path_difference = 0.0;   ///< Delta L_i
  double signal_path_difference = 0.0;  ///< Delta L_s
  double drop_path_difference = 0.0;    ///< Delta L_di
  double arm_length = 0.0;              ///< in-ring MZI arm, sets psi_nB = k * arm_length
  double aux_ring_length = 0.0;         ///< L_r
  double idler_through = 0.0;           ///< nu_i
  double signal_through = 0.0;          ///< nu_s
  double aux_through = 0.0;             ///< nu_a
  double index_real = 0.0;
  double index_imag = 0.0;
  double group_index = 0.0;
  double reference_frequency = 0.0;     ///< omega_0
  double pump_frequency = 0.0;          ///< omega_p

  /// Free spectral range Omega_c = 2 pi c / (n_g L_c).
  [[nodiscard]] double free_spectral_range() const;
  [[nodiscard]] double round_trip_time() const;
  /// True when Delta L_i = L_c/4, Delta L_di = L_c/2, Delta L_s = L_c and L_r = L_c/16.
  [[nodiscard]] bool has_standard_ratios() const;
  /// Throws ConfigError when an invariant is violated.
  void validate() const;
};

/// Builds the default geometry: standard path-length ratios, in-ring arms of L_c/8 and the
/// pump placed on the ring resonance closest to the requested wavelength.
[[nodiscard]] DeviceGeometry make_geometry(const GeometrySpec& spec);

/// Static phase offsets of the tunable elements.
struct FilterTuning {
  double idler = 0.0;   ///< Delta psi_i
  double signal = 0.0;  ///< Delta psi_s
  double drop = 0.0;    ///< Delta theta_i
  double aux = 0.0;     ///< auxiliary ring round-trip phase offset
};

/// Offsets realising the filter conditions: psi_i(omega_i) = 2 pi, psi_s(omega_s) = pi,
/// theta_i(omega_p) = pi, and an auxiliary-ring resonance at omega_p + 9 Omega_c.
[[nodiscard]] FilterTuning static_tuning(const DeviceGeometry& g);

/// Delta psi_s giving Re psi_s(omega_s) = psi_target.
[[nodiscard]] double signal_tuning_for_phase(const DeviceGeometry& g, double psi_target);

/// 2x2 complex matrix, row-major.
struct ComplexMatrix2 {
  std::array<Complex, 4> m{};

  [[nodiscard]] Complex operator()(int row, int col) const { return m[2 * row + col]; }
  Complex& operator()(int row, int col) { return m[2 * row + col]; }

  [[nodiscard]] ComplexMatrix2 operator*(const ComplexMatrix2& rhs) const;
  [[nodiscard]] ComplexMatrix2 adjoint() const;
  /// Frobenius norm of (M^dagger M - I).
  [[nodiscard]] double unitarity_defect() const;
};

enum class Filter { idler, signal };

[[nodiscard]] Complex propagation_constant(double omega, const DeviceGeometry& g);

/// Arm phase difference psi_n(omega) = k(omega) Delta L_n + Delta psi_n (complex when lossy).
[[nodiscard]] Complex filter_phase(double omega, double tuning, Filter which, const DeviceGeometry& g);

[[nodiscard]] ComplexMatrix2 mzi_transfer(double omega, double tuning, Filter which,
                                          const DeviceGeometry& g);

/// Drop filter matrix with nu fixed at 1/sqrt(2).
[[nodiscard]] ComplexMatrix2 drop_transfer(double omega, double tuning, const DeviceGeometry& g);

/// zeta_n = T22 e^{-i psi_nB} = nu^2 - e^{i psi_n}(1 - nu^2).
[[nodiscard]] Complex coupling_tuning(double omega, double tuning, Filter which, const DeviceGeometry& g);

/// kappa_n = -(c / (n_g L_c)) ln|zeta_n|. Throws NumericalError when |zeta_n| = 0.
[[nodiscard]] double coupling_rate(double omega, double tuning, Filter which, const DeviceGeometry& g);

/// Intrinsic field decay rate of the ring, c Im(k) / n_g.
[[nodiscard]] double intrinsic_loss_rate(const DeviceGeometry& g);

/// Field powers normalised by the internal source power |s_f|^2.
struct SpectralResponse {
  std::vector<double> omega;
  std::vector<double> circulating;  ///< |s_ci+ / s_f|^2
  std::vector<double> signal_out;   ///< |s_s- / s_f|^2
  std::vector<double> idler_out;    ///< |s_i- / s_f|^2, after the drop filter
  std::vector<double> drop_out;     ///< |s_d- / s_f|^2
};

/// Complex output fields for one frequency, all divided by s_f.
struct FieldSolution {
  Complex circulating;   ///< s_ci+
  Complex idler_prime;   ///< s_i-' before the drop filter
  Complex signal_out;    ///< s_s-
  Complex idler_out;     ///< s_i-
  Complex drop_out;      ///< s_d-
  Complex signal_return; ///< s_cs- (field re-entering the idler side after one loop)
};

/// Solves the internally fed ring at one frequency. `aux_through` <= 0 disables the
/// auxiliary ring; otherwise its reflection factor multiplies the round trip.
[[nodiscard]] FieldSolution solve_fields(double omega, double idler_tuning, double signal_tuning,
                                         const DeviceGeometry& g, double aux_through = 0.0);

/// Storage ring without the auxiliary ring. Throws NumericalError if a resonance
/// denominator vanishes exactly.
[[nodiscard]] SpectralResponse circulating_response(std::span<const double> omega, double idler_tuning,
                                                    double signal_tuning, const DeviceGeometry& g);

/// Storage ring with an auxiliary ring of coupling `aux_through` (nu_a, not squared) and
/// length g.aux_ring_length. Filters use static_tuning().
[[nodiscard]] SpectralResponse aux_circulating_response(std::span<const double> omega, double aux_through,
                                                        const DeviceGeometry& g);

/// Auxiliary-ring factor nu_a - (1 - nu_a^2) e^{i phi_a} / (1 - nu_a e^{i phi_a}).
[[nodiscard]] Complex aux_reflection(double omega, double aux_through, const DeviceGeometry& g);

/// Phase of the MZI-coupled round trip, Re(k) L_c + arg(zeta_i zeta_s) [+ arg(aux)].
/// Continuous in omega while both zeta stay in the right half plane (nu^2 > 1/2).
[[nodiscard]] double round_trip_phase(double omega, double idler_tuning, double signal_tuning,
                                      const DeviceGeometry& g, double aux_through = 0.0);

/// Resonance shift delta_s = omega_s(Delta psi_s) - omega_s(psi_s = pi), found by
/// bisection inside +-Omega_c/2 around omega_s.
[[nodiscard]] double resonance_shift(double signal_tuning, const DeviceGeometry& g);

/// Frequencies tied to one FSR index p >= 0.
struct ModeSet {
  double signal = 0.0;       ///< omega_p + (1 + 4p) Omega_c
  double idler = 0.0;        ///< omega_p - (1 + 4p) Omega_c
  double suppressed = 0.0;   ///< omega_p + (9 + 16p) Omega_c
  double convertible = 0.0;  ///< omega_p + (5 + 8p) Omega_c
};

[[nodiscard]] ModeSet mode_arithmetic(int p_index, const DeviceGeometry& g);

/// Resonance of the statically tuned ring nearest omega_guess (window +-Omega_c/2).
[[nodiscard]] double mode_resonance(double omega_guess, const DeviceGeometry& g, double aux_through = 0.0);

/// Peak circulating power of the ring mode nearest omega_guess, located by bisection on
/// round_trip_phase (window +-Omega_c/2).
[[nodiscard]] double mode_peak_power(double omega_guess, const DeviceGeometry& g, double aux_through = 0.0);

}  // namespace tsmux::spectral
