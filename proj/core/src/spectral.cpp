#include "tsmux/spectral.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "tsmux/errors.hpp"

namespace tsmux::spectral {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr Complex kI{0.0, 1.0};

double wrap_two_pi(double phase) {
  double r = std::fmod(phase, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  return r;
}

// k(omega) * length, written through the detuning to keep the large constant term exact.
Complex phase_over(double omega, double length, const DeviceGeometry& g) {
  return propagation_constant(omega, g) * length;
}

double path_difference(Filter which, const DeviceGeometry& g) {
  return which == Filter::idler ? g.idler_path_difference : g.signal_path_difference;
}

double through(Filter which, const DeviceGeometry& g) {
  return which == Filter::idler ? g.idler_through : g.signal_through;
}

ComplexMatrix2 mzi_from_phase(Complex psi, Complex psi_arm, double nu) {
  const Complex e_psi = std::exp(kI * psi);
  const Complex e_arm = std::exp(kI * psi_arm);
  const double nu2 = nu * nu;
  const double cross = nu * std::sqrt(1.0 - nu2);
  ComplexMatrix2 t;
  t(0, 0) = e_arm * ((1.0 + e_psi) * nu2 - 1.0);
  t(0, 1) = e_arm * kI * (1.0 + e_psi) * cross;
  t(1, 0) = t(0, 1);
  t(1, 1) = e_arm * (nu2 - e_psi * (1.0 - nu2));
  return t;
}

}  // namespace

double DeviceGeometry::free_spectral_range() const {
  return kTwoPi * kSpeedOfLight / (group_index * ring_length);
}

double DeviceGeometry::round_trip_time() const { return group_index * ring_length / kSpeedOfLight; }

bool DeviceGeometry::has_standard_ratios() const {
  const auto close = [this](double value, double fraction) {
    return std::abs(value - ring_length * fraction) <= 1e-12 * ring_length;
  };
  return close(idler_path_difference, 0.25) && close(drop_path_difference, 0.5) &&
         close(signal_path_difference, 1.0) && close(aux_ring_length, 1.0 / 16.0);
}

void DeviceGeometry::validate() const {
  std::ostringstream problems;
  if (!(ring_length > 0.0)) problems << " ring_length must be > 0;";
  const auto open_unit = [](double v) { return v > 0.0 && v < 1.0; };
  if (!open_unit(idler_through)) problems << " idler_through must lie in (0,1);";
  if (!open_unit(signal_through)) problems << " signal_through must lie in (0,1);";
  if (!(aux_through > 0.0 && aux_through <= 1.0)) problems << " aux_through must lie in (0,1];";
  if (index_imag < 0.0) problems << " index_imag must be >= 0;";
  if (!(group_index > 0.0)) problems << " group_index must be > 0;";
  if (!(reference_frequency > 0.0) || !(pump_frequency > 0.0)) problems << " frequencies must be > 0;";
  const std::string text = problems.str();
  if (!text.empty()) throw ConfigError("invalid device geometry:" + text);
}

DeviceGeometry make_geometry(const GeometrySpec& spec) {
  DeviceGeometry g;
  g.ring_length = spec.ring_length;
  g.idler_path_difference = spec.ring_length / 4.0;
  g.drop_path_difference = spec.ring_length / 2.0;
  g.signal_path_difference = spec.ring_length;
  g.arm_length = spec.ring_length / 8.0;
  g.aux_ring_length = spec.ring_length / 16.0;
  g.idler_through = std::sqrt(spec.filter_through_sq);
  g.signal_through = std::sqrt(spec.filter_through_sq);
  g.aux_through = std::sqrt(spec.aux_through_sq);
  g.index_real = spec.index_real;
  g.index_imag = spec.index_imag;
  g.group_index = spec.group_index;
  // Snap omega_0 to the ring resonance nearest the requested wavelength.
  const double order = std::round(spec.index_real * spec.ring_length / spec.wavelength);
  g.reference_frequency = kTwoPi * kSpeedOfLight * order / (spec.index_real * spec.ring_length);
  g.pump_frequency = g.reference_frequency;
  g.validate();
  return g;
}

FilterTuning static_tuning(const DeviceGeometry& g) {
  const double fsr = g.free_spectral_range();
  const double w_i = g.pump_frequency - fsr;
  const double w_s = g.pump_frequency + fsr;
  FilterTuning t;
  t.idler = wrap_two_pi(kTwoPi - phase_over(w_i, g.idler_path_difference, g).real());
  t.signal = wrap_two_pi(kPi - phase_over(w_s, g.signal_path_difference, g).real());
  t.drop = wrap_two_pi(kPi - phase_over(g.pump_frequency, g.drop_path_difference, g).real());
  t.aux = wrap_two_pi(-phase_over(g.pump_frequency + 9.0 * fsr, g.aux_ring_length, g).real());
  return t;
}

double signal_tuning_for_phase(const DeviceGeometry& g, double psi_target) {
  const double w_s = g.pump_frequency + g.free_spectral_range();
  return wrap_two_pi(psi_target - phase_over(w_s, g.signal_path_difference, g).real());
}

ComplexMatrix2 ComplexMatrix2::operator*(const ComplexMatrix2& rhs) const {
  ComplexMatrix2 out;
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c) {
      out(r, c) = (*this)(r, 0) * rhs(0, c) + (*this)(r, 1) * rhs(1, c);
    }
  }
  return out;
}

ComplexMatrix2 ComplexMatrix2::adjoint() const {
  ComplexMatrix2 out;
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c) out(r, c) = std::conj((*this)(c, r));
  }
  return out;
}

double ComplexMatrix2::unitarity_defect() const {
  const ComplexMatrix2 p = adjoint() * (*this);
  double sum = 0.0;
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c) sum += std::norm(p(r, c) - (r == c ? 1.0 : 0.0));
  }
  return std::sqrt(sum);
}

Complex propagation_constant(double omega, const DeviceGeometry& g) {
  const Complex n_eff{g.index_real, g.index_imag};
  return n_eff * (g.reference_frequency / kSpeedOfLight) +
         (g.group_index / kSpeedOfLight) * (omega - g.reference_frequency);
}

double intrinsic_loss_rate(const DeviceGeometry& g) {
  return kSpeedOfLight * propagation_constant(g.reference_frequency, g).imag() / g.group_index;
}

Complex filter_phase(double omega, double tuning, Filter which, const DeviceGeometry& g) {
  return phase_over(omega, path_difference(which, g), g) + tuning;
}

ComplexMatrix2 mzi_transfer(double omega, double tuning, Filter which, const DeviceGeometry& g) {
  return mzi_from_phase(filter_phase(omega, tuning, which, g), phase_over(omega, g.arm_length, g),
                        through(which, g));
}

ComplexMatrix2 drop_transfer(double omega, double tuning, const DeviceGeometry& g) {
  const Complex theta = phase_over(omega, g.drop_path_difference, g) + tuning;
  return mzi_from_phase(theta, phase_over(omega, g.arm_length, g), std::numbers::sqrt2 / 2.0);
}

Complex coupling_tuning(double omega, double tuning, Filter which, const DeviceGeometry& g) {
  const double nu2 = through(which, g) * through(which, g);
  return nu2 - std::exp(kI * filter_phase(omega, tuning, which, g)) * (1.0 - nu2);
}

double coupling_rate(double omega, double tuning, Filter which, const DeviceGeometry& g) {
  const double magnitude = std::abs(coupling_tuning(omega, tuning, which, g));
  if (magnitude == 0.0) throw NumericalError("coupling_rate: |zeta| = 0, coupling is singular");
  return -std::log(magnitude) / g.round_trip_time();
}

Complex aux_reflection(double omega, double aux_through, const DeviceGeometry& g) {
  if (aux_through >= 1.0) return {1.0, 0.0};
  const FilterTuning tuning = static_tuning(g);
  // Lossless auxiliary ring: only the real round-trip phase enters.
  const Complex e_phi = std::exp(kI * (phase_over(omega, g.aux_ring_length, g).real() + tuning.aux));
  const double nu = aux_through;
  return nu - (1.0 - nu * nu) * e_phi / (1.0 - nu * e_phi);
}

FieldSolution solve_fields(double omega, double idler_tuning, double signal_tuning, const DeviceGeometry& g,
                           double aux_through) {
  const ComplexMatrix2 t_i = mzi_transfer(omega, idler_tuning, Filter::idler, g);
  const ComplexMatrix2 t_s = mzi_transfer(omega, signal_tuning, Filter::signal, g);
  const ComplexMatrix2 d = drop_transfer(omega, static_tuning(g).drop, g);
  const Complex aux = aux_through > 0.0 ? aux_reflection(omega, aux_through, g) : Complex{1.0, 0.0};

  // Segment between the idler and signal filters; the remainder closes the loop.
  const double arc = 0.5 * (g.ring_length - 2.0 * g.arm_length);
  const Complex e_is = std::exp(kI * phase_over(omega, arc, g));
  const Complex e_si = e_is;

  const Complex loop = e_si * t_s(1, 1) * e_is * aux * t_i(1, 1);
  const Complex denominator = 1.0 - loop;
  if (denominator == Complex{0.0, 0.0}) {
    throw NumericalError("solve_fields: resonance denominator vanished");
  }
  FieldSolution f;
  f.circulating = 1.0 / denominator;
  const Complex ci_minus = t_i(1, 1) * f.circulating;
  f.idler_prime = t_i(0, 1) * f.circulating;
  const Complex cs_plus = e_is * aux * ci_minus;
  f.signal_out = t_s(0, 1) * cs_plus;
  f.signal_return = t_s(1, 1) * cs_plus;
  f.idler_out = d(0, 1) * f.idler_prime;
  f.drop_out = d(0, 0) * f.idler_prime;
  return f;
}

namespace {

SpectralResponse sweep(std::span<const double> omega, double idler_tuning, double signal_tuning,
                       const DeviceGeometry& g, double aux_through) {
  SpectralResponse r;
  r.omega.assign(omega.begin(), omega.end());
  r.circulating.reserve(omega.size());
  r.signal_out.reserve(omega.size());
  r.idler_out.reserve(omega.size());
  r.drop_out.reserve(omega.size());
  for (double w : omega) {
    const FieldSolution f = solve_fields(w, idler_tuning, signal_tuning, g, aux_through);
    r.circulating.push_back(std::norm(f.circulating));
    r.signal_out.push_back(std::norm(f.signal_out));
    r.idler_out.push_back(std::norm(f.idler_out));
    r.drop_out.push_back(std::norm(f.drop_out));
  }
  return r;
}

}  // namespace

SpectralResponse circulating_response(std::span<const double> omega, double idler_tuning,
                                      double signal_tuning, const DeviceGeometry& g) {
  return sweep(omega, idler_tuning, signal_tuning, g, 0.0);
}

SpectralResponse aux_circulating_response(std::span<const double> omega, double aux_through,
                                          const DeviceGeometry& g) {
  const FilterTuning t = static_tuning(g);
  return sweep(omega, t.idler, t.signal, g, aux_through);
}

double round_trip_phase(double omega, double idler_tuning, double signal_tuning, const DeviceGeometry& g,
                        double aux_through) {
  double phase = phase_over(omega, g.ring_length, g).real() +
                 std::arg(coupling_tuning(omega, idler_tuning, Filter::idler, g)) +
                 std::arg(coupling_tuning(omega, signal_tuning, Filter::signal, g));
  if (aux_through > 0.0) phase += std::arg(aux_reflection(omega, aux_through, g));
  return phase;
}

namespace {

// Root of round_trip_phase(center + delta) = target for delta in [-half, half].
double bisect_resonance(double center, double target, double idler_tuning, double signal_tuning,
                        const DeviceGeometry& g, double aux_through) {
  const double half = 0.5 * g.free_spectral_range();
  auto f = [&](double delta) {
    return round_trip_phase(center + delta, idler_tuning, signal_tuning, g, aux_through) - target;
  };
  double lo = -half;
  double hi = half;
  double f_lo = f(lo);
  const double f_hi = f(hi);
  if (f_lo * f_hi > 0.0) {
    throw NumericalError("resonance search: no root of the round-trip phase inside +-FSR/2");
  }
  const double tolerance = 1e-12 * (hi - lo);
  while (hi - lo > tolerance) {
    const double mid = 0.5 * (lo + hi);
    const double f_mid = f(mid);
    if (f_mid == 0.0) return mid;
    if ((f_mid < 0.0) == (f_lo < 0.0)) {
      lo = mid;
      f_lo = f_mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

double resonance_shift(double signal_tuning, const DeviceGeometry& g) {
  const FilterTuning t = static_tuning(g);
  const double w_s = g.pump_frequency + g.free_spectral_range();
  const double target = kTwoPi * std::round(round_trip_phase(w_s, t.idler, t.signal, g) / kTwoPi);
  const double reference = bisect_resonance(w_s, target, t.idler, t.signal, g, 0.0);
  const double shifted = bisect_resonance(w_s, target, t.idler, signal_tuning, g, 0.0);
  return shifted - reference;
}

ModeSet mode_arithmetic(int p_index, const DeviceGeometry& g) {
  const double fsr = g.free_spectral_range();
  const double p = static_cast<double>(p_index);
  ModeSet m;
  m.signal = g.pump_frequency + (1.0 + 4.0 * p) * fsr;
  m.idler = g.pump_frequency - (1.0 + 4.0 * p) * fsr;
  m.suppressed = g.pump_frequency + (9.0 + 16.0 * p) * fsr;
  m.convertible = g.pump_frequency + (5.0 + 8.0 * p) * fsr;
  return m;
}

double mode_resonance(double omega_guess, const DeviceGeometry& g, double aux_through) {
  const FilterTuning t = static_tuning(g);
  const double target = kTwoPi * std::round(round_trip_phase(omega_guess, t.idler, t.signal, g) / kTwoPi);
  return omega_guess + bisect_resonance(omega_guess, target, t.idler, t.signal, g, aux_through);
}

double mode_peak_power(double omega_guess, const DeviceGeometry& g, double aux_through) {
  const FilterTuning t = static_tuning(g);
  const double w = mode_resonance(omega_guess, g, aux_through);
  return std::norm(solve_fields(w, t.idler, t.signal, g, aux_through).circulating);
}

}  // namespace tsmux::spectral
