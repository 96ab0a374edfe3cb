#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "tsmux/errors.hpp"
#include "tsmux/spectral.hpp"

namespace sp = tsmux::spectral;

namespace {

sp::DeviceGeometry device(double index_imag = 1e-7) {
  sp::GeometrySpec spec;
  spec.index_imag = index_imag;
  return sp::make_geometry(spec);
}

double circulating(double omega, const sp::DeviceGeometry& g) {
  const sp::FilterTuning t = sp::static_tuning(g);
  return std::norm(sp::solve_fields(omega, t.idler, t.signal, g).circulating);
}

// Half-maximum crossing of the circulating power, searched outward from the peak.
double half_point(double peak_omega, double step, const sp::DeviceGeometry& g) {
  const double half = 0.5 * circulating(peak_omega, g);
  double inner = peak_omega;
  double outer = peak_omega + step;
  while (circulating(outer, g) > half) {
    inner = outer;
    outer += step;
  }
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (inner + outer);
    (circulating(mid, g) > half ? inner : outer) = mid;
  }
  return 0.5 * (inner + outer);
}

}  // namespace

TEST(Spectral, GeometryHasStandardRatios) {
  const sp::DeviceGeometry g = device();
  EXPECT_TRUE(g.has_standard_ratios());
  EXPECT_NO_THROW(g.validate());
  EXPECT_NEAR(g.free_spectral_range(), 2 * std::numbers::pi * sp::kSpeedOfLight / (4.0 * 100e-6), 1.0);
}

TEST(Spectral, LosslessTransfersAreUnitary) {
  const sp::DeviceGeometry g = device(0.0);
  const sp::FilterTuning t = sp::static_tuning(g);
  for (int k = -40; k <= 40; ++k) {
    const double w = g.pump_frequency + 0.137 * k * g.free_spectral_range();
    EXPECT_LT(sp::mzi_transfer(w, t.idler, sp::Filter::idler, g).unitarity_defect(), 1e-12);
    EXPECT_LT(sp::mzi_transfer(w, t.signal, sp::Filter::signal, g).unitarity_defect(), 1e-12);
    EXPECT_LT(sp::drop_transfer(w, t.drop, g).unitarity_defect(), 1e-12);
  }
}

TEST(Spectral, LossyTransfersAreContractions) {
  const sp::DeviceGeometry g = device();
  const sp::FilterTuning t = sp::static_tuning(g);
  for (int k = -10; k <= 10; ++k) {
    const double w = g.pump_frequency + 0.29 * k * g.free_spectral_range();
    const sp::ComplexMatrix2 m = sp::mzi_transfer(w, t.idler, sp::Filter::idler, g);
    for (int col = 0; col < 2; ++col) {
      EXPECT_LE(std::norm(m(0, col)) + std::norm(m(1, col)), 1.0 + 1e-12);
    }
  }
}

TEST(Spectral, CouplerZetaMatchesTwoPathInterference) {
  // zeta = nu^2 - e^{i psi}(1 - nu^2) closes at psi = pi and opens to 2 nu^2 - 1 at 2 pi.
  const sp::DeviceGeometry g = device(0.0);
  const sp::FilterTuning t = sp::static_tuning(g);
  const sp::ModeSet modes = sp::mode_arithmetic(0, g);
  const double nu2 = 0.95;
  EXPECT_NEAR(std::abs(sp::coupling_tuning(modes.signal, t.signal, sp::Filter::signal, g)), 1.0, 1e-9);
  EXPECT_NEAR(std::abs(sp::coupling_tuning(modes.idler, t.idler, sp::Filter::idler, g)), 2 * nu2 - 1, 1e-9);
  const double rate = -sp::kSpeedOfLight / (4.0 * 100e-6) * std::log(2 * nu2 - 1);
  EXPECT_NEAR(sp::coupling_rate(modes.idler, t.idler, sp::Filter::idler, g) / rate, 1.0, 1e-9);
}

TEST(Spectral, LinewidthMatchesRoundTripDecay) {
  // Lorentzian oracle: FWHM = -2 ln|round-trip gain| / (d phase / d omega).
  const sp::DeviceGeometry g = device();
  const sp::FilterTuning t = sp::static_tuning(g);
  const sp::ModeSet modes = sp::mode_arithmetic(0, g);
  const double peak = sp::mode_resonance(modes.idler, g);
  const double gain = std::abs(sp::coupling_tuning(peak, t.idler, sp::Filter::idler, g) *
                               sp::coupling_tuning(peak, t.signal, sp::Filter::signal, g)) *
                      std::exp(-std::imag(sp::propagation_constant(peak, g)) * g.ring_length);
  const double h = 1e-6 * g.free_spectral_range();
  const double delay = (sp::round_trip_phase(peak + h, t.idler, t.signal, g) -
                        sp::round_trip_phase(peak - h, t.idler, t.signal, g)) /
                       (2 * h);
  EXPECT_NEAR(delay / g.round_trip_time(), 1.0, 0.1);
  const double kappa_total = -std::log(gain) / delay;
  const double step = 0.2 * kappa_total;
  const double upper = half_point(peak, step, g);
  const double lower = half_point(peak, -step, g);
  EXPECT_NEAR((upper - lower) / (2 * kappa_total), 1.0, 0.02);
}

TEST(Spectral, IntrinsicLossRateFollowsImaginaryIndex) {
  const sp::DeviceGeometry g = device();
  const double k_imag = 2 * std::numbers::pi / 1.55e-6 * 1e-7;
  EXPECT_NEAR(sp::intrinsic_loss_rate(g) / (sp::kSpeedOfLight * k_imag / 4.0), 1.0, 2e-3);
}

TEST(Spectral, IdlerAndPumpZerosHold) {
  // Filter conditions hold at the nominal frequencies; peaks are taken over two FSR either side.
  const sp::DeviceGeometry g = device();
  const sp::FilterTuning t = sp::static_tuning(g);
  const sp::ModeSet modes = sp::mode_arithmetic(0, g);
  auto fields = [&](double w) { return sp::solve_fields(w, t.idler, t.signal, g); };
  double idler_peak = 0.0;
  double signal_peak = 0.0;
  for (int k = 0; k <= 5000; ++k) {
    const sp::FieldSolution s = fields(g.pump_frequency + g.free_spectral_range() * (-2.5 + k / 1000.0));
    idler_peak = std::max(idler_peak, std::norm(s.idler_out));
    signal_peak = std::max(signal_peak, std::norm(s.signal_out));
  }
  EXPECT_LT(std::norm(fields(g.pump_frequency).idler_out), 1e-6 * idler_peak);
  EXPECT_LT(std::norm(fields(modes.idler).signal_out), 1e-6 * signal_peak);
  EXPECT_LT(std::norm(fields(g.pump_frequency).signal_out), 1e-6 * signal_peak);
}

TEST(Spectral, ModeArithmetic) {
  const sp::DeviceGeometry g = device();
  const double fsr = g.free_spectral_range();
  const sp::ModeSet m = sp::mode_arithmetic(2, g);
  EXPECT_NEAR((m.signal - g.pump_frequency) / fsr, 9.0, 1e-9);
  EXPECT_NEAR((g.pump_frequency - m.idler) / fsr, 9.0, 1e-9);
  EXPECT_NEAR((m.suppressed - g.pump_frequency) / fsr, 41.0, 1e-9);
  EXPECT_NEAR((m.convertible - g.pump_frequency) / fsr, 21.0, 1e-9);
}

TEST(Spectral, AuxRingSuppressesTargetMode) {
  const sp::DeviceGeometry g = device();
  const double target = sp::mode_arithmetic(0, g).suppressed;
  const double before = sp::mode_peak_power(target, g);
  const double after = sp::mode_peak_power(target, g, std::sqrt(0.9));
  EXPECT_GT(before / after, 10.0);
}

TEST(Spectral, SignalTuningForPhaseInvertsPhase) {
  const sp::DeviceGeometry g = device();
  const sp::ModeSet modes = sp::mode_arithmetic(0, g);
  for (double psi : {0.5, 1.5, std::numbers::pi, 4.0}) {
    const double tuning = sp::signal_tuning_for_phase(g, psi);
    const double phase = std::real(sp::filter_phase(modes.signal, tuning, sp::Filter::signal, g));
    EXPECT_NEAR(std::remainder(phase - psi, 2 * std::numbers::pi), 0.0, 1e-9);
  }
}

TEST(Spectral, ResonanceShiftVanishesAtClosedFilter) {
  const sp::DeviceGeometry g = device();
  const double closed = sp::signal_tuning_for_phase(g, std::numbers::pi);
  EXPECT_NEAR(sp::resonance_shift(closed, g) / g.free_spectral_range(), 0.0, 1e-9);
}

TEST(Spectral, InvalidGeometryIsRejected) {
  sp::DeviceGeometry g = device();
  g.ring_length = -1.0;
  EXPECT_THROW(g.validate(), tsmux::ConfigError);
}
