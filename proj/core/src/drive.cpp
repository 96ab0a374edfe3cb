#include "tsmux/drive.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "tsmux/errors.hpp"

namespace tsmux::dynamics {

namespace {

constexpr double kSqrtPi = 1.7724538509055160273;

double log_erfc(double x) {
  if (x < 25.0) return std::log(std::erfc(x));
  const double inv = 1.0 / (x * x);
  return -x * x - std::log(x * kSqrtPi) + std::log1p(-0.5 * inv + 0.75 * inv * inv - 1.875 * inv * inv * inv);
}

// log F(u), u = t - t_p, for the cavity-filtered Gaussian field.
double log_field(double u, double kappa, double tau) {
  const double z = (kappa * tau * tau - u) / (std::numbers::sqrt2 * tau);
  return std::log(tau * kSqrtPi / std::numbers::sqrt2) + 0.5 * kappa * kappa * tau * tau - kappa * u +
         log_erfc(z);
}

double log_field_slope(double u, double kappa, double tau) {
  const double z = (kappa * tau * tau - u) / (std::numbers::sqrt2 * tau);
  const double ratio = std::exp(-z * z - log_erfc(z));
  return -kappa + std::numbers::sqrt2 / (kSqrtPi * tau) * ratio;
}

template <class F>
double bisect(F&& f, double lo, double hi, int iterations = 200) {
  double f_lo = f(lo);
  for (int it = 0; it < iterations; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    const double f_mid = f(mid);
    if ((f_mid < 0.0) == (f_lo < 0.0)) {
      lo = mid;
      f_lo = f_mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

double erf_difference(double b, double a) {
  if (a >= 0.0) return std::erfc(a) - std::erfc(b);
  if (b <= 0.0) return std::erfc(-b) - std::erfc(-a);
  return std::erf(b) - std::erf(a);
}

}  // namespace

double pump_peak_offset(double kappa_pump, double width) {
  if (!(kappa_pump > 0.0) || !(width > 0.0)) {
    throw ConfigError("pump pulse needs kappa_p > 0 and tau_p > 0");
  }
  const double lo = -60.0 * width;
  const double hi = 60.0 * width + 60.0 / kappa_pump;
  return bisect([&](double u) { return log_field_slope(u, kappa_pump, width); }, lo, hi);
}

PumpPulse place_pump(PumpPulse pulse, double bin_start, double rise_ratio) {
  const double kappa = pulse.kappa_pump;
  const double tau = pulse.width;
  const double u_peak = pump_peak_offset(kappa, tau);
  const double log_peak = log_field(u_peak, kappa, tau);
  const double target = 0.5 * std::log(rise_ratio);
  double lo = u_peak - 10.0 * tau;
  while (log_field(lo, kappa, tau) - log_peak > target) lo -= 10.0 * tau;
  const double u_rise =
      bisect([&](double u) { return log_field(u, kappa, tau) - log_peak - target; }, lo, u_peak);
  pulse.center = bin_start - u_rise;
  pulse.log_peak_field = log_peak;
  pulse.placed = true;
  return pulse;
}

double pump_energy(double t, const PumpPulse& pulse) {
  if (!pulse.placed) throw std::logic_error("pump_energy: pulse not placed");
  if (pulse.scale == 0.0) return 0.0;
  const double u = t - pulse.center;
  return pulse.scale * std::exp(2.0 * (log_field(u, pulse.kappa_pump, pulse.width) - pulse.log_peak_field));
}

double pump_quench_time(const PumpPulse& pulse, double fraction) {
  if (!pulse.placed) throw std::logic_error("pump_quench_time: pulse not placed");
  const double u_peak = pump_peak_offset(pulse.kappa_pump, pulse.width);
  const double level = fraction * pulse.kappa_pump;
  if (pulse.scale <= level) return pulse.center + u_peak;
  auto excess = [&](double u) {
    return std::log(pulse.scale) + 2.0 * (log_field(u, pulse.kappa_pump, pulse.width) - pulse.log_peak_field) -
           std::log(level);
  };
  double hi = u_peak + 1.0 / pulse.kappa_pump;
  while (excess(hi) > 0.0) hi += 5.0 / pulse.kappa_pump;
  return pulse.center + bisect(excess, u_peak, hi);
}

ReleaseProfile place_release(ReleaseProfile profile) {
  if (!(profile.width > 0.0) || profile.response_rate < 0.0) {
    throw ConfigError("release profile needs tau_r > 0 and kappa_psi >= 0");
  }
  profile.center = profile.start + profile.width * std::sqrt(std::log(1000.0));
  profile.shape_max = release_shape_peak(profile).value;
  return profile;
}

double release_shape(double t, const ReleaseProfile& p) {
  if (t <= p.start) return 0.0;
  const double k = p.response_rate;
  const double tau = p.width;
  const double a = 0.5 * k * tau * tau;
  const double diff = erf_difference((t - p.center - a) / tau, (p.start - p.center - a) / tau);
  return std::exp(-k * (t - p.center) + 0.25 * k * k * tau * tau) * 0.5 * tau * kSqrtPi * diff;
}

ShapePeak release_shape_peak(const ReleaseProfile& p) {
  // g' = exp(-(t-t_r)^2/tau^2) - kappa_psi g changes sign once.
  auto slope = [&](double t) {
    const double x = (t - p.center) / p.width;
    return std::exp(-x * x) - p.response_rate * release_shape(t, p);
  };
  ShapePeak peak;
  if (p.response_rate == 0.0) {
    peak.time = std::numeric_limits<double>::infinity();
    peak.value = release_shape(p.center + 40.0 * p.width, p);
    return peak;
  }
  const double hi = p.center + 40.0 * p.width + 40.0 / p.response_rate;
  peak.time = bisect(slope, std::max(p.start, p.center - 40.0 * p.width), hi);
  peak.value = release_shape(peak.time, p);
  return peak;
}

double release_rate(double t, const ReleaseProfile& p) {
  if (p.peak == 0.0) return 0.0;
  if (!(p.shape_max > 0.0)) throw std::logic_error("release_rate: profile not placed");
  const double k = p.peak * release_shape(t, p) / p.shape_max;
  return p.kappa_max > 0.0 ? std::min(k, p.kappa_max) : k;
}

}  // namespace tsmux::dynamics
