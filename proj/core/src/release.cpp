#include "tsmux/release.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "tsmux/errors.hpp"

namespace tsmux::dynamics {

namespace {

// 8-point Gauss-Legendre on [-1, 1].
constexpr std::array<double, 8> kNodes = {-0.9602898564975363, -0.7966664774136267, -0.5255324099163290,
                                          -0.1834346424956498, 0.1834346424956498,  0.5255324099163290,
                                          0.7966664774136267,  0.9602898564975363};
constexpr std::array<double, 8> kWeights = {0.1012285362903763, 0.2223810344533745, 0.3137066458778873,
                                            0.3626837833783620, 0.3626837833783620, 0.3137066458778873,
                                            0.2223810344533745, 0.1012285362903763};

template <class F>
double gauss(F&& f, double a, double b) {
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  double sum = 0.0;
  for (std::size_t k = 0; k < kNodes.size(); ++k) sum += kWeights[k] * f(mid + half * kNodes[k]);
  return half * sum;
}

// Times where the unclipped rate crosses kappa_max; the clipped rate has kinks there.
std::vector<double> clip_points(const ReleaseProfile& p, double end) {
  std::vector<double> out;
  if (!(p.kappa_max > 0.0) || p.peak <= p.kappa_max || p.peak == 0.0) return out;
  const ShapePeak top = release_shape_peak(p);
  const double level = p.kappa_max / p.peak * p.shape_max;
  auto above = [&](double t) { return release_shape(t, p) - level; };
  auto solve = [&](double lo, double hi) {
    for (int it = 0; it < 200 && hi - lo > 1e-18; ++it) {
      const double mid = 0.5 * (lo + hi);
      if ((above(mid) > 0.0) == (above(lo) > 0.0)) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    return 0.5 * (lo + hi);
  };
  const double t_top = std::min(top.time, end);
  if (above(t_top) > 0.0) {
    out.push_back(solve(p.start, t_top));
    if (above(end) < 0.0) out.push_back(solve(t_top, end));
  }
  return out;
}

}  // namespace

ReleaseCurve release_probabilities(const std::vector<double>& times, const ReleaseProfile& profile,
                                   double kappa_loss) {
  if (kappa_loss < 0.0) throw ConfigError("release: kappa_L must be >= 0");
  if (!std::is_sorted(times.begin(), times.end())) throw std::invalid_argument("release: times must be sorted");
  ReleaseCurve curve;
  if (times.empty()) return curve;
  if (times.front() < profile.start) throw std::invalid_argument("release: times before the bin start");

  double scale = profile.width;
  if (profile.response_rate > 0.0) scale = std::min(scale, 1.0 / profile.response_rate);
  if (profile.kappa_max > 0.0) scale = std::min(scale, 1.0 / profile.kappa_max);
  if (profile.peak > 0.0) scale = std::min(scale, 1.0 / profile.peak);
  if (kappa_loss > 0.0) scale = std::min(scale, 1.0 / kappa_loss);
  const double panel = scale / 4.0;

  std::vector<double> breaks = times;
  breaks.push_back(profile.start);
  for (double t : clip_points(profile, times.back())) breaks.push_back(t);
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

  auto rate = [&](double t) { return release_rate(t, profile); };
  auto total_rate = [&](double t) { return rate(t) + kappa_loss; };

  double lambda = 0.0;  // integral of kappa_s + kappa_L from start
  double signal = 0.0;
  std::size_t next = 0;
  auto record = [&](double t) {
    while (next < times.size() && times[next] == t) {
      const double c = std::exp(-2.0 * lambda);
      curve.time.push_back(t);
      curve.cavity.push_back(c);
      curve.signal.push_back(signal);
      curve.loss.push_back(1.0 - c - signal);
      ++next;
    }
  };
  record(profile.start);
  for (std::size_t b = 1; b < breaks.size(); ++b) {
    const double lo = breaks[b - 1];
    const double hi = breaks[b];
    const int pieces = std::max(1, static_cast<int>(std::ceil((hi - lo) / panel)));
    for (int k = 0; k < pieces; ++k) {
      const double a = lo + (hi - lo) * k / pieces;
      const double z = (k + 1 == pieces) ? hi : lo + (hi - lo) * (k + 1) / pieces;
      const double base = lambda;
      signal += gauss(
          [&](double t) {
            const double c = std::exp(-2.0 * (base + gauss(total_rate, a, t)));
            return 2.0 * rate(t) * c;
          },
          a, z);
      lambda += gauss(total_rate, a, z);
    }
    record(hi);
  }
  return curve;
}

namespace {

ReleaseProfile make_profile(double width, double peak, const ReleaseSettings& s) {
  ReleaseProfile p;
  p.start = 0.0;
  p.response_rate = s.response_rate;
  p.width = width;
  p.peak = peak;
  p.kappa_max = s.kappa_max;
  return place_release(p);
}

// Integral of the unclipped shape over [start, end].
double shape_integral(const ReleaseProfile& p, double end) {
  double scale = p.width;
  if (p.response_rate > 0.0) scale = std::min(scale, 1.0 / p.response_rate);
  const double panel = scale / 4.0;
  const int pieces = std::max(1, static_cast<int>(std::ceil((end - p.start) / panel)));
  double sum = 0.0;
  for (int k = 0; k < pieces; ++k) {
    const double a = p.start + (end - p.start) * k / pieces;
    const double z = p.start + (end - p.start) * (k + 1) / pieces;
    sum += gauss([&](double t) { return release_shape(t, p); }, a, z);
  }
  return sum;
}

}  // namespace

ReleaseProfile calibrate_release(double target, const BinTiming& timing, const ReleaseSettings& settings,
                                 double kappa_loss) {
  timing.validate();
  if (!(settings.kappa_max > 0.0) || !(settings.width > 0.0) || settings.response_rate < 0.0) {
    throw ConfigError("release settings need kappa_max > 0, tau_r > 0, kappa_psi >= 0");
  }
  const double floor = std::exp(-2.0 * kappa_loss * timing.duration);
  if (!(target > 0.0) || target > floor) {
    std::ostringstream msg;
    msg << "calibrate_release: p_c target " << target << " outside (0, " << floor << "]";
    throw NumericalError(msg.str());
  }
  // Below the cap the coupling is linear in the peak, so p_c(end) fixes it directly.
  const double needed = -0.5 * std::log(target) - kappa_loss * timing.duration;
  const ReleaseProfile unit = make_profile(settings.width, 1.0, settings);
  const double peak = needed * unit.shape_max / shape_integral(unit, timing.duration);
  if (peak <= settings.kappa_max) return make_profile(settings.width, peak, settings);

  auto at_width = [&](double w) {
    const ReleaseProfile p = make_profile(w, settings.kappa_max, settings);
    return std::exp(-2.0 * (settings.kappa_max / p.shape_max * shape_integral(p, timing.duration) +
                            kappa_loss * timing.duration));
  };
  // Wider pulses move t_r later, so p_c(end) first falls and then rises with the width.
  double best = settings.width;
  double best_value = at_width(best);
  const int scan = 48;
  for (int k = 1; k <= scan; ++k) {
    const double w = settings.width * std::pow(timing.duration / settings.width, static_cast<double>(k) / scan);
    const double v = at_width(w);
    if (v < best_value) {
      best = w;
      best_value = v;
    }
  }
  if (best_value > target) {
    std::ostringstream msg;
    msg << "calibrate_release: p_c target " << target << " not reachable within a bin of " << timing.duration
        << " s (lowest reachable " << best_value << ")";
    throw NumericalError(msg.str());
  }
  double lo = settings.width;
  double hi = best;
  for (int it = 0; it < 200 && hi - lo > 1e-13 * timing.duration; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (at_width(mid) > target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return make_profile(0.5 * (lo + hi), settings.kappa_max, settings);
}

ReleaseStages release_stages(const ReleaseProfile& profile, const BinTiming& timing, double kappa_loss) {
  timing.validate();
  const ReleaseCurve c = release_probabilities({timing.split(), timing.duration}, profile, kappa_loss);
  ReleaseStages s;
  s.cavity_at_decision = c.cavity[0];
  s.signal_at_decision = c.signal[0];
  s.cavity_at_end = c.cavity[1];
  s.signal_at_end = c.signal[1];
  return s;
}

}  // namespace tsmux::dynamics
