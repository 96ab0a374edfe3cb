#include "tsmux/inference.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <tuple>

#include "tsmux/errors.hpp"

namespace tsmux::inference {

namespace {

double log_choose(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

// p^k with 0^0 = 1.
double power(double p, int k) { return k == 0 ? 1.0 : std::pow(p, k); }

double binomial(int n, int k, double p) {
  if (k < 0 || k > n) return 0.0;
  if (p == 0.0) return k == 0 ? 1.0 : 0.0;
  if (p == 1.0) return k == n ? 1.0 : 0.0;
  return std::exp(log_choose(n, k)) * power(p, k) * power(1.0 - p, n - k);
}

void merge(std::vector<Transition>& row) {
  std::sort(row.begin(), row.end(), [](const Transition& a, const Transition& b) {
    return std::tie(a.n_next, a.dx_pre, a.dx_post) < std::tie(b.n_next, b.dx_pre, b.dx_post);
  });
  std::vector<Transition> out;
  for (const Transition& t : row) {
    if (t.probability == 0.0) continue;
    if (!out.empty() && out.back().n_next == t.n_next && out.back().dx_pre == t.dx_pre &&
        out.back().dx_post == t.dx_post) {
      out.back().probability += t.probability;
    } else {
      out.push_back(t);
    }
  }
  row = std::move(out);
}

void check_efficiency(double eta) {
  if (!(eta >= 0.0 && eta <= 1.0)) throw ConfigError("detection efficiency must lie in [0, 1]");
}

}  // namespace

double thin_detector(int emitted, int detected, double efficiency) {
  check_efficiency(efficiency);
  if (emitted < 0) throw std::invalid_argument("thin_detector: negative emitted count");
  return binomial(emitted, detected, efficiency);
}

double release_multinomial(int n_prev, int n_signal, int n_cavity, double p_cavity, double p_signal) {
  if (n_prev < 0 || n_signal < 0 || n_cavity < 0 || n_signal + n_cavity > n_prev) return 0.0;
  const double p_loss = std::max(0.0, 1.0 - p_cavity - p_signal);
  const int n_loss = n_prev - n_signal - n_cavity;
  const double coeff = std::exp(std::lgamma(n_prev + 1.0) - std::lgamma(n_signal + 1.0) -
                                std::lgamma(n_cavity + 1.0) - std::lgamma(n_loss + 1.0));
  return coeff * power(p_cavity, n_cavity) * power(p_signal, n_signal) * power(p_loss, n_loss);
}

Masses storage_update(const Masses& masses, double dt, double kappa_loss) {
  if (dt < 0.0) throw std::invalid_argument("storage_update: negative duration");
  const double keep = std::exp(-2.0 * kappa_loss * dt);
  if (keep == 1.0) return masses;
  Masses out(masses.size(), 0.0);
  for (std::size_t n = 0; n < masses.size(); ++n) {
    if (masses[n] == 0.0) continue;
    for (std::size_t k = 0; k <= n; ++k) {
      out[k] += masses[n] * binomial(static_cast<int>(n), static_cast<int>(k), keep);
    }
  }
  return out;
}

double g2_of(const Masses& masses) {
  double total = 0.0;
  double mean = 0.0;
  double pairs = 0.0;
  for (std::size_t n = 0; n < masses.size(); ++n) {
    total += masses[n];
    mean += static_cast<double>(n) * masses[n];
    pairs += static_cast<double>(n) * (static_cast<double>(n) - 1.0) * masses[n];
  }
  if (!(mean > 0.0)) throw NumericalError("g2 undefined for zero mean photon number");
  return pairs * total / (mean * mean);
}

int estimate_state(int x_star, int x_prev) { return x_star >= 0 ? x_star : x_star - x_prev; }

Verdict judge(const Masses& masses, const Thresholds& thresholds) {
  Verdict v;
  double total = 0.0;
  double mean = 0.0;
  for (std::size_t n = 0; n < masses.size(); ++n) {
    total += masses[n];
    mean += static_cast<double>(n) * masses[n];
  }
  if (!(total > 0.0) || !(mean > 0.0)) return v;
  v.fidelity = masses.size() > 1 ? masses[1] / total : 0.0;
  v.g2 = g2_of(masses);
  v.pass = v.fidelity >= thresholds.fidelity && v.g2 <= thresholds.g2;
  return v;
}

TransitionKernel TransitionKernel::pump(const std::array<const dynamics::BinOutcomeTable*, 3>& tables,
                                        double efficiency) {
  check_efficiency(efficiency);
  TransitionKernel k;
  k.rows_.resize(3);
  for (int n0 = 0; n0 < 3; ++n0) {
    const dynamics::BinOutcomeTable* table = tables[static_cast<std::size_t>(n0)];
    if (table == nullptr) throw std::invalid_argument("pump kernel: missing table");
    if (!(table->total() > 0.0)) throw NumericalError("pump kernel: empty table");
    auto& row = k.rows_[static_cast<std::size_t>(n0)];
    for (const auto& e : table->entries()) {
      const double w = e.weight / table->total();
      for (int a = 0; a <= e.idler_pre; ++a) {
        const double pa = binomial(e.idler_pre, a, efficiency);
        if (pa == 0.0) continue;
        for (int b = 0; b <= e.idler_post; ++b) {
          const double pb = binomial(e.idler_post, b, efficiency);
          if (pb == 0.0) continue;
          row.push_back({e.signal, a, b, w * pa * pb});
        }
      }
    }
    merge(row);
  }
  return k;
}

TransitionKernel TransitionKernel::release(const dynamics::ReleaseStages& s, double efficiency, int max_prev) {
  check_efficiency(efficiency);
  if (!(s.cavity_at_decision > 0.0)) throw NumericalError("release kernel: cavity emptied before the decision time");
  // Conditional fates between the decision time and the bin end.
  const double qc = s.cavity_at_end / s.cavity_at_decision;
  const double qs = (s.signal_at_end - s.signal_at_decision) / s.cavity_at_decision;
  TransitionKernel k;
  k.rows_.resize(static_cast<std::size_t>(max_prev) + 1);
  for (int n0 = 0; n0 <= max_prev; ++n0) {
    auto& row = k.rows_[static_cast<std::size_t>(n0)];
    // Per stage a photon stays, leaves and is detected, or is gone undetected.
    for (int mid = 0; mid <= n0; ++mid) {
      for (int d1 = 0; d1 + mid <= n0; ++d1) {
        const double p1 =
            release_multinomial(n0, d1, mid, s.cavity_at_decision, s.signal_at_decision * efficiency);
        if (p1 == 0.0) continue;
        for (int end = 0; end <= mid; ++end) {
          for (int d2 = 0; d2 + end <= mid; ++d2) {
            const double p2 = release_multinomial(mid, d2, end, qc, qs * efficiency);
            if (p2 == 0.0) continue;
            row.push_back({end, -d1, -d2, p1 * p2});
          }
        }
      }
    }
    merge(row);
  }
  return k;
}

TransitionKernel TransitionKernel::storage(double p_keep, int max_prev) {
  TransitionKernel k;
  k.rows_.resize(static_cast<std::size_t>(max_prev) + 1);
  for (int n0 = 0; n0 <= max_prev; ++n0) {
    auto& row = k.rows_[static_cast<std::size_t>(n0)];
    for (int n = 0; n <= n0; ++n) row.push_back({n, 0, 0, binomial(n0, n, p_keep)});
    merge(row);
  }
  return k;
}

const std::vector<Transition>& TransitionKernel::from(int n_prev) const {
  if (n_prev < 0 || n_prev > max_prev()) throw std::out_of_range("transition kernel: photon number not covered");
  return rows_[static_cast<std::size_t>(n_prev)];
}

namespace {

template <class Accept>
Masses apply(const Masses& prior, const TransitionKernel& kernel, Accept accept, double* dropped) {
  Masses out;
  for (std::size_t n = 0; n < prior.size(); ++n) {
    const double m = prior[n];
    if (m == 0.0) continue;
    if (static_cast<int>(n) > kernel.max_prev()) {
      if (dropped != nullptr) *dropped += m;
      continue;
    }
    for (const Transition& t : kernel.from(static_cast<int>(n))) {
      if (!accept(t)) continue;
      if (static_cast<std::size_t>(t.n_next) >= out.size()) out.resize(static_cast<std::size_t>(t.n_next) + 1, 0.0);
      out[static_cast<std::size_t>(t.n_next)] += m * t.probability;
    }
  }
  return out;
}

}  // namespace

Masses apply_kernel(const Masses& prior, const TransitionKernel& kernel, int dx_pre, int dx_post, double* dropped) {
  return apply(prior, kernel, [&](const Transition& t) { return t.dx_pre == dx_pre && t.dx_post == dx_post; },
               dropped);
}

Masses apply_kernel_at_decision(const Masses& prior, const TransitionKernel& kernel, int dx_pre, double* dropped) {
  return apply(prior, kernel, [&](const Transition& t) { return t.dx_pre == dx_pre; }, dropped);
}

Masses pump_update(const Masses& prior, const std::array<const dynamics::BinOutcomeTable*, 3>& tables,
                   double efficiency, int x_prev, int x_star, int x_end) {
  return apply_kernel(prior, TransitionKernel::pump(tables, efficiency), x_star - x_prev, x_end - x_star);
}

Masses release_update(const Masses& prior, const dynamics::ReleaseStages& stages, double efficiency, int x_prev,
                      int x_star, int x_end) {
  const int max_prev = std::max(0, static_cast<int>(prior.size()) - 1);
  return apply_kernel(prior, TransitionKernel::release(stages, efficiency, max_prev), x_star - x_prev,
                      x_end - x_star);
}

}  // namespace tsmux::inference
