#include "tsmux/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "tsmux/errors.hpp"
#include "tsmux/seeding.hpp"

namespace tsmux::dynamics {

void DynamicsParams::validate() const {
  std::ostringstream problems;
  if (kappa_idler < 0.0) problems << " kappa_idler < 0;";
  if (kappa_signal < 0.0) problems << " kappa_signal < 0;";
  if (kappa_loss < 0.0) problems << " kappa_loss < 0;";
  if (pump.scale < 0.0) problems << " pump scale < 0;";
  if (pump.scale > 0.0 && !pump.placed) problems << " pump pulse not placed;";
  if (!(steps_per_rate > 0.0)) problems << " steps_per_rate must be > 0;";
  const std::string text = problems.str();
  if (!text.empty()) throw ConfigError("invalid dynamics parameters:" + text);
}

double DynamicsParams::fastest_rate() const {
  return std::max({kappa_idler + kappa_loss, kappa_signal + kappa_loss, pump.scale,
                   std::abs(detuning_idler + detuning_signal)});
}

int TrajectoryRecord::count(JumpChannel channel, double from, double to) const {
  int n = 0;
  for (const JumpEvent& j : jumps) {
    if (j.channel == channel && j.time > from && j.time <= to) ++n;
  }
  return n;
}

int TrajectoryRecord::idler_before_split() const {
  int n = 0;
  for (const JumpEvent& j : jumps) {
    if (j.channel == JumpChannel::idler_out && j.time <= split_time) ++n;
  }
  return n;
}

int TrajectoryRecord::idler_after_split(double end) const {
  return count(JumpChannel::idler_out, split_time, end);
}

namespace {

// Fixed photon-number difference d = n_s - n_i; amplitudes indexed by n_i - lo.
struct Sector {
  int d = 0;
  int lo = 0;
  std::vector<Complex> c;

  [[nodiscard]] int size() const { return static_cast<int>(c.size()); }
  [[nodiscard]] int idler(int k) const { return lo + k; }
  [[nodiscard]] int signal(int k) const { return lo + k + d; }
};

Sector empty_sector(int d, int cutoff) {
  Sector s;
  s.d = d;
  s.lo = std::max(0, -d);
  const int hi = std::min(cutoff, cutoff - d);
  s.c.assign(static_cast<std::size_t>(std::max(0, hi - s.lo + 1)), Complex{});
  return s;
}

double norm_sq(const std::vector<Complex>& c) {
  double sum = 0.0;
  for (const Complex& a : c) sum += std::norm(a);
  return sum;
}

struct Workspace {
  std::vector<Complex> k1, k2, k3, k4, tmp;
  void fit(std::size_t n) {
    if (k1.size() < n) {
      k1.resize(n);
      k2.resize(n);
      k3.resize(n);
      k4.resize(n);
      tmp.resize(n);
    }
  }
};

// Amplitudes above the highest index carrying more than this fraction of the norm are
// treated as exactly zero until the drive spreads population up to them.
constexpr double kNegligible = 1e-30;

int active_top(const std::vector<Complex>& c) {
  const int n = static_cast<int>(c.size());
  double total = 0.0;
  for (const Complex& a : c) total += std::norm(a);
  int top = n - 1;
  while (top > 0 && std::norm(c[static_cast<std::size_t>(top)]) <= kNegligible * total) --top;
  return std::min(n - 1, top + 2);
}

}  // namespace

struct TrajectoryEngine::Impl {
  DynamicsParams params;
  double t0 = 0.0;
  double t1 = 0.0;
  double t_split = 0.0;
  int cutoff = 0;
  double detuning_sum = 0.0;
  double drive_end = 0.0;  // RK phase covers [t0, drive_end]
  int steps = 0;
  double h = 0.0;
  std::vector<double> x_grid;
  std::vector<double> x_mid;

  struct Curve {
    Sector start;
    double weight = 0.0;
    std::vector<std::vector<Complex>> states;
    std::vector<double> norms;
    std::vector<double> edge_prefix;
  };
  std::vector<Curve> curves;

  [[nodiscard]] double gamma(int n_idler, int n_signal) const {
    return (params.kappa_idler + params.kappa_loss) * n_idler + (params.kappa_signal + params.kappa_loss) * n_signal;
  }

  [[nodiscard]] double drive(double t) const { return t >= drive_end ? 0.0 : pump_energy(t, params.pump); }

  [[nodiscard]] Complex phase(double t) const {
    if (detuning_sum == 0.0) return {1.0, 0.0};
    return std::polar(1.0, detuning_sum * (t - t0));
  }

  void derivative(const Sector& s, int top, double x, Complex ph, const std::vector<Complex>& in,
                  std::vector<Complex>& out) const {
    const int n = top + 1;
    const Complex create = Complex{0.0, -1.0} * x * ph;
    const Complex destroy = Complex{0.0, -1.0} * x * std::conj(ph);
    for (int k = 0; k < n; ++k) {
      const int ni = s.idler(k);
      const int ns = s.signal(k);
      Complex v = -gamma(ni, ns) * in[static_cast<std::size_t>(k)];
      if (x != 0.0) {
        if (k > 0) v += create * std::sqrt(static_cast<double>(ns) * ni) * in[static_cast<std::size_t>(k - 1)];
        if (k + 1 < n) {
          v += destroy * std::sqrt(static_cast<double>(ns + 1) * (ni + 1)) * in[static_cast<std::size_t>(k + 1)];
        }
      }
      out[static_cast<std::size_t>(k)] = v;
    }
  }

  // One RK4 step of size dt from t; x_a, x_m, x_b are the drive at t, t + dt/2, t + dt.
  void rk4(const Sector& layout, double t, double dt, double x_a, double x_m, double x_b, std::vector<Complex>& c,
           Workspace& w) const {
    w.fit(c.size());
    const int top = x_a == 0.0 && x_m == 0.0 && x_b == 0.0 ? static_cast<int>(c.size()) - 1 : active_top(c);
    const std::size_t n = static_cast<std::size_t>(top) + 1;
    const Complex ph_a = phase(t);
    const Complex ph_m = phase(t + 0.5 * dt);
    const Complex ph_b = phase(t + dt);
    derivative(layout, top, x_a, ph_a, c, w.k1);
    for (std::size_t i = 0; i < n; ++i) w.tmp[i] = c[i] + 0.5 * dt * w.k1[i];
    derivative(layout, top, x_m, ph_m, w.tmp, w.k2);
    for (std::size_t i = 0; i < n; ++i) w.tmp[i] = c[i] + 0.5 * dt * w.k2[i];
    derivative(layout, top, x_m, ph_m, w.tmp, w.k3);
    for (std::size_t i = 0; i < n; ++i) w.tmp[i] = c[i] + dt * w.k3[i];
    derivative(layout, top, x_b, ph_b, w.tmp, w.k4);
    for (std::size_t i = 0; i < n; ++i) c[i] += dt / 6.0 * (w.k1[i] + 2.0 * w.k2[i] + 2.0 * w.k3[i] + w.k4[i]);
  }

  void partial_step(const Sector& layout, double t, double dt, std::vector<Complex>& c, Workspace& w) const {
    rk4(layout, t, dt, drive(t), drive(t + 0.5 * dt), drive(t + dt), c, w);
  }

  [[nodiscard]] double edge(const Sector& s, const std::vector<Complex>& c) const {
    double e = 0.0;
    for (int k = 0; k < s.size(); ++k) {
      if (s.idler(k) == cutoff || s.signal(k) == cutoff) e += std::norm(c[static_cast<std::size_t>(k)]);
    }
    const double total = norm_sq(c);
    return total > 0.0 ? e / total : 0.0;
  }

  // Finds the time in (t, t + dt] where the norm crosses r; c holds the state at t on entry and
  // the state at the crossing on exit.
  // Bracketing (Illinois) search, stopped once the bracket is below 1e-6 of a step.
  double locate_jump(const Sector& layout, double t, double dt, double r, std::vector<Complex>& c,
                     Workspace& w) const {
    const std::vector<Complex> start = c;
    std::vector<Complex> trial = start;
    double lo = 0.0;
    double f_lo = norm_sq(start) - r;
    double hi = dt;
    partial_step(layout, t, dt, trial, w);
    double f_hi = norm_sq(trial) - r;
    int side = 0;
    const double tol = 1e-6 * (h > 0.0 ? h : dt);
    for (int it = 0; it < 200 && hi - lo > tol; ++it) {
      double mid = (f_lo * hi - f_hi * lo) / (f_lo - f_hi);
      if (!(mid > lo && mid < hi)) mid = 0.5 * (lo + hi);
      // Keep the bracket shrinking on both sides.
      mid = std::clamp(mid, lo + 0.25 * tol, hi - 0.25 * tol);
      trial = start;
      partial_step(layout, t, mid, trial, w);
      const double f_mid = norm_sq(trial) - r;
      if (f_mid > 0.0) {
        lo = mid;
        f_lo = f_mid;
        if (side == -1) f_hi *= 0.5;
        side = -1;
      } else {
        hi = mid;
        f_hi = f_mid;
        if (side == 1) f_lo *= 0.5;
        side = 1;
      }
    }
    c = start;
    partial_step(layout, t, hi, c, w);
    return t + hi;
  }

  [[nodiscard]] JumpChannel choose_channel(const Sector& s, double u) const {
    double mean_i = 0.0;
    double mean_s = 0.0;
    for (int k = 0; k < s.size(); ++k) {
      const double p = std::norm(s.c[static_cast<std::size_t>(k)]);
      mean_i += s.idler(k) * p;
      mean_s += s.signal(k) * p;
    }
    const double w[4] = {2.0 * params.kappa_idler * mean_i, 2.0 * params.kappa_loss * mean_i,
                         2.0 * params.kappa_signal * mean_s, 2.0 * params.kappa_loss * mean_s};
    const double total = w[0] + w[1] + w[2] + w[3];
    double acc = 0.0;
    const JumpChannel order[4] = {JumpChannel::idler_out, JumpChannel::idler_loss, JumpChannel::signal_out,
                                  JumpChannel::signal_loss};
    int last = 0;
    for (int i = 0; i < 4; ++i) {
      if (w[i] <= 0.0) continue;
      last = i;
      acc += w[i];
      if (u * total < acc) return order[i];
    }
    return order[last];
  }

  [[nodiscard]] Sector apply_jump(const Sector& s, JumpChannel channel) const {
    const bool idler = channel == JumpChannel::idler_out || channel == JumpChannel::idler_loss;
    Sector out = empty_sector(idler ? s.d + 1 : s.d - 1, cutoff);
    for (int k = 0; k < s.size(); ++k) {
      int ni = s.idler(k);
      const int ns = s.signal(k);
      const double n = idler ? ni : ns;
      if (n == 0.0) continue;
      if (idler) --ni;
      const int kk = ni - out.lo;
      out.c[static_cast<std::size_t>(kk)] = std::sqrt(n) * s.c[static_cast<std::size_t>(k)];
    }
    const double total = norm_sq(out.c);
    const double scale = 1.0 / std::sqrt(total);
    for (Complex& a : out.c) a *= scale;
    return out;
  }

  void build(const TwoModeState& initial) {
    params.validate();
    if (!(t1 > t0) || t_split < t0 || t_split > t1) throw std::invalid_argument("trajectory: need t0 < t1, t_split in [t0, t1]");
    cutoff = initial.cutoff();
    detuning_sum = params.detuning_idler + params.detuning_signal;
    drive_end = t0;
    if (params.pump.scale > 0.0) {
      drive_end = std::clamp(pump_quench_time(params.pump, params.quench_fraction), t0, t1);
    }
    steps = 0;
    h = 0.0;
    if (drive_end > t0) {
      const double rate = params.fastest_rate();
      const double h_max = 1.0 / (params.steps_per_rate * rate);
      steps = static_cast<int>(std::ceil((drive_end - t0) / h_max));
      h = (drive_end - t0) / steps;
      x_grid.resize(static_cast<std::size_t>(steps + 1));
      x_mid.resize(static_cast<std::size_t>(steps));
      for (int j = 0; j <= steps; ++j) x_grid[static_cast<std::size_t>(j)] = pump_energy(t0 + j * h, params.pump);
      for (int j = 0; j < steps; ++j) x_mid[static_cast<std::size_t>(j)] = pump_energy(t0 + (j + 0.5) * h, params.pump);
    }
    const double total = initial.norm_squared();
    if (!(total > 0.0)) throw std::invalid_argument("trajectory: zero initial state");
    for (int d = -cutoff; d <= cutoff; ++d) {
      Sector s = empty_sector(d, cutoff);
      for (int k = 0; k < s.size(); ++k) s.c[static_cast<std::size_t>(k)] = initial.amplitude(s.signal(k), s.idler(k));
      const double w = norm_sq(s.c);
      if (w <= 0.0) continue;
      for (Complex& a : s.c) a /= std::sqrt(w);
      Curve curve;
      curve.start = s;
      curve.weight = w / total;
      curve.states.reserve(static_cast<std::size_t>(steps + 1));
      curve.states.push_back(s.c);
      curve.norms.push_back(1.0);
      curve.edge_prefix.push_back(edge(s, s.c));
      std::vector<Complex> c = s.c;
      Workspace ws;
      for (int j = 0; j < steps; ++j) {
        rk4(s, t0 + j * h, h, x_grid[static_cast<std::size_t>(j)], x_mid[static_cast<std::size_t>(j)],
            x_grid[static_cast<std::size_t>(j + 1)], c, ws);
        curve.states.push_back(c);
        curve.norms.push_back(norm_sq(c));
        curve.edge_prefix.push_back(std::max(curve.edge_prefix.back(), edge(s, c)));
      }
      curves.push_back(std::move(curve));
    }
  }

  // Diagonal decay after the drive is off; returns the jump time or t1.
  double tail_crossing(const Sector& s, double t, double r) const {
    auto norm_at = [&](double tau) {
      double sum = 0.0;
      for (int k = 0; k < s.size(); ++k) {
        sum += std::norm(s.c[static_cast<std::size_t>(k)]) * std::exp(-2.0 * gamma(s.idler(k), s.signal(k)) * tau);
      }
      return sum;
    };
    const double span = t1 - t;
    if (norm_at(span) > r) return t1;
    double lo = 0.0;
    double hi = span;
    for (int it = 0; it < 200 && hi - lo > 1e-15 * span; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (norm_at(mid) > r) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    return t + hi;
  }

  void decay(Sector& s, double dt) const {
    for (int k = 0; k < s.size(); ++k) s.c[static_cast<std::size_t>(k)] *= std::exp(-gamma(s.idler(k), s.signal(k)) * dt);
  }

  TwoModeState to_state(const Sector& s) const {
    TwoModeState out(cutoff);
    const double elapsed = t1 - t0;
    for (int k = 0; k < s.size(); ++k) {
      const int ni = s.idler(k);
      const int ns = s.signal(k);
      const double angle = -(params.detuning_idler * ni + params.detuning_signal * ns) * elapsed;
      out.amplitude(ns, ni) = s.c[static_cast<std::size_t>(k)] * std::polar(1.0, angle);
    }
    return out;
  }

  TrajectoryRecord run(std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    Workspace w;
    std::vector<Complex> before;
    TrajectoryRecord rec;
    rec.split_time = t_split;

    std::size_t pick = 0;
    if (curves.size() > 1) {
      double u = open_unit(rng);
      for (; pick + 1 < curves.size(); ++pick) {
        if (u < curves[pick].weight) break;
        u -= curves[pick].weight;
      }
    }
    const Curve& curve = curves[pick];
    double r = open_unit(rng);
    Sector s = curve.start;
    double t = t0;
    int next = 0;  // next grid index to step to

    auto jump_here = [&](double time) {
      const JumpChannel ch = choose_channel(s, open_unit(rng));
      rec.jumps.push_back({time, ch});
      s = apply_jump(s, ch);
      r = open_unit(rng);
    };

    if (steps > 0) {
      if (curve.norms.back() > r) {
        s.c = curve.states.back();
        rec.max_edge_population = curve.edge_prefix.back();
        t = drive_end;
        next = steps + 1;
      } else {
        const auto it = std::find_if(curve.norms.begin(), curve.norms.end(), [&](double n) { return n <= r; });
        const int j = static_cast<int>(it - curve.norms.begin());
        s.c = curve.states[static_cast<std::size_t>(j - 1)];
        rec.max_edge_population = curve.edge_prefix[static_cast<std::size_t>(j - 1)];
        const double tj = locate_jump(s, t0 + (j - 1) * h, h, r, s.c, w);
        rec.max_edge_population = std::max(rec.max_edge_population, edge(s, s.c));
        jump_here(tj);
        t = tj;
        next = j;
      }
      while (next <= steps) {
        const double target = (next == steps) ? drive_end : t0 + next * h;
        const double dt = target - t;
        before = s.c;
        if (dt > 0.0) {
          if (std::abs(dt - h) <= 1e-12 * h && next >= 1) {
            rk4(s, t, dt, x_grid[static_cast<std::size_t>(next - 1)], x_mid[static_cast<std::size_t>(next - 1)],
                x_grid[static_cast<std::size_t>(next)], s.c, w);
          } else {
            partial_step(s, t, dt, s.c, w);
          }
        }
        if (norm_sq(s.c) <= r) {
          s.c = before;
          const double tj = locate_jump(s, t, dt, r, s.c, w);
          rec.max_edge_population = std::max(rec.max_edge_population, edge(s, s.c));
          jump_here(tj);
          t = tj;
          continue;
        }
        rec.max_edge_population = std::max(rec.max_edge_population, edge(s, s.c));
        t = target;
        ++next;
      }
      t = drive_end;
    }

    while (t < t1) {
      const double tj = tail_crossing(s, t, r);
      decay(s, tj - t);
      if (tj >= t1) {
        t = t1;
        break;
      }
      jump_here(tj);
      t = tj;
    }

    const double n = norm_sq(s.c);
    for (Complex& a : s.c) a /= std::sqrt(n);
    rec.final_state = to_state(s);
    double u = open_unit(rng);
    int chosen = s.size() - 1;
    for (int k = 0; k < s.size(); ++k) {
      u -= std::norm(s.c[static_cast<std::size_t>(k)]);
      if (u < 0.0) {
        chosen = k;
        break;
      }
    }
    rec.sampled_signal = s.signal(chosen);
    rec.sampled_idler = s.idler(chosen);
    return rec;
  }

  [[nodiscard]] Sector end_of_curve(const Curve& curve) const {
    Sector s = curve.start;
    if (steps > 0) s.c = curve.states.back();
    decay(s, t1 - drive_end);
    return s;
  }
};

TrajectoryEngine::TrajectoryEngine(TwoModeState initial, double t0, double t1, double t_split, DynamicsParams params)
    : impl_(std::make_unique<Impl>()) {
  impl_->params = params;
  impl_->t0 = t0;
  impl_->t1 = t1;
  impl_->t_split = t_split;
  impl_->build(initial);
}

TrajectoryEngine::~TrajectoryEngine() = default;
TrajectoryEngine::TrajectoryEngine(TrajectoryEngine&&) noexcept = default;
TrajectoryEngine& TrajectoryEngine::operator=(TrajectoryEngine&&) noexcept = default;

TrajectoryRecord TrajectoryEngine::run(std::uint64_t seed) const { return impl_->run(seed); }

double TrajectoryEngine::step() const { return impl_->h; }
double TrajectoryEngine::drive_end() const { return impl_->drive_end; }

double TrajectoryEngine::no_jump_pair_probability() const {
  for (const auto& curve : impl_->curves) {
    if (curve.start.d != 0) continue;
    const Sector s = impl_->end_of_curve(curve);
    return 1.0 - curve.weight * std::norm(s.c[0]);
  }
  return 1.0;
}

TwoModeState TrajectoryEngine::no_jump_state() const {
  TwoModeState out(impl_->cutoff);
  for (const auto& curve : impl_->curves) {
    Sector s = impl_->end_of_curve(curve);
    for (Complex& a : s.c) a *= std::sqrt(curve.weight);
    const TwoModeState part = impl_->to_state(s);
    for (std::size_t i = 0; i < out.amplitudes().size(); ++i) out.amplitudes()[i] += part.amplitudes()[i];
  }
  out.normalize();
  return out;
}

TrajectoryRecord run_trajectory(const TwoModeState& initial, double t0, double t1, double t_split,
                                const DynamicsParams& params, std::uint64_t seed) {
  const TrajectoryEngine engine(initial, t0, t1, t_split, params);
  return engine.run(seed);
}

}  // namespace tsmux::dynamics
