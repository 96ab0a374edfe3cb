#include "tsmux/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <tuple>

#include "tsmux/errors.hpp"

namespace tsmux::protocol {

using inference::Masses;
using inference::TransitionKernel;

const char* to_string(Action a) {
  switch (a) {
    case Action::pump:
      return "pump";
    case Action::release:
      return "release";
    case Action::evacuate:
      return "evacuate";
    case Action::store:
      return "store";
  }
  return "?";
}

void ProtocolConfig::validate() const {
  std::ostringstream problems;
  if (bins < 1) problems << " bins must be >= 1;";
  if (!(timing.duration > 0.0)) problems << " bin duration must be > 0;";
  if (timing.decision_lag < 0.0 || timing.decision_lag >= timing.duration) {
    problems << " decision lag must lie in [0, bin duration);";
  }
  if (!(efficiency >= 0.0 && efficiency <= 1.0)) problems << " efficiency must lie in [0, 1];";
  if (!(thresholds.fidelity > 0.0)) problems << " fidelity threshold must be > 0;";
  if (!(thresholds.g2 > 0.0)) problems << " g2 threshold must be > 0;";
  if (release_cap < 2) problems << " release cap N_ev must be >= 2;";
  if (evacuation_bin < 1 || evacuation_bin > bins + 1) problems << " m_ev must lie in [1, bins + 1];";
  if (kappa_loss < 0.0) problems << " kappa_L must be >= 0;";
  for (const PumpSample& s : pump_samples) {
    if (s.bin < 1 || s.bin > bins) problems << " pump sample bin " << s.bin << " outside [1, bins];";
    if (!(s.probability >= 0.0 && s.probability < 1.0)) problems << " pump sample probability outside [0, 1);";
  }
  const std::string text = problems.str();
  if (!text.empty()) throw ConfigError("invalid protocol configuration:" + text);
}

std::vector<int> sample_bins(int bins, int evacuation_bin) {
  const int last = (evacuation_bin <= bins) ? std::max(1, evacuation_bin - 1) : bins;
  std::vector<int> out = {1, (bins + 2) / 3, (2 * bins + 2) / 3, last};
  for (int& b : out) b = std::clamp(b, 1, bins);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

ControlAction decide_action(const DecisionFacts& f, const ProtocolConfig& c) {
  const bool forced = f.bin >= c.evacuation_bin;
  if (f.x_star >= c.release_cap) return {Action::evacuate, 0.0};
  if (f.x_star < 0) {
    if (forced) return {Action::evacuate, 0.0};
    return {Action::pump, f.pump_setting};
  }
  if (f.x_star <= 1) {
    if (f.store_passes) return {Action::store, 0.0};
    if (forced) return {Action::evacuate, 0.0};
    if (f.estimate_fidelity > c.evacuation_floor) return {Action::pump, f.pump_setting};
    return {Action::evacuate, 0.0};
  }
  if (forced) return {Action::evacuate, 0.0};
  if (f.release_passes) return {Action::release, f.release_setting};
  return {Action::evacuate, 0.0};
}

namespace {

constexpr int kReleaseMaxPrev = 10;
constexpr double kReleaseStep = 0.005;

double total(const Masses& m) {
  double s = 0.0;
  for (double v : m) s += v;
  return s;
}

void add_into(Masses& acc, const Masses& m) {
  if (acc.size() < m.size()) acc.resize(m.size(), 0.0);
  for (std::size_t i = 0; i < m.size(); ++i) acc[i] += m[i];
}

struct Node {
  std::vector<int> history;
  Masses masses;
};

int last_full(const std::vector<int>& h) { return h.empty() ? 0 : h.back(); }

}  // namespace

struct Evaluator::Impl {
  EvaluationContext ctx;
  mutable std::map<std::pair<double, double>, TransitionKernel> pump_kernels;  // (p, eta)
  mutable std::map<std::pair<int, double>, std::unique_ptr<TransitionKernel>> release_kernels;  // null if unreachable
  mutable std::map<std::tuple<int, double, double, double, double, double, double>, double> caps;

  double interval(const ProtocolConfig& c, int bins_of_storage) const { return bins_of_storage * c.timing.duration; }

  const TransitionKernel& pump_kernel(double p, double eta) const {
    auto it = pump_kernels.find({p, eta});
    if (it != pump_kernels.end()) return it->second;
    const std::array<const dynamics::BinOutcomeTable*, 3> tables = {&ctx.tables(p, 0), &ctx.tables(p, 1),
                                                                   &ctx.tables(p, 2)};
    return pump_kernels.emplace(std::make_pair(p, eta), TransitionKernel::pump(tables, eta)).first->second;
  }

  const TransitionKernel* release_kernel(int index, double eta) const {
    auto it = release_kernels.find({index, eta});
    if (it != release_kernels.end()) return it->second.get();
    std::unique_ptr<TransitionKernel> k;
    try {
      const dynamics::ReleaseStages s = ctx.release(index * kReleaseStep);
      k = std::make_unique<TransitionKernel>(TransitionKernel::release(s, eta, kReleaseMaxPrev));
    } catch (const NumericalError&) {
      k.reset();
    }
    return release_kernels.emplace(std::make_pair(index, eta), std::move(k)).first->second.get();
  }

  double cap(const ProtocolConfig& c, int remaining) const {
    const auto key = std::make_tuple(remaining, c.efficiency, c.thresholds.fidelity, c.thresholds.g2,
                                     c.timing.duration, c.timing.decision_lag, c.kappa_loss);
    auto it = caps.find(key);
    if (it != caps.end()) return it->second;
    double best = ctx.pump_grid.front();
    for (double p : ctx.pump_grid) {
      const dynamics::BinOutcomeTable& t = ctx.tables(p, 0);
      Masses m;
      for (const auto& e : t.entries()) {
        const double w = e.weight / t.total() * inference::thin_detector(e.idler_pre, 1, c.efficiency);
        if (w == 0.0) continue;
        if (static_cast<std::size_t>(e.signal) >= m.size()) m.resize(static_cast<std::size_t>(e.signal) + 1, 0.0);
        m[static_cast<std::size_t>(e.signal)] += w;
      }
      const Masses stored = inference::storage_update(m, interval(c, remaining), c.kappa_loss);
      if (!inference::judge(stored, c.thresholds).pass) break;
      best = p;
    }
    caps.emplace(key, best);
    return best;
  }

  double snap(double p) const {
    double best = ctx.pump_grid.front();
    for (double g : ctx.pump_grid) {
      if (std::abs(g - p) < std::abs(best - p)) best = g;
    }
    return best;
  }

  std::vector<double> schedule(const ProtocolConfig& c) const {
    std::vector<PumpSample> s = c.pump_samples;
    std::sort(s.begin(), s.end(), [](const PumpSample& a, const PumpSample& b) { return a.bin < b.bin; });
    std::vector<double> out(static_cast<std::size_t>(c.bins) + 1, 0.0);
    for (int j = 1; j <= c.bins; ++j) {
      double p = ctx.pump_grid.front();
      if (!s.empty()) {
        if (j <= s.front().bin) {
          p = s.front().probability;
        } else if (j >= s.back().bin) {
          p = s.back().probability;
        } else {
          for (std::size_t k = 1; k < s.size(); ++k) {
            if (j <= s[k].bin) {
              const double f = static_cast<double>(j - s[k - 1].bin) / (s[k].bin - s[k - 1].bin);
              p = s[k - 1].probability + f * (s[k].probability - s[k - 1].probability);
              break;
            }
          }
        }
      }
      out[static_cast<std::size_t>(j)] = std::min(snap(p), cap(c, c.bins - j));
    }
    return out;
  }

  // Release projection of a group: P(n^M, x^{m*} = 1) after storage to the end.
  Masses release_projection(const std::vector<const Node*>& group, const TransitionKernel& k,
                            const ProtocolConfig& c, int bin) const {
    Masses acc;
    for (const Node* n : group) {
      add_into(acc, inference::apply_kernel_at_decision(n->masses, k, 1 - last_full(n->history)));
    }
    return inference::storage_update(acc, interval(c, c.bins - bin), c.kappa_loss);
  }

  struct Group {
    std::vector<int> key;
    std::vector<const Node*> nodes;
    Masses masses;
    int x_star = 0;
    int x_prev = 0;
  };

  // Best lattice p_c for the release candidates sharing one (bin, x^{m*}) context.
  int choose_release(const std::vector<const Group*>& groups, const ProtocolConfig& c, int bin) const {
    auto objective = [&](int index) {
      const TransitionKernel* k = release_kernel(index, c.efficiency);
      if (k == nullptr) return 0.0;
      double sum = 0.0;
      for (const Group* g : groups) {
        const Masses m = release_projection(g->nodes, *k, c, bin);
        if (inference::judge(m, c.thresholds).pass) sum += m[1];
      }
      return sum;
    };
    const int lo = static_cast<int>(std::lround(ctx.release_low / kReleaseStep));
    const int hi = static_cast<int>(std::lround(ctx.release_high / kReleaseStep));
    // Coarse scan, then golden-section refinement around the best coarse point.
    const int coarse = 10;
    int best = -1;
    double best_value = 0.0;
    for (int i = lo; i <= hi; i += coarse) {
      const double v = objective(i);
      if (v > best_value) {
        best = i;
        best_value = v;
      }
    }
    if (best < 0) return -1;
    int a = std::max(lo, best - coarse);
    int b = std::min(hi, best + coarse);
    constexpr double kInv = 0.6180339887498949;
    std::map<int, double> seen = {{best, best_value}};
    auto f = [&](int i) {
      auto it = seen.find(i);
      if (it != seen.end()) return it->second;
      const double v = objective(i);
      seen.emplace(i, v);
      return v;
    };
    while (b - a > 2) {
      const int x1 = b - static_cast<int>(std::lround(kInv * (b - a)));
      const int x2 = a + static_cast<int>(std::lround(kInv * (b - a)));
      if (x1 >= x2) break;
      if (f(x1) >= f(x2)) {
        b = x2;
      } else {
        a = x1;
      }
    }
    for (int i = a; i <= b; ++i) {
      if (f(i) > best_value) {
        best = i;
        best_value = f(i);
      }
    }
    return best;
  }

  Evaluation evaluate(const ProtocolConfig& c, bool keep_leaves) const {
    c.validate();
    if (static_cast<int>(ctx.sub_cycle.size()) < c.bins) {
      std::ostringstream msg;
      msg << "evaluation of " << c.bins << " bins needs sub-cycle success values for 0.." << c.bins - 1
          << " bins, got " << ctx.sub_cycle.size();
      throw ConfigError(msg.str());
    }
    Evaluation ev;
    ev.pump_schedule = schedule(c);
    ev.release_settings.resize(static_cast<std::size_t>(c.bins) + 1);

    std::vector<Node> live = {Node{{}, Masses{1.0}}};
    for (int bin = 1; bin <= c.bins + 1; ++bin) {
      std::map<std::vector<int>, Group> groups;
      for (const Node& n : live) {
        std::vector<int> key = n.history;
        if (!key.empty()) key.pop_back();
        Group& g = groups[key];
        g.key = key;
        g.nodes.push_back(&n);
        add_into(g.masses, n.masses);
        const std::size_t h = n.history.size();
        g.x_star = h >= 2 ? n.history[h - 2] : 0;
        g.x_prev = h >= 3 ? n.history[h - 3] : 0;
      }

      if (bin > c.bins) {
        for (auto& [key, g] : groups) {
          const inference::Verdict v = inference::judge(g.masses, c.thresholds);
          const double mass = total(g.masses);
          ev.judged_mass += mass;
          if (v.pass) ev.accepted_mass += g.masses[1];
          if (keep_leaves) ev.leaves.push_back({key, 0, mass, v.fidelity, v.g2, v.pass});
        }
        break;
      }

      // Decide every group; release candidates are settled per x^{m*} afterwards.
      std::vector<std::pair<Group*, ControlAction>> plan;
      std::map<int, std::vector<const Group*>> release_candidates;
      for (auto& [key, g] : groups) {
        DecisionFacts f;
        f.bin = bin;
        f.x_star = g.x_star;
        f.x_prev = g.x_prev;
        f.pump_setting = ev.pump_schedule[static_cast<std::size_t>(bin)];
        const double mass = total(g.masses);
        const int estimate = inference::estimate_state(g.x_star, g.x_prev);
        f.estimate_fidelity =
            (estimate >= 0 && static_cast<std::size_t>(estimate) < g.masses.size() && mass > 0.0)
                ? g.masses[static_cast<std::size_t>(estimate)] / mass
                : 0.0;
        if (g.x_star >= 0 && g.x_star <= 1) {
          const Masses stored = inference::storage_update(g.masses, interval(c, c.bins - bin + 1), c.kappa_loss);
          f.store_passes = inference::judge(stored, c.thresholds).pass;
        }
        if (g.x_star > 1 && g.x_star < c.release_cap && bin < c.evacuation_bin) {
          release_candidates[g.x_star].push_back(&g);
          f.release_passes = true;  // provisional, settled below
        }
        plan.emplace_back(&g, decide_action(f, c));
      }
      std::map<int, int> chosen;
      for (auto& [x, list] : release_candidates) chosen[x] = choose_release(list, c, bin);

      std::map<std::vector<int>, Masses> children;
      for (auto& [g, action] : plan) {
        const double mass = total(g->masses);
        if (action.kind == Action::release) {
          const int index = chosen[g->x_star];
          const TransitionKernel* k = index >= 0 ? release_kernel(index, c.efficiency) : nullptr;
          bool passes = false;
          if (k != nullptr) {
            passes = inference::judge(release_projection(g->nodes, *k, c, bin), c.thresholds).pass;
          }
          if (!passes) {
            action = {Action::evacuate, 0.0};
          } else {
            action.setting = index * kReleaseStep;
            ev.release_settings[static_cast<std::size_t>(bin)][g->x_star] = action.setting;
          }
        }
        switch (action.kind) {
          case Action::evacuate: {
            ev.evacuated_mass += mass;
            ev.evacuation_credit += mass * ctx.sub_cycle[static_cast<std::size_t>(c.bins - bin)];
            break;
          }
          case Action::store: {
            for (const Node* n : g->nodes) {
              const Masses stored =
                  inference::storage_update(n->masses, interval(c, c.bins - bin + 1), c.kappa_loss);
              const inference::Verdict v = inference::judge(stored, c.thresholds);
              const double m = total(n->masses);
              ev.judged_mass += m;
              if (v.pass) ev.accepted_mass += stored[1];
              if (keep_leaves) ev.leaves.push_back({n->history, bin, m, v.fidelity, v.g2, v.pass});
            }
            break;
          }
          case Action::pump:
          case Action::release: {
            const TransitionKernel& k = action.kind == Action::pump
                                            ? pump_kernel(action.setting, c.efficiency)
                                            : *release_kernel(chosen[g->x_star], c.efficiency);
            for (const Node* n : g->nodes) {
              const int x = last_full(n->history);
              for (std::size_t np = 0; np < n->masses.size(); ++np) {
                const double m = n->masses[np];
                if (m == 0.0) continue;
                if (static_cast<int>(np) > k.max_prev()) {
                  ev.truncated_mass += m;
                  continue;
                }
                for (const inference::Transition& t : k.from(static_cast<int>(np))) {
                  std::vector<int> h = n->history;
                  h.push_back(x + t.dx_pre);
                  h.push_back(x + t.dx_pre + t.dx_post);
                  Masses& child = children[h];
                  if (child.size() <= static_cast<std::size_t>(t.n_next)) {
                    child.resize(static_cast<std::size_t>(t.n_next) + 1, 0.0);
                  }
                  child[static_cast<std::size_t>(t.n_next)] += m * t.probability;
                }
              }
            }
            break;
          }
        }
      }

      std::vector<Node> next;
      next.reserve(children.size());
      for (auto& [h, m] : children) {
        const double mass = total(m);
        if (mass < ctx.prune) {
          ev.discarded_mass += mass;
          continue;
        }
        next.push_back({h, std::move(m)});
      }
      live = std::move(next);
    }
    ev.success = ev.accepted_mass + ev.evacuation_credit;
    return ev;
  }
};

Evaluator::Evaluator(EvaluationContext context) : impl_(std::make_unique<Impl>()) {
  if (!context.tables) throw ConfigError("evaluator needs a pump table source");
  if (context.pump_grid.empty()) throw ConfigError("evaluator needs a non-empty pump grid");
  std::sort(context.pump_grid.begin(), context.pump_grid.end());
  impl_->ctx = std::move(context);
}

Evaluator::~Evaluator() = default;
Evaluator::Evaluator(Evaluator&&) noexcept = default;
Evaluator& Evaluator::operator=(Evaluator&&) noexcept = default;

Evaluation Evaluator::evaluate(const ProtocolConfig& config, bool keep_leaves) const {
  return impl_->evaluate(config, keep_leaves);
}

std::vector<double> Evaluator::pump_schedule(const ProtocolConfig& config) const { return impl_->schedule(config); }

double Evaluator::pump_cap(const ProtocolConfig& config, int remaining) const { return impl_->cap(config, remaining); }

const EvaluationContext& Evaluator::context() const { return impl_->ctx; }

void Evaluator::set_sub_cycle(std::vector<double> values) { impl_->ctx.sub_cycle = std::move(values); }

Evaluation evaluate_protocol(const ProtocolConfig& config, const EvaluationContext& context) {
  return Evaluator(context).evaluate(config, true);
}

std::string leaves_to_text(const Evaluation& evaluation) {
  std::ostringstream out;
  out << std::setprecision(17);
  for (const LeafRecord& l : evaluation.leaves) {
    out << '[';
    for (std::size_t i = 0; i < l.history.size(); ++i) {
      if (i != 0) out << (i % 2 == 1 ? ":" : " ");
      out << l.history[i];
    }
    out << "] stored_from=" << l.stored_from << " mass=" << l.mass << " fidelity=" << l.fidelity
        << " g2=" << l.g2 << (l.accepted ? " accepted" : " rejected") << '\n';
  }
  return out.str();
}

double release_success_closed_form(int n, double p_cavity) {
  if (n < 1) throw std::invalid_argument("release_success_closed_form: n must be >= 1");
  return n * p_cavity * std::pow(1.0 - p_cavity, n - 1);
}

double frequency_multiplex_combine(double success, int modes) {
  if (!(success >= 0.0 && success <= 1.0)) throw std::invalid_argument("success probability outside [0, 1]");
  if (modes < 1) throw std::invalid_argument("need at least one mode");
  return 1.0 - std::pow(1.0 - success, modes);
}

int modes_needed(double success, double target) {
  if (!(success >= 0.0 && success <= 1.0) || !(target >= 0.0 && target < 1.0)) {
    throw std::invalid_argument("modes_needed: probabilities outside range");
  }
  if (target == 0.0) return 1;
  if (success == 0.0) throw NumericalError("modes_needed: zero success probability cannot reach the target");
  if (success == 1.0) return 1;
  int n = std::max(1, static_cast<int>(std::ceil(std::log1p(-target) / std::log1p(-success))));
  // Guard the rounding at the boundary.
  while (n > 1 && frequency_multiplex_combine(success, n - 1) >= target) --n;
  while (frequency_multiplex_combine(success, n) < target) ++n;
  return n;
}

}  // namespace tsmux::protocol
