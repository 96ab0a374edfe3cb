#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <vector>

#include "tsmux/errors.hpp"
#include "tsmux/optimizer.hpp"
#include "tsmux/protocol.hpp"

namespace pr = tsmux::protocol;
namespace dy = tsmux::dynamics;
namespace inf = tsmux::inference;

namespace {

const dy::BinTiming kTiming{100e-12, 12e-12};

struct Entry {
  int gained;
  int pre;
  int post;
  double weight;
};

// Pump tables with a lost-idler branch (leaky) or with every idler seen before the decision (exact).
class World {
 public:
  explicit World(double p, bool exact = false) {
    const std::vector<Entry> leaky = {{0, 0, 0, 1 - 3 * p},      {1, 1, 0, 1.6 * p}, {1, 0, 1, 0.5 * p},
                                      {1, 0, 0, 0.4 * p},        {2, 2, 0, 0.3 * p}, {2, 1, 1, 0.1 * p},
                                      {2, 1, 0, 0.1 * p}};
    const std::vector<Entry> clean = {{0, 0, 0, 1 - 3 * p}, {1, 1, 0, 2.5 * p}, {2, 2, 0, 0.5 * p}};
    entries_ = exact ? clean : leaky;
    exact_ = exact;
    for (int n0 = 0; n0 < 3; ++n0) {
      dy::BinOutcomeTable t(p, n0, kTiming);
      for (const Entry& e : entries_) t.add(n0 + e.gained, e.pre, e.post, e.weight);
      t.finalize();
      tables_[n0] = t;
    }
    grid_ = p;
  }

  [[nodiscard]] pr::EvaluationContext context() const {
    pr::EvaluationContext c;
    c.tables = [this](double, int n0) -> const dy::BinOutcomeTable& { return tables_.at(n0); };
    // exact: nothing happens after the decision time
    c.release = [exact = exact_](double pc) {
      const double c1 = exact ? pc : 1 - 0.8 * (1 - pc);
      return dy::ReleaseStages{c1, 1 - c1, pc, 1 - pc};
    };
    c.pump_grid = {grid_};
    c.prune = 0.0;
    return c;
  }

  [[nodiscard]] const std::vector<Entry>& entries() const { return entries_; }

 private:
  std::map<int, dy::BinOutcomeTable> tables_;
  std::vector<Entry> entries_;
  double grid_ = 0.0;
  bool exact_ = false;
};

pr::ProtocolConfig config(int bins, int evacuation_bin, double eta, int cap = 2) {
  pr::ProtocolConfig c;
  c.bins = bins;
  c.timing = kTiming;
  c.efficiency = eta;
  c.thresholds = {0.8, 1.0};
  c.release_cap = cap;
  c.evacuation_floor = 0.5;
  c.evacuation_bin = evacuation_bin;
  c.kappa_loss = 0.0;
  return c;
}

double sum(const inf::Masses& m) {
  double s = 0.0;
  for (double v : m) s += v;
  return s;
}

// Sequence-by-sequence evaluation without release and without storage loss; an evacuation at bin m
// starts a fresh cycle of M - m bins that is evaluated directly.
double oracle(const World& w, const pr::ProtocolConfig& c) {
  if (c.bins == 0) return 0.0;
  using History = std::vector<int>;
  std::map<History, inf::Masses> live = {{{}, {1.0}}};
  double success = 0.0;
  for (int bin = 1; bin <= c.bins + 1; ++bin) {
    std::map<History, std::vector<std::pair<History, inf::Masses>>> groups;
    for (const auto& [h, m] : live) {
      History key = h;
      if (!key.empty()) key.pop_back();
      groups[key].emplace_back(h, m);
    }
    std::map<History, inf::Masses> next;
    for (const auto& [key, members] : groups) {
      inf::Masses g;
      for (const auto& [h, m] : members) {
        if (g.size() < m.size()) g.resize(m.size(), 0.0);
        for (std::size_t n = 0; n < m.size(); ++n) g[n] += m[n];
      }
      const inf::Verdict verdict = inf::judge(g, c.thresholds);
      if (bin == c.bins + 1) {
        if (verdict.pass) success += g[1];
        continue;
      }
      const std::size_t len = members.front().first.size();
      const int x_star = len >= 2 ? members.front().first[len - 2] : 0;
      const int x_prev = len >= 3 ? members.front().first[len - 3] : 0;
      const bool forced = bin >= c.evacuation_bin;
      const int estimate = x_star >= 0 ? x_star : x_star - x_prev;
      const double fidelity =
          estimate >= 0 && static_cast<std::size_t>(estimate) < g.size() ? g[static_cast<std::size_t>(estimate)] / sum(g)
                                                                          : 0.0;
      enum { pump, store, evacuate } action = evacuate;
      if (x_star >= c.release_cap) {
        action = evacuate;
      } else if (x_star < 0) {
        action = forced ? evacuate : pump;
      } else if (x_star <= 1) {
        if (verdict.pass) {
          action = store;
        } else if (!forced && fidelity > c.evacuation_floor) {
          action = pump;
        }
      }
      if (action == evacuate) {
        pr::ProtocolConfig rest = c;
        rest.bins = c.bins - bin;
        rest.evacuation_bin = std::min(c.evacuation_bin, rest.bins + 1);
        success += sum(g) * oracle(w, rest);
        continue;
      }
      for (const auto& [h, m] : members) {
        if (action == store) {
          if (inf::judge(m, c.thresholds).pass) success += m[1];
          continue;
        }
        const int x = h.empty() ? 0 : h.back();
        for (std::size_t n = 0; n < m.size() && n <= 2; ++n) {
          for (const Entry& e : w.entries()) {
            for (int a = 0; a <= e.pre; ++a) {
              for (int b = 0; b <= e.post; ++b) {
                const double p = m[n] * e.weight * inf::thin_detector(e.pre, a, c.efficiency) *
                                 inf::thin_detector(e.post, b, c.efficiency);
                if (p == 0.0) continue;
                History child = h;
                child.push_back(x + a);
                child.push_back(x + a + b);
                inf::Masses& cm = next[child];
                const std::size_t k = n + static_cast<std::size_t>(e.gained);
                if (cm.size() <= k) cm.resize(k + 1, 0.0);
                cm[k] += p;
              }
            }
          }
        }
      }
    }
    live = std::move(next);
  }
  return success;
}

std::vector<double> oracle_sub_cycles(const World& w, const pr::ProtocolConfig& c) {
  std::vector<double> out = {0.0};
  for (int k = 1; k < c.bins; ++k) {
    pr::ProtocolConfig rest = c;
    rest.bins = k;
    rest.evacuation_bin = std::min(c.evacuation_bin, k + 1);
    out.push_back(oracle(w, rest));
  }
  return out;
}

}  // namespace

TEST(Protocol, SampleBins) {
  EXPECT_EQ(pr::sample_bins(10, 11), (std::vector<int>{1, 4, 7, 10}));
  EXPECT_EQ(pr::sample_bins(10, 6), (std::vector<int>{1, 4, 5, 7}));
  EXPECT_EQ(pr::sample_bins(1, 2), (std::vector<int>{1}));
}

TEST(Protocol, DecisionRules) {
  pr::ProtocolConfig c = config(5, 4, 0.9, 3);
  pr::DecisionFacts f;
  f.bin = 2;
  f.pump_setting = 0.1;
  f.release_setting = 0.4;
  f.x_star = 3;
  EXPECT_EQ(pr::decide_action(f, c).kind, pr::Action::evacuate);
  f.x_star = -1;
  EXPECT_EQ(pr::decide_action(f, c).kind, pr::Action::pump);
  f.x_star = 1;
  f.store_passes = true;
  EXPECT_EQ(pr::decide_action(f, c).kind, pr::Action::store);
  f.store_passes = false;
  f.estimate_fidelity = 0.6;
  EXPECT_EQ(pr::decide_action(f, c).kind, pr::Action::pump);
  f.estimate_fidelity = 0.5;
  EXPECT_EQ(pr::decide_action(f, c).kind, pr::Action::evacuate);
  f.x_star = 2;
  f.release_passes = true;
  const pr::ControlAction r = pr::decide_action(f, c);
  EXPECT_EQ(r.kind, pr::Action::release);
  EXPECT_DOUBLE_EQ(r.setting, 0.4);
  f.bin = 4;
  EXPECT_EQ(pr::decide_action(f, c).kind, pr::Action::evacuate);
  f.x_star = 1;
  f.store_passes = true;
  EXPECT_EQ(pr::decide_action(f, c).kind, pr::Action::store);
}

TEST(Protocol, InvalidConfigListsProblems) {
  pr::ProtocolConfig c = config(3, 9, 1.5);
  try {
    c.validate();
    FAIL() << "expected ConfigError";
  } catch (const tsmux::ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("m_ev"), std::string::npos);
  }
}

TEST(Protocol, EvacuationRecursionMatchesDirectEvaluation) {
  const World w(0.08);
  for (int ev_bin : {2, 3, 4}) {
    for (double eta : {0.9, 1.0}) {
      const pr::ProtocolConfig c = config(3, ev_bin, eta);
      pr::EvaluationContext ctx = w.context();
      ctx.sub_cycle = oracle_sub_cycles(w, c);
      const pr::Evaluation ev = pr::Evaluator(ctx).evaluate(c);
      EXPECT_NEAR(ev.success, oracle(w, c), 1e-12) << "m_ev=" << ev_bin << " eta=" << eta;
      EXPECT_NEAR(ev.success, ev.accepted_mass + ev.evacuation_credit, 1e-15);
    }
  }
}

TEST(Protocol, SubCycleValuesAreRequired) {
  const World w(0.08);
  EXPECT_THROW((void)pr::Evaluator(w.context()).evaluate(config(3, 4, 0.9)), tsmux::ConfigError);
}

TEST(Protocol, MassIsAccountedFor) {
  const World w(0.08);
  const pr::ProtocolConfig c = config(4, 5, 0.95, 3);
  pr::EvaluationContext ctx = w.context();
  ctx.sub_cycle = {0.0, 0.0, 0.0, 0.0};
  const pr::Evaluation ev = pr::Evaluator(ctx).evaluate(c);
  EXPECT_NEAR(ev.judged_mass + ev.evacuated_mass + ev.discarded_mass + ev.truncated_mass, 1.0, 1e-12);
}

TEST(Protocol, AcceptedLeavesPassThresholds) {
  const World w(0.1);
  pr::EvaluationContext ctx = w.context();
  ctx.sub_cycle = {0.0, 0.1, 0.2, 0.3};
  for (int cap : {2, 3}) {
    const pr::ProtocolConfig c = config(4, 5, 0.93, cap);
    const pr::Evaluation ev = pr::Evaluator(ctx).evaluate(c, true);
    int accepted = 0;
    for (const pr::LeafRecord& l : ev.leaves) {
      if (!l.accepted) continue;
      ++accepted;
      EXPECT_GE(l.fidelity, c.thresholds.fidelity);
      EXPECT_LE(l.g2, c.thresholds.g2);
    }
    EXPECT_GT(accepted, 0);
  }
}

TEST(Protocol, DisablingReleaseNeverHelps) {
  const World w(0.15);
  for (int bins = 2; bins <= 4; ++bins) {
    for (double floor : {0.0, 0.5, 0.9}) {
      pr::ProtocolConfig with = config(bins, bins + 1, 0.96, 3);
      with.evacuation_floor = floor;
      pr::ProtocolConfig without = with;
      without.release_cap = 2;
      pr::EvaluationContext ctx = w.context();
      ctx.sub_cycle = std::vector<double>(static_cast<std::size_t>(bins), 0.0);
      const pr::Evaluator e(ctx);
      EXPECT_LE(e.evaluate(without).success, e.evaluate(with).success + 1e-15) << bins << " " << floor;
    }
  }
}

TEST(Protocol, PerfectDetectionStoresExactSinglePhotons) {
  const World w(0.1, true);
  pr::ProtocolConfig c = config(4, 5, 1.0, 3);
  c.timing.decision_lag = 0.0;
  pr::EvaluationContext ctx = w.context();
  ctx.sub_cycle = {0.0, 0.0, 0.0, 0.0};
  const pr::Evaluation ev = pr::Evaluator(ctx).evaluate(c, true);
  int stored = 0;
  for (const pr::LeafRecord& l : ev.leaves) {
    if (l.stored_from == 0) continue;
    const std::size_t n = l.history.size();
    if (n >= 2 && l.history[n - 2] == 1) {
      ++stored;
      EXPECT_EQ(l.fidelity, 1.0);
    }
  }
  EXPECT_GT(stored, 0);
}

TEST(Optimizer, SuccessIsMonotoneInBins) {
  const World w(0.1);
  pr::ProtocolConfig base = config(1, 2, 0.96, 3);
  pr::SearchSpace space;
  space.max_bins = 5;
  space.sweeps = 1;
  space.release_caps = {2, 3};
  const pr::OptimizationResult r = pr::optimize(base, {kTiming.duration}, space,
                                                [&](double) { return pr::Evaluator(w.context()); });
  ASSERT_EQ(r.best.size(), 5u);
  for (std::size_t m = 1; m < r.best.size(); ++m) EXPECT_GE(r.best[m].success, r.best[m - 1].success);
  for (const pr::BinOptimum& o : r.best) {
    EXPECT_EQ(o.config.bins, o.bins);
    EXPECT_NEAR(o.success, o.evaluation.success, 1e-15);
  }
}

TEST(Optimizer, DurationGridSpansIdlerLifetimes) {
  const double kappa = 1e11;
  const std::vector<double> g = pr::bin_duration_grid(kappa, 6);
  ASSERT_EQ(g.size(), 6u);
  EXPECT_NEAR(g.front(), 5.0 / (2 * kappa), 1e-24);
  EXPECT_NEAR(g.back(), 200.0 / (2 * kappa), 1e-22);
  for (std::size_t i = 2; i < g.size(); ++i) EXPECT_NEAR(g[i] / g[i - 1], g[1] / g[0], 1e-12);
}

TEST(Combiner, ForwardAndInverse) {
  EXPECT_DOUBLE_EQ(pr::frequency_multiplex_combine(0.3, 1), 0.3);
  EXPECT_DOUBLE_EQ(pr::frequency_multiplex_combine(0.5, 2), 0.75);
  EXPECT_EQ(pr::modes_needed(0.7, 0.99), 4);
  EXPECT_EQ(pr::modes_needed(0.6838, 0.99), 4);
  EXPECT_EQ(pr::modes_needed(0.6837, 0.99), 5);
  EXPECT_EQ(pr::modes_needed(0.784, 0.99), 4);
  EXPECT_EQ(pr::modes_needed(0.7846, 0.99), 3);
  EXPECT_EQ(pr::modes_needed(0.5, 0.75), 2);
  EXPECT_THROW((void)pr::modes_needed(0.0, 0.99), tsmux::NumericalError);
  for (double p = 0.05; p < 1.0; p += 0.0137) {
    const int n = pr::modes_needed(p, 0.99);
    EXPECT_GE(pr::frequency_multiplex_combine(p, n), 0.99);
    if (n > 1) {
      EXPECT_LT(pr::frequency_multiplex_combine(p, n - 1), 0.99);
    }
  }
}
