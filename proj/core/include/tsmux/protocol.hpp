#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "tsmux/bin_table.hpp"
#include "tsmux/inference.hpp"
#include "tsmux/release.hpp"

namespace tsmux::protocol {

enum class Action { pump, release, evacuate, store };

[[nodiscard]] const char* to_string(Action a);

struct ControlAction {
  Action kind = Action::evacuate;
  double setting = 0.0;  ///< pair probability for pump, p_c for release
};

struct PumpSample {
  int bin = 1;
  double probability = 0.0;
};

struct ProtocolConfig {
  int bins = 1;                        ///< M
  dynamics::BinTiming timing;          ///< tau_bin and tau_D
  double efficiency = 0.996;           ///< eta
  inference::Thresholds thresholds;
  int release_cap = 3;                 ///< N_ev; 2 disables release
  double evacuation_floor = 0.0;       ///< F_ev
  int evacuation_bin = 2;              ///< m_ev; bins + 1 never forces evacuation
  std::vector<PumpSample> pump_samples;
  double kappa_loss = 0.0;

  /// Throws ConfigError listing every violated constraint.
  void validate() const;
};

/// Bins at which pump settings are sampled: {1, ceil(M/3), ceil(2M/3), m_ev - 1 or M}.
[[nodiscard]] std::vector<int> sample_bins(int bins, int evacuation_bin);

/// Everything decide_action needs about one decision point.
struct DecisionFacts {
  int bin = 1;  ///< bin whose action is being chosen
  int x_star = 0;
  int x_prev = 0;
  double estimate_fidelity = 0.0;  ///< P(n = n_est | sequence)
  bool store_passes = false;
  bool release_passes = false;
  double pump_setting = 0.0;
  double release_setting = 0.0;
};

[[nodiscard]] ControlAction decide_action(const DecisionFacts& facts, const ProtocolConfig& config);

/// Pump tables looked up by (pair probability, initial signal number).
using TableSource = std::function<const dynamics::BinOutcomeTable&(double, int)>;
/// Release fate probabilities for a p_c setting; throws NumericalError when unreachable.
using ReleaseSource = std::function<dynamics::ReleaseStages(double)>;

struct EvaluationContext {
  TableSource tables;
  ReleaseSource release;
  std::vector<double> pump_grid = dynamics::pump_grid();
  /// Success probability of shorter cycles at the same bin duration; [0] = 0.
  std::vector<double> sub_cycle = {0.0};
  double prune = 1e-9;
  double release_low = 0.05;
  double release_high = 0.95;
};

/// A sequence that ended in a stored or final-bin judgement.
struct LeafRecord {
  std::vector<int> history;  ///< x^{1*}, x^1, x^{2*}, x^2, ...
  int stored_from = 0;       ///< first storage bin, 0 if the cycle ran to the end
  double mass = 0.0;         ///< P(sequence)
  double fidelity = 0.0;
  double g2 = 0.0;
  bool accepted = false;
};

struct Evaluation {
  double success = 0.0;            ///< P(M)
  double accepted_mass = 0.0;      ///< sum of P(n^M = 1, sequence) over accepted leaves
  double evacuation_credit = 0.0;  ///< sum of P(sequence) P(M - m) over evacuations
  double evacuated_mass = 0.0;
  double judged_mass = 0.0;        ///< mass that reached a stored or final judgement
  double discarded_mass = 0.0;     ///< pruned branches
  double truncated_mass = 0.0;     ///< prior mass above n = 2 when pumping
  std::vector<double> pump_schedule;               ///< per bin, capped
  std::vector<std::map<int, double>> release_settings;  ///< per bin: x^{m*} -> p_c
  std::vector<LeafRecord> leaves;
};

/// Evaluates the feedback protocol over all detection sequences. Throws on missing tables.
class Evaluator {
 public:
  explicit Evaluator(EvaluationContext context);
  ~Evaluator();
  Evaluator(Evaluator&&) noexcept;
  Evaluator& operator=(Evaluator&&) noexcept;

  [[nodiscard]] Evaluation evaluate(const ProtocolConfig& config, bool keep_leaves = false) const;
  /// Interpolated, snapped and capped pump setting per bin.
  [[nodiscard]] std::vector<double> pump_schedule(const ProtocolConfig& config) const;
  /// Largest grid setting whose fresh-cavity projection passes with `remaining` bins of
  /// storage after the pumped bin; the smallest grid value when none does.
  [[nodiscard]] double pump_cap(const ProtocolConfig& config, int remaining) const;
  [[nodiscard]] const EvaluationContext& context() const;
  void set_sub_cycle(std::vector<double> values);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

[[nodiscard]] Evaluation evaluate_protocol(const ProtocolConfig& config, const EvaluationContext& context);

/// Debug listing of leaves, one line per sequence.
[[nodiscard]] std::string leaves_to_text(const Evaluation& evaluation);

/// n p_c (1 - p_c)^(n - 1).
[[nodiscard]] double release_success_closed_form(int n, double p_cavity);

/// 1 - (1 - P)^modes.
[[nodiscard]] double frequency_multiplex_combine(double success, int modes);
/// Smallest number of modes reaching `target`; throws NumericalError if unreachable.
[[nodiscard]] int modes_needed(double success, double target);

}  // namespace tsmux::protocol
