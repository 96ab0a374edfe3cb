#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "tsmux/trajectory.hpp"

namespace tsmux::dynamics {

/// Bin boundaries relative to t_{m-1} = 0: decision at duration - decision_lag, end at duration.
struct BinTiming {
  double duration = 0.0;
  double decision_lag = 0.0;

  [[nodiscard]] double split() const { return duration - decision_lag; }
  void validate() const;
};

/// The pump settings searched by the optimiser, as pair probabilities.
[[nodiscard]] std::vector<double> pump_grid();

/// Cutoff large enough for a pumped bin starting from n_s = initial_signal.
[[nodiscard]] int initial_cutoff(double pair_probability, int initial_signal);

/// `params` with the pump scaled to X0 = scale and placed at the start of a bin beginning at 0.
[[nodiscard]] DynamicsParams with_scale(DynamicsParams params, double scale);

/// 1 - |<0,0|psi~(t_m)>|^2 for the no-jump evolution from |0,0> with pump scale X0.
[[nodiscard]] double pair_probability(double pump_scale, const DynamicsParams& params, const BinTiming& timing,
                                      int cutoff);

/// Pump scale X0 giving pair probability `target` at the end of the bin. Throws NumericalError
/// when the target cannot be bracketed.
[[nodiscard]] double calibrate_pump(double target, const DynamicsParams& params, const BinTiming& timing);

/// Monte-Carlo joint distribution of (final n_s, idler emissions up to the decision time, idler
/// emissions after it) for one pump setting and initial signal number. Weights are trajectory
/// counts; divide by total() for probabilities.
class BinOutcomeTable {
 public:
  struct Entry {
    int signal = 0;
    int idler_pre = 0;
    int idler_post = 0;
    double weight = 0.0;
  };

  BinOutcomeTable() = default;
  BinOutcomeTable(double pump_probability, int initial_signal, BinTiming timing);

  void add(int signal, int idler_pre, int idler_post, double weight);
  /// Sorts and merges entries; call once after the last add().
  void finalize();

  [[nodiscard]] double pump_probability() const { return pump_probability_; }
  [[nodiscard]] int initial_signal() const { return initial_signal_; }
  [[nodiscard]] const BinTiming& timing() const { return timing_; }
  [[nodiscard]] const std::vector<Entry>& entries() const { return entries_; }
  [[nodiscard]] double total() const { return total_; }
  [[nodiscard]] double probability(int signal, int idler_pre, int idler_post) const;
  [[nodiscard]] std::vector<double> signal_marginal() const;

  // Diagnostics carried with the table.
  int cutoff = 0;
  double pump_scale = 0.0;
  double edge_population = 0.0;
  double mean_idler_at_end = 0.0;

 private:
  double pump_probability_ = 0.0;
  int initial_signal_ = 0;
  BinTiming timing_;
  std::vector<Entry> entries_;
  double total_ = 0.0;
};

struct TableRequest {
  double pump_probability = 0.0;
  int initial_signal = 0;
  int trajectories = 10000;
  std::uint64_t master_seed = 0;
  std::uint64_t stream = 0;  ///< table id mixed into every trajectory seed
  int jobs = 1;
  double truncation_limit = 1e-4;
  int max_cutoff = 80;
  double pump_scale = -1.0;  ///< calibrated X0; negative means calibrate here
};

/// Runs the trajectories for one table, raising the cutoff until the ensemble-averaged
/// cutoff-shell population stays below the limit. Throws TruncationError at max_cutoff.
[[nodiscard]] BinOutcomeTable estimate_bin_table(const TableRequest& request, const DynamicsParams& params,
                                                 const BinTiming& timing);

/// Tables for every pump setting and initial n_s in {0, 1, 2} at one bin timing.
struct PumpTableSet {
  BinTiming timing;
  std::vector<double> settings;
  std::vector<std::array<BinOutcomeTable, 3>> tables;  ///< [setting][initial n_s]

  [[nodiscard]] const BinOutcomeTable& table(std::size_t setting, int initial_signal) const;
  /// Index of the setting closest to p; throws if none is within 1e-12.
  [[nodiscard]] std::size_t index_of(double p) const;
};

/// Seed stream for the table at (timing, setting, initial signal number).
[[nodiscard]] std::uint64_t table_stream(const BinTiming& timing, double pump_probability, int initial_signal);

/// Builds tables on first request and keeps them. Pump scales are calibrated once per setting.
/// Safe to share between threads. Builders receive a request without a pump scale and may ask
/// pump_scale() for it.
class LazyTables {
 public:
  using Builder = std::function<BinOutcomeTable(TableRequest)>;

  /// `builder` defaults to estimate_bin_table with `params` and `timing`; a custom one can add
  /// persistence around it.
  LazyTables(DynamicsParams params, BinTiming timing, int trajectories, std::uint64_t master_seed, int jobs,
             Builder builder = {});

  const BinOutcomeTable& get(double pump_probability, int initial_signal);
  void insert(BinOutcomeTable table);
  [[nodiscard]] std::vector<const BinOutcomeTable*> tables() const;
  [[nodiscard]] const BinTiming& timing() const { return timing_; }
  [[nodiscard]] const DynamicsParams& params() const { return params_; }
  [[nodiscard]] TableRequest request(double pump_probability, int initial_signal) const;
  /// Calibrated X0 for a setting, memoised.
  [[nodiscard]] double pump_scale(double pump_probability);

 private:
  DynamicsParams params_;
  BinTiming timing_;
  int trajectories_;
  std::uint64_t seed_;
  int jobs_;
  Builder builder_;
  mutable std::mutex mutex_;
  std::map<double, double> scales_;
  std::map<std::pair<double, int>, std::unique_ptr<BinOutcomeTable>> tables_;
};

[[nodiscard]] PumpTableSet build_pump_tables(const std::vector<double>& settings, const DynamicsParams& params,
                                             const BinTiming& timing, int trajectories, std::uint64_t master_seed,
                                             int jobs);

}  // namespace tsmux::dynamics
