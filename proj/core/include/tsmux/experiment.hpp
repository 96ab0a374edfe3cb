#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "tsmux/bin_table.hpp"
#include "tsmux/config.hpp"
#include "tsmux/optimizer.hpp"

namespace tsmux::experiment {

inline constexpr const char* kCodeVersion = "0.1.0";

/// Command line overrides; empty or unset fields keep the config values.
struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string output;
  int jobs = 0;
  std::string cache_dir;
  std::vector<int> figures;  ///< empty means all
};

struct Session {
  config::ExperimentConfig config;
  std::string config_path;
  std::filesystem::path output;
  std::filesystem::path cache_dir;
  std::uint64_t seed = 0;
  int jobs = 1;
  std::ostream* log = nullptr;

  void note(const std::string& line) const;
};

/// Loads and validates the config, then applies the overrides.
[[nodiscard]] Session open_session(const Options& options, std::ostream* log = nullptr);

/// CSV with a header row of `name[unit]` columns.
class Csv {
 public:
  explicit Csv(std::vector<std::string> columns);
  Csv& row();
  Csv& cell(double value);
  Csv& cell(long long value);
  Csv& cell(int value) { return cell(static_cast<long long>(value)); }
  Csv& cell(const std::string& text);
  [[nodiscard]] std::string text() const;
  [[nodiscard]] std::size_t rows() const { return rows_.size(); }

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
};

[[nodiscard]] std::string format_number(double value);

/// Written files, relative to the output directory.
using Artifacts = std::vector<std::filesystem::path>;

enum class TableMode { build, cache_only };

/// Shared table and release state for every bin duration and loss rate touched in one run.
class Workbench {
 public:
  Workbench(const Session& session, TableMode mode);

  [[nodiscard]] std::shared_ptr<dynamics::LazyTables> tables(const config::ExperimentConfig& config, double duration);
  /// Evaluator over `config`'s physics at one bin duration.
  [[nodiscard]] protocol::Evaluator evaluator(const config::ExperimentConfig& config, double duration);
  [[nodiscard]] protocol::OptimizationResult optimize(const config::ExperimentConfig& config);

 private:
  using Key = std::pair<double, double>;  // (kappa_L, duration)
  const Session& session_;
  TableMode mode_;
  std::mutex mutex_;
  std::map<Key, std::shared_ptr<dynamics::LazyTables>> tables_;
  std::map<Key, std::shared_ptr<std::map<double, dynamics::ReleaseStages>>> releases_;
};

// Subcommands. Each returns the files it wrote.
[[nodiscard]] Artifacts run_spectra(const Session& session, const std::filesystem::path& dir);
[[nodiscard]] Artifacts run_pump_table(const Session& session);
/// Sets `passed` to whether every unraveling check held within 3 sigma.
[[nodiscard]] Artifacts run_verify_dynamics(const Session& session, bool& passed);
[[nodiscard]] Artifacts run_optimize(const Session& session);
[[nodiscard]] Artifacts run_sweep(const Session& session);
[[nodiscard]] Artifacts run_figures(const Session& session, const std::vector<int>& figures);

/// One sweep point: physics and thresholds overridden, best success over M <= max_bins.
struct SweepPoint {
  double quality_loss = 0.0;
  double efficiency = 0.0;
  double fidelity_threshold = 0.0;
  double g2_threshold = 0.0;
  std::vector<int> release_caps;
  int bins = 0;
  double bin_duration = 0.0;
  double success = 0.0;
};

/// Evaluates (or reloads from the cache) every point of the given grids.
[[nodiscard]] std::vector<SweepPoint> sweep_points(const Session& session, Workbench& bench,
                                                   const std::vector<double>& quality_loss,
                                                   const std::vector<double>& efficiencies,
                                                   const std::vector<double>& fidelity_thresholds,
                                                   const std::vector<double>& g2_thresholds,
                                                   const std::vector<int>& release_caps);

/// Sweep results with P - F_th and the modes needed to reach `target` combined.
[[nodiscard]] Csv sweep_table(const std::vector<SweepPoint>& points, double target);

/// optimize.csv, optimize_runs.csv, sequences.csv and policy.json under `dir`.
[[nodiscard]] Artifacts write_optimization(const Session& session, const protocol::OptimizationResult& result,
                                           const std::filesystem::path& dir);

/// Writes `contents` atomically under the output directory and returns the relative path.
std::filesystem::path write_output(const Session& session, const std::filesystem::path& relative,
                                   const std::string& contents);

void write_manifest(const Session& session, const std::string& command, const Artifacts& artifacts,
                    double seconds);

/// Runs one subcommand with error reporting; returns the process exit code.
[[nodiscard]] int run(const std::string& command, const Options& options, std::ostream& out, std::ostream& err);

}  // namespace tsmux::experiment
