#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tsmux/optimizer.hpp"
#include "tsmux/release.hpp"
#include "tsmux/spectral.hpp"
#include "tsmux/trajectory.hpp"

namespace tsmux::config {

/// Quality factors and timings of one bin. Detunings are in units of kappa_p.
struct DynamicsSection {
  double quality_loss = 0.0;
  double quality_idler = 0.0;
  double quality_pump = 0.0;
  double detuning_signal = 0.0;
  double detuning_idler = 0.0;
  double decision_lag = 0.0;   ///< tau_D (s)
  double response_time = 0.0;  ///< 1 / kappa_psi (s)
  double pump_width = 0.0;     ///< tau_p (s)
  double release_width = 0.0;  ///< default tau_r (s)
  double kappa_max = 0.0;      ///< release coupling cap (rad/s); 0 means kappa_i
};

struct ProtocolSection {
  double efficiency = 0.0;
  double fidelity_threshold = 0.0;
  double g2_threshold = 0.0;
  int max_bins = 0;
  std::vector<double> bin_durations;  ///< explicit tau_bin values (s); empty means the default grid
  int duration_count = 0;             ///< points of the default grid
  std::vector<int> release_caps;
  std::vector<double> evacuation_floors;
  int sweeps = 0;
  std::vector<double> pump_grid;  ///< searched pair probabilities; defaults to dynamics::pump_grid()
};

struct RunSection {
  int trajectories = 0;
  std::uint64_t seed = 0;
  std::string output;
  int jobs = 1;
  std::string cache_dir;
};

/// Grids for the `sweep` command; empty lists keep the base value.
struct SweepSection {
  std::vector<double> efficiencies;
  std::vector<double> fidelity_thresholds;
  std::vector<double> g2_thresholds;
  std::vector<double> quality_loss;
};

struct ExperimentConfig {
  spectral::GeometrySpec device;
  DynamicsSection dynamics;
  ProtocolSection protocol;
  RunSection run;
  SweepSection sweep;
  std::string origin;  ///< file name used in messages

  /// Carrier angular frequency 2 pi c / wavelength, used for every Q -> kappa conversion.
  [[nodiscard]] double carrier() const;
  [[nodiscard]] double kappa_loss() const;
  [[nodiscard]] double kappa_idler() const;
  [[nodiscard]] double kappa_pump() const;
};

/// Parses YAML text. Throws ConfigError listing every problem, each prefixed by origin:line.
[[nodiscard]] ExperimentConfig parse_config(const std::string& text, const std::string& origin = "<config>");
[[nodiscard]] ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical text of the values that affect results (not seed, output, jobs or cache location).
[[nodiscard]] std::string canonical_text(const ExperimentConfig& config);
[[nodiscard]] std::uint64_t content_hash(const ExperimentConfig& config);

[[nodiscard]] dynamics::DynamicsParams dynamics_params(const ExperimentConfig& config);
[[nodiscard]] dynamics::ReleaseSettings release_settings(const ExperimentConfig& config);
[[nodiscard]] protocol::ProtocolConfig base_protocol(const ExperimentConfig& config);
[[nodiscard]] protocol::SearchSpace search_space(const ExperimentConfig& config);
[[nodiscard]] std::vector<double> bin_durations(const ExperimentConfig& config);

}  // namespace tsmux::config
