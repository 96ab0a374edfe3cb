#include "tsmux/config.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "tsmux/errors.hpp"
#include "tsmux/seeding.hpp"

namespace tsmux::config {

namespace {

// Collects every problem instead of stopping at the first.
class Reader {
 public:
  explicit Reader(std::string origin) : origin_(std::move(origin)) {}

  void problem(int line, const std::string& what) {
    std::ostringstream s;
    s << origin_ << ':' << line << ": " << what;
    problems_.push_back(s.str());
  }

  static int line_of(const YAML::Node& n) { return n.Mark().line >= 0 ? n.Mark().line + 1 : 1; }

  // Returns the section node, or an undefined node after recording a problem.
  YAML::Node section(const YAML::Node& root, const std::string& name, bool required,
                     const std::set<std::string>& keys) {
    const YAML::Node s = root[name];
    if (!s) {
      if (required) problem(1, "missing section '" + name + "'");
      return YAML::Node(YAML::NodeType::Undefined);
    }
    if (!s.IsMap()) {
      problem(line_of(s), "section '" + name + "' must be a mapping");
      return YAML::Node(YAML::NodeType::Undefined);
    }
    for (const auto& kv : s) {
      const std::string key = kv.first.as<std::string>();
      if (keys.count(key) == 0) problem(line_of(kv.first), "unknown field '" + name + "." + key + "'");
    }
    return s;
  }

  template <class T>
  void scalar(const YAML::Node& s, const std::string& section, const std::string& key, T& out, bool required,
              int section_line) {
    if (!s.IsDefined()) {
      if (required) problem(section_line, "missing field '" + section + "." + key + "'");
      return;
    }
    const YAML::Node v = s[key];
    if (!v) {
      if (required) problem(line_of(s), "missing field '" + section + "." + key + "'");
      return;
    }
    try {
      out = v.as<T>();
    } catch (const YAML::Exception&) {
      problem(line_of(v), "field '" + section + "." + key + "' has the wrong type");
    }
  }

  template <class T>
  void list(const YAML::Node& s, const std::string& section, const std::string& key, std::vector<T>& out,
            bool required, int section_line) {
    if (!s.IsDefined()) {
      if (required) problem(section_line, "missing field '" + section + "." + key + "'");
      return;
    }
    const YAML::Node v = s[key];
    if (!v) {
      if (required) problem(line_of(s), "missing field '" + section + "." + key + "'");
      return;
    }
    if (!v.IsSequence()) {
      problem(line_of(v), "field '" + section + "." + key + "' must be a list");
      return;
    }
    try {
      out = v.as<std::vector<T>>();
    } catch (const YAML::Exception&) {
      problem(line_of(v), "field '" + section + "." + key + "' has entries of the wrong type");
    }
  }

  // Range check; absent fields are reported once, by scalar() or list().
  void check(bool ok, const YAML::Node& s, const std::string& key, const std::string& what) {
    if (ok || !s.IsDefined()) return;
    const YAML::Node v = s[key];
    if (v) problem(line_of(v), what);
  }

  void finish() const {
    if (problems_.empty()) return;
    std::string msg = "invalid configuration";
    for (const std::string& p : problems_) msg += "\n  " + p;
    throw ConfigError(msg);
  }

 private:
  std::string origin_;
  std::vector<std::string> problems_;
};

void put(std::ostringstream& out, const std::string& key, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out << key << '=' << buf << '\n';
}

template <class T>
void put_list(std::ostringstream& out, const std::string& key, const std::vector<T>& v) {
  out << key << '=';
  for (std::size_t i = 0; i < v.size(); ++i) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", static_cast<double>(v[i]));
    out << (i ? "," : "") << buf;
  }
  out << '\n';
}

}  // namespace

double ExperimentConfig::carrier() const { return 2.0 * std::numbers::pi * spectral::kSpeedOfLight / device.wavelength; }
double ExperimentConfig::kappa_loss() const { return carrier() / (2.0 * dynamics.quality_loss); }
double ExperimentConfig::kappa_idler() const { return carrier() / (2.0 * dynamics.quality_idler); }
double ExperimentConfig::kappa_pump() const { return carrier() / (2.0 * dynamics.quality_pump); }

ExperimentConfig parse_config(const std::string& text, const std::string& origin) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    std::ostringstream msg;
    msg << "invalid configuration\n  " << origin << ':' << e.mark.line + 1 << ": " << e.msg;
    throw ConfigError(msg.str());
  }
  Reader r(origin);
  ExperimentConfig c;
  c.origin = origin;
  if (root.IsNull() || !root.IsDefined()) root = YAML::Node(YAML::NodeType::Map);
  if (!root.IsMap()) {
    r.problem(1, "top level must be a mapping");
    r.finish();
  }
  for (const auto& kv : root) {
    const std::string key = kv.first.as<std::string>();
    static const std::set<std::string> sections = {"device", "dynamics", "protocol", "run", "sweep"};
    if (sections.count(key) == 0) r.problem(Reader::line_of(kv.first), "unknown section '" + key + "'");
  }

  const YAML::Node dev = r.section(root, "device", true,
                                   {"circumference", "n_eff_re", "n_eff_im", "n_group", "nu_squared",
                                    "nu_aux_squared", "wavelength"});
  const int dl = dev.IsDefined() ? Reader::line_of(dev) : 1;
  r.scalar(dev, "device", "circumference", c.device.ring_length, true, dl);
  r.scalar(dev, "device", "n_eff_re", c.device.index_real, true, dl);
  r.scalar(dev, "device", "n_eff_im", c.device.index_imag, true, dl);
  r.scalar(dev, "device", "n_group", c.device.group_index, true, dl);
  r.scalar(dev, "device", "nu_squared", c.device.filter_through_sq, true, dl);
  r.scalar(dev, "device", "nu_aux_squared", c.device.aux_through_sq, true, dl);
  r.scalar(dev, "device", "wavelength", c.device.wavelength, true, dl);
  r.check(c.device.ring_length > 0.0, dev, "circumference", "device.circumference must be > 0");
  r.check(c.device.index_imag >= 0.0, dev, "n_eff_im", "device.n_eff_im must be >= 0");
  r.check(c.device.group_index > 0.0, dev, "n_group", "device.n_group must be > 0");
  r.check(c.device.filter_through_sq > 0.0 && c.device.filter_through_sq < 1.0, dev, "nu_squared",
          "device.nu_squared must lie in (0, 1)");
  r.check(c.device.aux_through_sq > 0.0 && c.device.aux_through_sq <= 1.0, dev, "nu_aux_squared",
          "device.nu_aux_squared must lie in (0, 1]");
  r.check(c.device.wavelength > 0.0, dev, "wavelength", "device.wavelength must be > 0");

  DynamicsSection& d = c.dynamics;
  const YAML::Node dyn = r.section(root, "dynamics", true,
                                   {"quality_loss", "quality_idler", "quality_pump", "detuning_signal",
                                    "detuning_idler", "decision_lag", "response_time", "pump_width",
                                    "release_width", "kappa_max"});
  const int yl = dyn.IsDefined() ? Reader::line_of(dyn) : 1;
  r.scalar(dyn, "dynamics", "quality_loss", d.quality_loss, true, yl);
  r.scalar(dyn, "dynamics", "quality_idler", d.quality_idler, true, yl);
  r.scalar(dyn, "dynamics", "quality_pump", d.quality_pump, true, yl);
  r.scalar(dyn, "dynamics", "detuning_signal", d.detuning_signal, true, yl);
  r.scalar(dyn, "dynamics", "detuning_idler", d.detuning_idler, true, yl);
  r.scalar(dyn, "dynamics", "decision_lag", d.decision_lag, true, yl);
  r.scalar(dyn, "dynamics", "response_time", d.response_time, true, yl);
  r.scalar(dyn, "dynamics", "pump_width", d.pump_width, true, yl);
  r.scalar(dyn, "dynamics", "release_width", d.release_width, true, yl);
  r.scalar(dyn, "dynamics", "kappa_max", d.kappa_max, false, yl);
  r.check(d.quality_loss > 0.0, dyn, "quality_loss", "dynamics.quality_loss must be > 0");
  r.check(d.quality_idler > 0.0, dyn, "quality_idler", "dynamics.quality_idler must be > 0");
  r.check(d.quality_pump > 0.0, dyn, "quality_pump", "dynamics.quality_pump must be > 0");
  r.check(d.decision_lag >= 0.0, dyn, "decision_lag", "dynamics.decision_lag must be >= 0");
  r.check(d.response_time > 0.0, dyn, "response_time", "dynamics.response_time must be > 0");
  r.check(d.pump_width > 0.0, dyn, "pump_width", "dynamics.pump_width must be > 0");
  r.check(d.release_width > 0.0, dyn, "release_width", "dynamics.release_width must be > 0");
  r.check(d.kappa_max >= 0.0, dyn, "kappa_max", "dynamics.kappa_max must be >= 0");
  if (d.kappa_max > 0.0 && d.quality_idler > 0.0 && c.device.wavelength > 0.0) {
    r.check(d.kappa_max <= c.kappa_idler() * (1.0 + 1e-12), dyn, "kappa_max",
            "dynamics.kappa_max must not exceed kappa_i");
  }

  ProtocolSection& p = c.protocol;
  p.release_caps = {3};
  p.evacuation_floors = {0.0, 0.5, 0.8, 0.9, 0.95};
  p.sweeps = 3;
  p.pump_grid = dynamics::pump_grid();
  const YAML::Node pro = r.section(root, "protocol", true,
                                   {"efficiency", "fidelity_threshold", "g2_threshold", "max_bins",
                                    "bin_durations", "duration_count", "release_caps", "evacuation_floors",
                                    "sweeps", "pump_grid"});
  const int pl = pro.IsDefined() ? Reader::line_of(pro) : 1;
  r.scalar(pro, "protocol", "efficiency", p.efficiency, true, pl);
  r.scalar(pro, "protocol", "fidelity_threshold", p.fidelity_threshold, true, pl);
  r.scalar(pro, "protocol", "g2_threshold", p.g2_threshold, true, pl);
  r.scalar(pro, "protocol", "max_bins", p.max_bins, true, pl);
  const bool explicit_grid = pro.IsDefined() && pro["bin_durations"];
  r.list(pro, "protocol", "bin_durations", p.bin_durations, false, pl);
  r.scalar(pro, "protocol", "duration_count", p.duration_count, !explicit_grid, pl);
  r.list(pro, "protocol", "release_caps", p.release_caps, false, pl);
  r.list(pro, "protocol", "evacuation_floors", p.evacuation_floors, false, pl);
  r.scalar(pro, "protocol", "sweeps", p.sweeps, false, pl);
  r.list(pro, "protocol", "pump_grid", p.pump_grid, false, pl);
  r.check(p.efficiency >= 0.0 && p.efficiency <= 1.0, pro, "efficiency", "protocol.efficiency must lie in [0, 1]");
  r.check(p.fidelity_threshold > 0.0, pro, "fidelity_threshold", "protocol.fidelity_threshold must be > 0");
  r.check(p.g2_threshold > 0.0, pro, "g2_threshold", "protocol.g2_threshold must be > 0");
  r.check(p.max_bins >= 1, pro, "max_bins", "protocol.max_bins must be >= 1");
  if (!explicit_grid) r.check(p.duration_count >= 1, pro, "duration_count", "protocol.duration_count must be >= 1");
  for (double t : p.bin_durations) {
    r.check(t > d.decision_lag, pro, "bin_durations", "protocol.bin_durations must exceed dynamics.decision_lag");
  }
  r.check(!p.release_caps.empty(), pro, "release_caps", "protocol.release_caps must not be empty");
  for (int cap : p.release_caps) r.check(cap >= 2, pro, "release_caps", "protocol.release_caps entries must be >= 2");
  r.check(p.sweeps >= 1, pro, "sweeps", "protocol.sweeps must be >= 1");
  r.check(!p.pump_grid.empty() && std::is_sorted(p.pump_grid.begin(), p.pump_grid.end()), pro, "pump_grid",
          "protocol.pump_grid must be a non-empty ascending list");
  for (double g : p.pump_grid) {
    r.check(g > 0.0 && g < 1.0, pro, "pump_grid", "protocol.pump_grid entries must lie in (0, 1)");
  }

  RunSection& run = c.run;
  const YAML::Node rn = r.section(root, "run", true, {"trajectories", "seed", "output", "jobs", "cache_dir"});
  const int rl = rn.IsDefined() ? Reader::line_of(rn) : 1;
  r.scalar(rn, "run", "trajectories", run.trajectories, true, rl);
  r.scalar(rn, "run", "seed", run.seed, true, rl);
  r.scalar(rn, "run", "output", run.output, true, rl);
  r.scalar(rn, "run", "jobs", run.jobs, false, rl);
  r.scalar(rn, "run", "cache_dir", run.cache_dir, false, rl);
  r.check(run.trajectories >= 1, rn, "trajectories", "run.trajectories must be >= 1");
  r.check(run.jobs >= 1, rn, "jobs", "run.jobs must be >= 1");

  SweepSection& sw = c.sweep;
  const YAML::Node sn =
      r.section(root, "sweep", false, {"efficiencies", "fidelity_thresholds", "g2_thresholds", "quality_loss"});
  r.list(sn, "sweep", "efficiencies", sw.efficiencies, false, 1);
  r.list(sn, "sweep", "fidelity_thresholds", sw.fidelity_thresholds, false, 1);
  r.list(sn, "sweep", "g2_thresholds", sw.g2_thresholds, false, 1);
  r.list(sn, "sweep", "quality_loss", sw.quality_loss, false, 1);
  for (double e : sw.efficiencies) r.check(e >= 0.0 && e <= 1.0, sn, "efficiencies", "sweep.efficiencies must lie in [0, 1]");
  for (double f : sw.fidelity_thresholds) {
    r.check(f > 0.0 && f <= 1.0, sn, "fidelity_thresholds", "sweep.fidelity_thresholds must lie in (0, 1]");
  }
  for (double g : sw.g2_thresholds) r.check(g > 0.0, sn, "g2_thresholds", "sweep.g2_thresholds must be > 0");
  for (double q : sw.quality_loss) r.check(q > 0.0, sn, "quality_loss", "sweep.quality_loss must be > 0");

  r.finish();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read configuration file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path.filename().string());
}

std::string canonical_text(const ExperimentConfig& c) {
  std::ostringstream o;
  put(o, "device.circumference", c.device.ring_length);
  put(o, "device.n_eff_re", c.device.index_real);
  put(o, "device.n_eff_im", c.device.index_imag);
  put(o, "device.n_group", c.device.group_index);
  put(o, "device.nu_squared", c.device.filter_through_sq);
  put(o, "device.nu_aux_squared", c.device.aux_through_sq);
  put(o, "device.wavelength", c.device.wavelength);
  const DynamicsSection& d = c.dynamics;
  put(o, "dynamics.quality_loss", d.quality_loss);
  put(o, "dynamics.quality_idler", d.quality_idler);
  put(o, "dynamics.quality_pump", d.quality_pump);
  put(o, "dynamics.detuning_signal", d.detuning_signal);
  put(o, "dynamics.detuning_idler", d.detuning_idler);
  put(o, "dynamics.decision_lag", d.decision_lag);
  put(o, "dynamics.response_time", d.response_time);
  put(o, "dynamics.pump_width", d.pump_width);
  put(o, "dynamics.release_width", d.release_width);
  put(o, "dynamics.kappa_max", d.kappa_max);
  const ProtocolSection& p = c.protocol;
  put(o, "protocol.efficiency", p.efficiency);
  put(o, "protocol.fidelity_threshold", p.fidelity_threshold);
  put(o, "protocol.g2_threshold", p.g2_threshold);
  put(o, "protocol.max_bins", p.max_bins);
  put_list(o, "protocol.bin_durations", p.bin_durations);
  put(o, "protocol.duration_count", p.duration_count);
  put_list(o, "protocol.release_caps", p.release_caps);
  put_list(o, "protocol.evacuation_floors", p.evacuation_floors);
  put(o, "protocol.sweeps", p.sweeps);
  put_list(o, "protocol.pump_grid", p.pump_grid);
  put(o, "run.trajectories", c.run.trajectories);
  put_list(o, "sweep.efficiencies", c.sweep.efficiencies);
  put_list(o, "sweep.fidelity_thresholds", c.sweep.fidelity_thresholds);
  put_list(o, "sweep.g2_thresholds", c.sweep.g2_thresholds);
  put_list(o, "sweep.quality_loss", c.sweep.quality_loss);
  return o.str();
}

std::uint64_t content_hash(const ExperimentConfig& config) { return label_id(canonical_text(config)); }

dynamics::DynamicsParams dynamics_params(const ExperimentConfig& c) {
  dynamics::DynamicsParams p;
  p.kappa_idler = c.kappa_idler();
  p.kappa_loss = c.kappa_loss();
  p.pump.kappa_pump = c.kappa_pump();
  p.pump.width = c.dynamics.pump_width;
  p.detuning_signal = c.dynamics.detuning_signal * c.kappa_pump();
  p.detuning_idler = c.dynamics.detuning_idler * c.kappa_pump();
  return p;
}

dynamics::ReleaseSettings release_settings(const ExperimentConfig& c) {
  dynamics::ReleaseSettings s;
  s.response_rate = 1.0 / c.dynamics.response_time;
  s.width = c.dynamics.release_width;
  s.kappa_max = c.dynamics.kappa_max > 0.0 ? c.dynamics.kappa_max : c.kappa_idler();
  return s;
}

protocol::ProtocolConfig base_protocol(const ExperimentConfig& c) {
  protocol::ProtocolConfig p;
  p.timing.decision_lag = c.dynamics.decision_lag;
  p.efficiency = c.protocol.efficiency;
  p.thresholds = {c.protocol.fidelity_threshold, c.protocol.g2_threshold};
  p.release_cap = c.protocol.release_caps.front();
  p.kappa_loss = c.kappa_loss();
  return p;
}

protocol::SearchSpace search_space(const ExperimentConfig& c) {
  protocol::SearchSpace s;
  s.max_bins = c.protocol.max_bins;
  s.floors = c.protocol.evacuation_floors;
  s.release_caps = c.protocol.release_caps;
  s.sweeps = c.protocol.sweeps;
  return s;
}

std::vector<double> bin_durations(const ExperimentConfig& c) {
  if (!c.protocol.bin_durations.empty()) return c.protocol.bin_durations;
  return protocol::bin_duration_grid(c.kappa_idler(), c.protocol.duration_count);
}

}  // namespace tsmux::config
