#include "tsmux/experiment.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tsmux/cache.hpp"
#include "tsmux/errors.hpp"
#include "tsmux/seeding.hpp"
#include "tsmux/verification.hpp"

namespace tsmux::experiment {

namespace fs = std::filesystem;
using nlohmann::json;

void Session::note(const std::string& line) const {
  if (log != nullptr) *log << line << '\n' << std::flush;
}

Session open_session(const Options& options, std::ostream* log) {
  if (options.config_path.empty()) throw ConfigError("no configuration file given (use --config)");
  Session s;
  s.config = config::load_config(options.config_path);
  s.config_path = options.config_path;
  s.seed = options.seed ? *options.seed : s.config.run.seed;
  s.output = options.output.empty() ? fs::path(s.config.run.output) : fs::path(options.output);
  if (options.jobs < 0) throw ConfigError("--jobs must be >= 1");
  s.jobs = options.jobs > 0 ? options.jobs : s.config.run.jobs;
  s.cache_dir = cache::resolve_cache_dir(options.cache_dir, s.config.run.cache_dir, s.output / "cache");
  s.log = log;
  return s;
}

std::string format_number(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", value);
  return buf;
}

Csv::Csv(std::vector<std::string> columns) : columns_(std::move(columns)) {}

Csv& Csv::row() {
  rows_.emplace_back();
  return *this;
}

Csv& Csv::cell(double value) { return cell(format_number(value)); }

Csv& Csv::cell(long long value) { return cell(std::to_string(value)); }

Csv& Csv::cell(const std::string& text) {
  if (rows_.empty()) rows_.emplace_back();
  rows_.back().push_back(text);
  return *this;
}

std::string Csv::text() const {
  std::ostringstream out;
  for (std::size_t i = 0; i < columns_.size(); ++i) out << (i ? "," : "") << columns_[i];
  out << '\n';
  for (const auto& r : rows_) {
    for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
    out << '\n';
  }
  return out.str();
}

fs::path write_output(const Session& session, const fs::path& relative, const std::string& contents) {
  cache::write_atomic(session.output / relative, contents);
  return relative;
}

void write_manifest(const Session& session, const std::string& command, const Artifacts& artifacts,
                    double seconds) {
  json m;
  m["command"] = command;
  m["code_version"] = kCodeVersion;
  m["config"] = session.config_path;
  m["config_hash"] = cache::hex(config::content_hash(session.config));
  m["seed"] = session.seed;
  m["cache_dir"] = session.cache_dir.string();
  json files = json::array();
  for (const fs::path& a : artifacts) {
    std::ifstream in(session.output / a, std::ios::binary);
    std::ostringstream text;
    text << in.rdbuf();
    files.push_back({{"path", a.generic_string()}, {"content_hash", cache::hex(label_id(text.str()))}});
  }
  m["outputs"] = files;
  m["seconds"] = seconds;
  cache::write_atomic(session.output / ("manifest-" + command + ".json"), m.dump(2) + "\n");
}

Workbench::Workbench(const Session& session, TableMode mode) : session_(session), mode_(mode) {}

std::shared_ptr<dynamics::LazyTables> Workbench::tables(const config::ExperimentConfig& cfg, double duration) {
  const dynamics::DynamicsParams params = config::dynamics_params(cfg);
  const Key key{params.kappa_loss, duration};
  std::lock_guard lock(mutex_);
  if (auto it = tables_.find(key); it != tables_.end()) return it->second;

  const dynamics::BinTiming timing{duration, cfg.dynamics.decision_lag};
  const cache::TableCache store(session_.cache_dir);
  auto self = std::make_shared<dynamics::LazyTables*>(nullptr);
  const TableMode mode = mode_;
  const std::string config_path = session_.config_path;
  const Session* session = &session_;
  auto builder = [=](dynamics::TableRequest r) {
    const std::uint64_t k =
        cache::table_key(params, timing, r.pump_probability, r.initial_signal, r.trajectories, r.master_seed);
    if (auto hit = store.load(k)) return *hit;
    if (mode == TableMode::cache_only) {
      std::ostringstream msg;
      msg << "no cached pump table for tau_bin = " << format_number(timing.duration) << " s, p = "
          << format_number(r.pump_probability) << ", n_s = " << r.initial_signal << " in " << store.directory().string()
          << "; run `tsmux pump-table --config " << config_path << "` first";
      throw CacheError(msg.str());
    }
    r.pump_scale = (*self)->pump_scale(r.pump_probability);
    const auto t0 = std::chrono::steady_clock::now();
    dynamics::BinOutcomeTable t = dynamics::estimate_bin_table(r, params, timing);
    store.store(k, t);
    std::ostringstream msg;
    msg << "  table tau_bin=" << format_number(timing.duration) << " p=" << format_number(r.pump_probability)
        << " n_s=" << r.initial_signal << " cutoff=" << t.cutoff << " ("
        << format_number(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()) << " s)";
    session->note(msg.str());
    return t;
  };
  auto lazy = std::make_shared<dynamics::LazyTables>(params, timing, cfg.run.trajectories, session_.seed,
                                                     session_.jobs, builder);
  *self = lazy.get();
  tables_.emplace(key, lazy);
  return lazy;
}

protocol::Evaluator Workbench::evaluator(const config::ExperimentConfig& cfg, double duration) {
  auto lazy = tables(cfg, duration);
  const double kappa_loss = cfg.kappa_loss();
  std::shared_ptr<std::map<double, dynamics::ReleaseStages>> memo;
  {
    std::lock_guard lock(mutex_);
    auto& slot = releases_[{kappa_loss, duration}];
    if (!slot) slot = std::make_shared<std::map<double, dynamics::ReleaseStages>>();
    memo = slot;
  }
  const dynamics::BinTiming timing{duration, cfg.dynamics.decision_lag};
  const dynamics::ReleaseSettings settings = config::release_settings(cfg);
  auto guard = std::make_shared<std::mutex>();
  protocol::EvaluationContext ctx;
  ctx.pump_grid = cfg.protocol.pump_grid;
  ctx.tables = [lazy](double p, int n0) -> const dynamics::BinOutcomeTable& { return lazy->get(p, n0); };
  ctx.release = [=](double pc) {
    {
      std::lock_guard lock(*guard);
      if (auto it = memo->find(pc); it != memo->end()) return it->second;
    }
    const dynamics::ReleaseProfile profile = dynamics::calibrate_release(pc, timing, settings, kappa_loss);
    const dynamics::ReleaseStages s = dynamics::release_stages(profile, timing, kappa_loss);
    std::lock_guard lock(*guard);
    memo->emplace(pc, s);
    return s;
  };
  return protocol::Evaluator(std::move(ctx));
}

protocol::OptimizationResult Workbench::optimize(const config::ExperimentConfig& cfg) {
  const protocol::ProtocolConfig base = config::base_protocol(cfg);
  const protocol::SearchSpace space = config::search_space(cfg);
  const Session* s = &session_;
  auto progress = [s](double duration, int bins, double success) {
    s->note("  tau_bin=" + format_number(duration) + " M=" + std::to_string(bins) + " P=" + format_number(success));
  };
  return protocol::optimize(
      base, config::bin_durations(cfg), space, [&](double d) { return evaluator(cfg, d); }, progress);
}

Artifacts run_pump_table(const Session& session) {
  Workbench bench(session, TableMode::build);
  Csv csv({"bin_duration[s]", "pump_probability[1]", "initial_signal[1]", "trajectories[1]", "cutoff[1]",
           "pump_scale[rad/s]", "edge_population[1]", "idler_at_end[1]", "signal_0[1]", "signal_1[1]",
           "signal_2[1]"});
  for (double d : config::bin_durations(session.config)) {
    auto lazy = bench.tables(session.config, d);
    for (double p : session.config.protocol.pump_grid) {
      for (int n0 = 0; n0 < 3; ++n0) {
        const dynamics::BinOutcomeTable& t = lazy->get(p, n0);
        const std::vector<double> m = t.signal_marginal();
        auto at = [&](std::size_t k) { return k < m.size() ? m[k] : 0.0; };
        csv.row()
            .cell(d)
            .cell(p)
            .cell(n0)
            .cell(static_cast<long long>(t.total()))
            .cell(t.cutoff)
            .cell(t.pump_scale)
            .cell(t.edge_population)
            .cell(t.mean_idler_at_end)
            .cell(at(0))
            .cell(at(1))
            .cell(at(2));
      }
    }
  }
  return {write_output(session, "pump_tables.csv", csv.text())};
}

Artifacts run_verify_dynamics(const Session& session, bool& passed) {
  const config::ExperimentConfig& c = session.config;
  const std::vector<double> durations = config::bin_durations(c);
  const double d = durations[durations.size() / 2];
  const dynamics::BinTiming timing{d, c.dynamics.decision_lag};
  Csv csv({"bin_duration[s]", "pump_probability[1]", "trajectories[1]", "cutoff[1]", "pair_estimate[1]",
           "pair_sigma[1]", "pair_oracle[1]", "signal_estimate[1]", "signal_sigma[1]", "signal_oracle[1]",
           "idler_estimate[1]", "idler_sigma[1]", "idler_oracle[1]", "max_z[1]", "pass[bool]"});
  passed = true;
  for (double p : {0.01, 0.05, 0.25}) {
    const dynamics::UnravelingCheck u =
        dynamics::check_unraveling(p, config::dynamics_params(c), timing, c.run.trajectories, session.seed, session.jobs);
    const double z = std::max({u.pair.z(), u.signal.z(), u.idler.z()});
    passed = passed && u.pass();
    session.note("  p=" + format_number(p) + " max z=" + format_number(z));
    csv.row()
        .cell(d)
        .cell(p)
        .cell(u.trajectories)
        .cell(u.cutoff)
        .cell(u.pair.estimate)
        .cell(u.pair.sigma)
        .cell(u.pair.oracle)
        .cell(u.signal.estimate)
        .cell(u.signal.sigma)
        .cell(u.signal.oracle)
        .cell(u.idler.estimate)
        .cell(u.idler.sigma)
        .cell(u.idler.oracle)
        .cell(z)
        .cell(std::string(u.pass() ? "true" : "false"));
  }
  return {write_output(session, "verify_dynamics.csv", csv.text())};
}

namespace {

std::string join(const std::vector<double>& v, std::size_t from = 0) {
  std::string out;
  for (std::size_t i = from; i < v.size(); ++i) out += (i > from ? ";" : "") + format_number(v[i]);
  return out;
}

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ";" : "") + std::to_string(v[i]);
  return out;
}

json policy_json(const protocol::BinOptimum& o) {
  json p;
  p["bins"] = o.bins;
  p["bin_duration"] = o.bin_duration;
  p["success"] = o.success;
  p["evacuation_bin"] = o.config.evacuation_bin;
  p["evacuation_floor"] = o.config.evacuation_floor;
  p["release_cap"] = o.config.release_cap;
  json samples = json::array();
  for (const protocol::PumpSample& s : o.config.pump_samples) samples.push_back({{"bin", s.bin}, {"p", s.probability}});
  p["pump_samples"] = samples;
  p["pump_schedule"] = std::vector<double>(o.evaluation.pump_schedule.begin() + 1, o.evaluation.pump_schedule.end());
  json release = json::array();
  for (std::size_t b = 1; b < o.evaluation.release_settings.size(); ++b) {
    for (const auto& [x, pc] : o.evaluation.release_settings[b]) {
      release.push_back({{"bin", b}, {"x_star", x}, {"p_c", pc}});
    }
  }
  p["release_settings"] = release;
  p["diagnostics"] = {{"accepted_mass", o.evaluation.accepted_mass},
                      {"evacuation_credit", o.evaluation.evacuation_credit},
                      {"evacuated_mass", o.evaluation.evacuated_mass},
                      {"judged_mass", o.evaluation.judged_mass},
                      {"discarded_mass", o.evaluation.discarded_mass},
                      {"truncated_mass", o.evaluation.truncated_mass}};
  return p;
}

}  // namespace

Artifacts write_optimization(const Session& session, const protocol::OptimizationResult& r, const fs::path& dir) {
  Csv best({"bins[1]", "bin_duration[s]", "success[1]", "evacuation_bin[1]", "evacuation_floor[1]", "release_cap[1]",
            "pump_schedule[1]", "accepted_mass[1]", "evacuation_credit[1]", "discarded_mass[1]", "truncated_mass[1]"});
  json policies = json::array();
  Csv sequences({"bins[1]", "history[list]", "stored_from[1]", "mass[1]", "fidelity[1]", "g2[1]", "accepted[bool]"});
  for (const protocol::BinOptimum& o : r.best) {
    best.row()
        .cell(o.bins)
        .cell(o.bin_duration)
        .cell(o.success)
        .cell(o.config.evacuation_bin)
        .cell(o.config.evacuation_floor)
        .cell(o.config.release_cap)
        .cell(join(o.evaluation.pump_schedule, 1))
        .cell(o.evaluation.accepted_mass)
        .cell(o.evaluation.evacuation_credit)
        .cell(o.evaluation.discarded_mass)
        .cell(o.evaluation.truncated_mass);
    policies.push_back(policy_json(o));
    for (const protocol::LeafRecord& l : o.evaluation.leaves) {
      sequences.row()
          .cell(o.bins)
          .cell(join_ints(l.history))
          .cell(l.stored_from)
          .cell(l.mass)
          .cell(l.fidelity)
          .cell(l.g2)
          .cell(std::string(l.accepted ? "true" : "false"));
    }
  }
  Csv runs({"bin_duration[s]", "bins[1]", "cycle_time[s]", "success[1]"});
  for (const protocol::DurationRun& run : r.runs) {
    for (const protocol::BinOptimum& o : run.per_bins) {
      runs.row().cell(run.bin_duration).cell(o.bins).cell(o.bins * run.bin_duration).cell(o.success);
    }
  }
  return {write_output(session, dir / "optimize.csv", best.text()),
          write_output(session, dir / "optimize_runs.csv", runs.text()),
          write_output(session, dir / "sequences.csv", sequences.text()),
          write_output(session, dir / "policy.json", policies.dump(2) + "\n")};
}

Artifacts run_optimize(const Session& session) {
  Workbench bench(session, TableMode::cache_only);
  return write_optimization(session, bench.optimize(session.config), "");
}

std::vector<SweepPoint> sweep_points(const Session& session, Workbench& bench, const std::vector<double>& quality_loss,
                                     const std::vector<double>& efficiencies,
                                     const std::vector<double>& fidelity_thresholds,
                                     const std::vector<double>& g2_thresholds, const std::vector<int>& release_caps) {
  std::vector<SweepPoint> out;
  for (double q : quality_loss) {
    for (double eta : efficiencies) {
      for (double f : fidelity_thresholds) {
        for (double g : g2_thresholds) {
          config::ExperimentConfig c = session.config;
          c.dynamics.quality_loss = q;
          c.protocol.efficiency = eta;
          c.protocol.fidelity_threshold = f;
          c.protocol.g2_threshold = g;
          c.protocol.release_caps = release_caps;
          const std::uint64_t key =
              label_id(config::canonical_text(c) + "seed=" + std::to_string(session.seed) + "\nsweep-point\n");
          const fs::path file = session.cache_dir / ("point-" + cache::hex(key) + ".json");
          SweepPoint pt{q, eta, f, g, release_caps, 0, 0.0, 0.0};
          bool loaded = false;
          if (std::ifstream in(file); in) {
            json j;
            try {
              in >> j;
            } catch (const json::exception&) {
              throw CacheError("cache: malformed sweep point " + file.string());
            }
            json body = j;
            body.erase("checksum");
            if (!j.contains("checksum") || j["checksum"] != cache::hex(label_id(body.dump()))) {
              throw CacheError("cache: checksum mismatch, the sweep point was modified (" + file.string() + ")");
            }
            pt.bins = j.at("bins").get<int>();
            pt.bin_duration = j.at("bin_duration").get<double>();
            pt.success = j.at("success").get<double>();
            loaded = true;
          }
          if (!loaded) {
            session.note("sweep point Q_L=" + format_number(q) + " eta=" + format_number(eta) +
                         " F_th=" + format_number(f) + " g2_th=" + format_number(g) + " N_ev=" + join_ints(release_caps));
            const protocol::OptimizationResult r = bench.optimize(c);
            const protocol::BinOptimum& best = r.best.back();
            pt.bins = best.bins;
            pt.bin_duration = best.bin_duration;
            pt.success = best.success;
            json j = {{"bins", pt.bins}, {"bin_duration", pt.bin_duration}, {"success", pt.success}};
            j["checksum"] = cache::hex(label_id(j.dump()));
            cache::write_atomic(file, j.dump() + "\n");
          }
          out.push_back(pt);
        }
      }
    }
  }
  return out;
}

namespace {

template <class T>
std::vector<T> or_base(const std::vector<T>& grid, T base) {
  return grid.empty() ? std::vector<T>{base} : grid;
}

}  // namespace

Csv sweep_table(const std::vector<SweepPoint>& points, double target) {
  Csv csv({"quality_loss[1]", "efficiency[1]", "fidelity_threshold[1]", "g2_threshold[1]", "release_caps[list]",
           "bins[1]", "bin_duration[s]", "success[1]", "success_minus_threshold[1]", "modes_needed[1]"});
  for (const SweepPoint& p : points) {
    std::string modes = "none";
    if (p.success > 0.0) modes = std::to_string(protocol::modes_needed(p.success, target));
    csv.row()
        .cell(p.quality_loss)
        .cell(p.efficiency)
        .cell(p.fidelity_threshold)
        .cell(p.g2_threshold)
        .cell(join_ints(p.release_caps))
        .cell(p.bins)
        .cell(p.bin_duration)
        .cell(p.success)
        .cell(p.success - p.fidelity_threshold)
        .cell(modes);
  }
  return csv;
}

Artifacts run_sweep(const Session& session) {
  const config::ExperimentConfig& c = session.config;
  Workbench bench(session, TableMode::build);
  const auto points =
      sweep_points(session, bench, or_base(c.sweep.quality_loss, c.dynamics.quality_loss),
                   or_base(c.sweep.efficiencies, c.protocol.efficiency),
                   or_base(c.sweep.fidelity_thresholds, c.protocol.fidelity_threshold),
                   or_base(c.sweep.g2_thresholds, c.protocol.g2_threshold), c.protocol.release_caps);
  return {write_output(session, "sweep.csv", sweep_table(points, 0.99).text())};
}

int run(const std::string& command, const Options& options, std::ostream& out, std::ostream& err) {
  static const std::vector<std::string> known = {"spectra", "pump-table", "verify-dynamics", "optimize", "sweep",
                                                 "figures"};
  if (std::find(known.begin(), known.end(), command) == known.end()) {
    err << "error: unknown command '" << command << "'\n";
    return 1;
  }
  try {
    const Session session = open_session(options, &err);
    const auto t0 = std::chrono::steady_clock::now();
    Artifacts artifacts;
    int status = 0;
    if (command == "spectra") {
      artifacts = run_spectra(session, "");
    } else if (command == "pump-table") {
      artifacts = run_pump_table(session);
    } else if (command == "verify-dynamics") {
      bool passed = true;
      artifacts = run_verify_dynamics(session, passed);
      if (!passed) {
        err << "error: trajectory averages deviate from the master equation by more than 3 sigma\n";
        status = 2;
      }
    } else if (command == "optimize") {
      artifacts = run_optimize(session);
    } else if (command == "sweep") {
      artifacts = run_sweep(session);
    } else {
      artifacts = run_figures(session, options.figures);
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_manifest(session, command, artifacts, seconds);
    for (const fs::path& a : artifacts) out << (session.output / a).string() << '\n';
    return status;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const CacheError& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace tsmux::experiment
