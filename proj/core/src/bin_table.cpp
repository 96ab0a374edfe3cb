#include "tsmux/bin_table.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>
#include <thread>
#include <tuple>

#include "tsmux/errors.hpp"
#include "tsmux/seeding.hpp"

namespace tsmux::dynamics {

void BinTiming::validate() const {
  if (!(duration > 0.0)) throw ConfigError("bin duration must be > 0");
  if (decision_lag < 0.0 || decision_lag >= duration) {
    throw ConfigError("decision lag must lie in [0, bin duration)");
  }
}

std::vector<double> pump_grid() {
  std::vector<double> grid = {0.001, 0.002, 0.005, 0.01, 0.02, 0.035};
  for (int k = 0; k <= 18; ++k) grid.push_back((50.0 + 25.0 * k) / 1000.0);
  for (double p : {0.55, 0.60, 0.65, 0.70}) grid.push_back(p);
  return grid;
}

int initial_cutoff(double pair_probability, int initial_signal) {
  int tail = 2;
  if (pair_probability > 0.0) {
    tail = static_cast<int>(std::ceil(std::log(1e-5) / std::log(std::min(pair_probability, 0.95)))) + 2;
  }
  // Seeded bins are amplified: the photon-number tail carries an extra n^n0 prefactor.
  return std::max(6, initial_signal + tail + 3 * initial_signal);
}

DynamicsParams with_scale(DynamicsParams params, double scale) {
  params.pump.scale = scale;
  params.pump = place_pump(params.pump, 0.0);
  return params;
}

double pair_probability(double pump_scale, const DynamicsParams& params, const BinTiming& timing, int cutoff) {
  if (pump_scale == 0.0) return 0.0;
  const DynamicsParams p = with_scale(params, pump_scale);
  const TrajectoryEngine engine(TwoModeState::fock(cutoff, 0, 0), 0.0, timing.duration, timing.split(), p);
  return engine.no_jump_pair_probability();
}

double calibrate_pump(double target, const DynamicsParams& params, const BinTiming& timing) {
  if (target < 0.0 || target >= 1.0) throw NumericalError("calibrate_pump: target must lie in [0, 1)");
  if (target == 0.0) return 0.0;
  timing.validate();
  const int cutoff = initial_cutoff(target, 0);
  auto p_of = [&](double x) { return pair_probability(x, params, timing, cutoff); };
  const double kappa = params.pump.kappa_pump;
  double lo = 0.0;
  double hi = 1e-3 * kappa;
  int doublings = 0;
  while (p_of(hi) < target) {
    lo = hi;
    hi *= 2.0;
    if (++doublings > 60) {
      std::ostringstream msg;
      msg << "calibrate_pump: pair probability " << target << " not reachable";
      throw NumericalError(msg.str());
    }
  }
  for (int it = 0; it < 100 && hi - lo > 1e-12 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (p_of(mid) < target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

BinOutcomeTable::BinOutcomeTable(double pump_probability, int initial_signal, BinTiming timing)
    : pump_probability_(pump_probability), initial_signal_(initial_signal), timing_(timing) {}

void BinOutcomeTable::add(int signal, int idler_pre, int idler_post, double weight) {
  entries_.push_back({signal, idler_pre, idler_post, weight});
  total_ += weight;
}

void BinOutcomeTable::finalize() {
  std::sort(entries_.begin(), entries_.end(), [](const Entry& a, const Entry& b) {
    return std::tie(a.signal, a.idler_pre, a.idler_post) < std::tie(b.signal, b.idler_pre, b.idler_post);
  });
  std::vector<Entry> merged;
  for (const Entry& e : entries_) {
    if (!merged.empty() && merged.back().signal == e.signal && merged.back().idler_pre == e.idler_pre &&
        merged.back().idler_post == e.idler_post) {
      merged.back().weight += e.weight;
    } else {
      merged.push_back(e);
    }
  }
  entries_ = std::move(merged);
}

double BinOutcomeTable::probability(int signal, int idler_pre, int idler_post) const {
  for (const Entry& e : entries_) {
    if (e.signal == signal && e.idler_pre == idler_pre && e.idler_post == idler_post) return e.weight / total_;
  }
  return 0.0;
}

std::vector<double> BinOutcomeTable::signal_marginal() const {
  std::vector<double> m;
  for (const Entry& e : entries_) {
    if (static_cast<std::size_t>(e.signal) >= m.size()) m.resize(static_cast<std::size_t>(e.signal) + 1, 0.0);
    m[static_cast<std::size_t>(e.signal)] += e.weight / total_;
  }
  return m;
}

namespace {

struct Outcome {
  int signal = 0;
  int pre = 0;
  int post = 0;
  double edge = 0.0;
  double idler = 0.0;
};

std::vector<Outcome> run_batch(const TrajectoryEngine& engine, const TableRequest& req, double end) {
  std::vector<Outcome> out(static_cast<std::size_t>(req.trajectories));
  auto work = [&](int begin, int stop) {
    for (int k = begin; k < stop; ++k) {
      const TrajectoryRecord r = engine.run(derive_seed(req.master_seed, req.stream, static_cast<std::uint64_t>(k)));
      out[static_cast<std::size_t>(k)] = {r.sampled_signal, r.idler_before_split(), r.idler_after_split(end),
                                          r.max_edge_population, r.final_state.mean_idler()};
    }
  };
  const int jobs = std::max(1, std::min(req.jobs, req.trajectories));
  if (jobs == 1) {
    work(0, req.trajectories);
    return out;
  }
  std::vector<std::thread> pool;
  const int chunk = (req.trajectories + jobs - 1) / jobs;
  for (int j = 0; j < jobs; ++j) {
    const int begin = j * chunk;
    const int stop = std::min(req.trajectories, begin + chunk);
    if (begin < stop) pool.emplace_back(work, begin, stop);
  }
  for (auto& t : pool) t.join();
  return out;
}

}  // namespace

BinOutcomeTable estimate_bin_table(const TableRequest& req, const DynamicsParams& params, const BinTiming& timing) {
  timing.validate();
  if (req.initial_signal < 0) throw std::invalid_argument("estimate_bin_table: negative initial signal");
  if (req.trajectories <= 0) throw std::invalid_argument("estimate_bin_table: need at least one trajectory");
  const double scale = req.pump_scale >= 0.0 ? req.pump_scale : calibrate_pump(req.pump_probability, params, timing);
  const DynamicsParams p = with_scale(params, scale);

  int cutoff = initial_cutoff(req.pump_probability, req.initial_signal);
  for (;;) {
    const TrajectoryEngine engine(TwoModeState::fock(cutoff, req.initial_signal, 0), 0.0, timing.duration,
                                  timing.split(), p);
    const std::vector<Outcome> outcomes = run_batch(engine, req, timing.duration);
    double edge = 0.0;
    double idler = 0.0;
    for (const Outcome& o : outcomes) {
      edge += o.edge;
      idler += o.idler;
    }
    edge /= req.trajectories;
    idler /= req.trajectories;
    if (edge > req.truncation_limit) {
      if (cutoff >= req.max_cutoff) {
        std::ostringstream msg;
        msg << "bin table p=" << req.pump_probability << ": cutoff shell population " << edge << " at cutoff "
            << cutoff;
        throw TruncationError(msg.str());
      }
      cutoff = std::min(req.max_cutoff, cutoff + 6);
      continue;
    }
    BinOutcomeTable table(req.pump_probability, req.initial_signal, timing);
    for (const Outcome& o : outcomes) table.add(o.signal, o.pre, o.post, 1.0);
    table.finalize();
    table.cutoff = cutoff;
    table.pump_scale = scale;
    table.edge_population = edge;
    table.mean_idler_at_end = idler;
    return table;
  }
}

const BinOutcomeTable& PumpTableSet::table(std::size_t setting, int initial_signal) const {
  if (setting >= tables.size() || initial_signal < 0 || initial_signal > 2) {
    throw std::out_of_range("PumpTableSet: no table for this setting / initial signal");
  }
  return tables[setting][static_cast<std::size_t>(initial_signal)];
}

std::size_t PumpTableSet::index_of(double p) const {
  for (std::size_t i = 0; i < settings.size(); ++i) {
    if (std::abs(settings[i] - p) <= 1e-12) return i;
  }
  std::ostringstream msg;
  msg << "no pump table for setting " << p;
  throw std::out_of_range(msg.str());
}

std::uint64_t table_stream(const BinTiming& timing, double pump_probability, int initial_signal) {
  return mix64(std::bit_cast<std::uint64_t>(timing.duration)) ^
         mix64(std::bit_cast<std::uint64_t>(pump_probability) + static_cast<std::uint64_t>(initial_signal));
}

LazyTables::LazyTables(DynamicsParams params, BinTiming timing, int trajectories, std::uint64_t master_seed, int jobs,
                       Builder builder)
    : params_(params),
      timing_(timing),
      trajectories_(trajectories),
      seed_(master_seed),
      jobs_(jobs),
      builder_(std::move(builder)) {
  timing_.validate();
  if (!builder_) {
    builder_ = [this](TableRequest r) {
      r.pump_scale = pump_scale(r.pump_probability);
      return estimate_bin_table(r, params_, timing_);
    };
  }
}

double LazyTables::pump_scale(double pump_probability) {
  {
    std::lock_guard lock(mutex_);
    auto it = scales_.find(pump_probability);
    if (it != scales_.end()) return it->second;
  }
  const double scale = calibrate_pump(pump_probability, params_, timing_);
  std::lock_guard lock(mutex_);
  scales_.emplace(pump_probability, scale);
  return scale;
}

TableRequest LazyTables::request(double pump_probability, int initial_signal) const {
  TableRequest req;
  req.pump_probability = pump_probability;
  req.initial_signal = initial_signal;
  req.trajectories = trajectories_;
  req.master_seed = seed_;
  req.stream = table_stream(timing_, pump_probability, initial_signal);
  req.jobs = jobs_;
  return req;
}

const BinOutcomeTable& LazyTables::get(double pump_probability, int initial_signal) {
  const auto key = std::make_pair(pump_probability, initial_signal);
  {
    std::lock_guard lock(mutex_);
    auto it = tables_.find(key);
    if (it != tables_.end()) return *it->second;
  }
  auto table = std::make_unique<BinOutcomeTable>(builder_(request(pump_probability, initial_signal)));
  std::lock_guard lock(mutex_);
  auto [it, inserted] = tables_.emplace(key, std::move(table));
  return *it->second;
}

void LazyTables::insert(BinOutcomeTable table) {
  std::lock_guard lock(mutex_);
  const auto key = std::make_pair(table.pump_probability(), table.initial_signal());
  tables_[key] = std::make_unique<BinOutcomeTable>(std::move(table));
}

std::vector<const BinOutcomeTable*> LazyTables::tables() const {
  std::lock_guard lock(mutex_);
  std::vector<const BinOutcomeTable*> out;
  for (const auto& [key, t] : tables_) out.push_back(t.get());
  return out;
}

PumpTableSet build_pump_tables(const std::vector<double>& settings, const DynamicsParams& params,
                               const BinTiming& timing, int trajectories, std::uint64_t master_seed, int jobs) {
  PumpTableSet set;
  set.timing = timing;
  set.settings = settings;
  for (double p : settings) {
    const double scale = calibrate_pump(p, params, timing);
    std::array<BinOutcomeTable, 3> row;
    for (int n0 = 0; n0 < 3; ++n0) {
      TableRequest req;
      req.pump_probability = p;
      req.initial_signal = n0;
      req.trajectories = trajectories;
      req.master_seed = master_seed;
      req.stream = table_stream(timing, p, n0);
      req.jobs = jobs;
      req.pump_scale = scale;
      row[static_cast<std::size_t>(n0)] = estimate_bin_table(req, params, timing);
    }
    set.tables.push_back(std::move(row));
  }
  return set;
}

}  // namespace tsmux::dynamics
