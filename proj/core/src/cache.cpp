#include "tsmux/cache.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <system_error>

#include "tsmux/errors.hpp"
#include "tsmux/seeding.hpp"

namespace tsmux::cache {

namespace {

constexpr const char* kMagic = "tsmux-table 1";

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

[[noreturn]] void fail(const std::string& what) { throw CacheError("cache: " + what); }

}  // namespace

std::string hex(std::uint64_t value) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

std::filesystem::path resolve_cache_dir(const std::string& flag, const std::string& configured,
                                        const std::filesystem::path& fallback) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv(kCacheDirVariable); env != nullptr && *env != '\0') return env;
  if (!configured.empty()) return configured;
  return fallback;
}

std::uint64_t table_key(const dynamics::DynamicsParams& p, const dynamics::BinTiming& timing, double pump_probability,
                        int initial_signal, int trajectories, std::uint64_t master_seed) {
  std::ostringstream s;
  s << kMagic << '|' << num(p.detuning_idler) << '|' << num(p.detuning_signal) << '|' << num(p.kappa_idler) << '|'
    << num(p.kappa_signal) << '|' << num(p.kappa_loss) << '|' << num(p.pump.width) << '|' << num(p.pump.kappa_pump)
    << '|' << num(p.quench_fraction) << '|' << num(p.steps_per_rate) << '|' << num(timing.duration) << '|'
    << num(timing.decision_lag) << '|' << num(pump_probability) << '|' << initial_signal << '|' << trajectories
    << '|' << master_seed;
  return label_id(s.str());
}

std::string serialize_table(const dynamics::BinOutcomeTable& t, std::uint64_t key) {
  std::ostringstream s;
  s << kMagic << '\n';
  s << "key " << hex(key) << '\n';
  s << "pump_probability " << num(t.pump_probability()) << '\n';
  s << "initial_signal " << t.initial_signal() << '\n';
  s << "duration " << num(t.timing().duration) << '\n';
  s << "decision_lag " << num(t.timing().decision_lag) << '\n';
  s << "cutoff " << t.cutoff << '\n';
  s << "pump_scale " << num(t.pump_scale) << '\n';
  s << "edge_population " << num(t.edge_population) << '\n';
  s << "mean_idler_at_end " << num(t.mean_idler_at_end) << '\n';
  s << "entries " << t.entries().size() << '\n';
  for (const auto& e : t.entries()) {
    s << e.signal << ' ' << e.idler_pre << ' ' << e.idler_post << ' ' << num(e.weight) << '\n';
  }
  const std::string body = s.str();
  return body + "checksum " + hex(label_id(body)) + '\n';
}

dynamics::BinOutcomeTable parse_table(const std::string& text, std::uint64_t expected_key) {
  const std::size_t tail = text.rfind("checksum ");
  if (tail == std::string::npos) fail("table file has no checksum");
  const std::string body = text.substr(0, tail);
  if (text.compare(tail, std::string::npos, "checksum " + hex(label_id(body)) + "\n") != 0) {
    fail("checksum mismatch, the cached table was modified");
  }

  std::istringstream in(body);
  std::string line;
  std::getline(in, line);
  if (line != kMagic) fail("unrecognised table format");
  auto field = [&](const char* name) {
    std::string k;
    std::string v;
    in >> k >> v;
    if (!in || k != name) fail(std::string("malformed table, expected '") + name + "'");
    return v;
  };
  if (field("key") != hex(expected_key)) fail("key mismatch, the cached table belongs to other parameters");
  const double p = std::stod(field("pump_probability"));
  const int n0 = std::stoi(field("initial_signal"));
  dynamics::BinTiming timing;
  timing.duration = std::stod(field("duration"));
  timing.decision_lag = std::stod(field("decision_lag"));
  dynamics::BinOutcomeTable t(p, n0, timing);
  t.cutoff = std::stoi(field("cutoff"));
  t.pump_scale = std::stod(field("pump_scale"));
  t.edge_population = std::stod(field("edge_population"));
  t.mean_idler_at_end = std::stod(field("mean_idler_at_end"));
  const long count = std::stol(field("entries"));
  for (long i = 0; i < count; ++i) {
    int s = 0;
    int a = 0;
    int b = 0;
    std::string w;
    in >> s >> a >> b >> w;
    if (!in) fail("truncated table entries");
    t.add(s, a, b, std::stod(w));
  }
  t.finalize();
  return t;
}

void write_atomic(const std::filesystem::path& path, const std::string& contents) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  if (ec) fail("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail("cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) fail("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail("cannot rename " + tmp.string() + ": " + ec.message());
}

TableCache::TableCache(std::filesystem::path directory) : dir_(std::move(directory)) {}

std::filesystem::path TableCache::path_for(std::uint64_t key) const { return dir_ / ("table-" + hex(key) + ".txt"); }

std::optional<dynamics::BinOutcomeTable> TableCache::load(std::uint64_t key) const {
  const std::filesystem::path path = path_for(key);
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream text;
  text << in.rdbuf();
  try {
    return parse_table(text.str(), key);
  } catch (const CacheError& e) {
    throw CacheError(std::string(e.what()) + " (" + path.string() + ")");
  } catch (const std::exception&) {
    fail("malformed number in " + path.string());
  }
}

void TableCache::store(std::uint64_t key, const dynamics::BinOutcomeTable& table) const {
  write_atomic(path_for(key), serialize_table(table, key));
}

}  // namespace tsmux::cache
