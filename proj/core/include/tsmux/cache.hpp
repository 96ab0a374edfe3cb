#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "tsmux/bin_table.hpp"

namespace tsmux::cache {

/// Name of the environment variable that overrides the configured cache directory.
inline constexpr const char* kCacheDirVariable = "TSMUX_CACHE_DIR";

/// Flag value if non-empty, else the environment variable, else the configured value, else
/// `fallback`.
[[nodiscard]] std::filesystem::path resolve_cache_dir(const std::string& flag, const std::string& configured,
                                                      const std::filesystem::path& fallback);

/// Content hash of everything that determines a table.
[[nodiscard]] std::uint64_t table_key(const dynamics::DynamicsParams& params, const dynamics::BinTiming& timing,
                                      double pump_probability, int initial_signal, int trajectories,
                                      std::uint64_t master_seed);

[[nodiscard]] std::string serialize_table(const dynamics::BinOutcomeTable& table, std::uint64_t key);
/// Throws CacheError on a malformed file, a key mismatch or a checksum mismatch.
[[nodiscard]] dynamics::BinOutcomeTable parse_table(const std::string& text, std::uint64_t expected_key);

/// Writes to a sibling temporary file and renames it over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& contents);

[[nodiscard]] std::string hex(std::uint64_t value);

class TableCache {
 public:
  explicit TableCache(std::filesystem::path directory);

  [[nodiscard]] std::filesystem::path path_for(std::uint64_t key) const;
  /// Empty when no file exists; throws CacheError when one exists but fails verification.
  [[nodiscard]] std::optional<dynamics::BinOutcomeTable> load(std::uint64_t key) const;
  void store(std::uint64_t key, const dynamics::BinOutcomeTable& table) const;
  [[nodiscard]] const std::filesystem::path& directory() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

}  // namespace tsmux::cache
