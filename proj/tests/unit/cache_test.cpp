#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tsmux/cache.hpp"
#include "tsmux/errors.hpp"

namespace fs = std::filesystem;
namespace ca = tsmux::cache;
namespace dy = tsmux::dynamics;

namespace {

dy::BinOutcomeTable sample() {
  dy::BinOutcomeTable t(0.05, 1, dy::BinTiming{60e-12, 12e-12});
  t.add(1, 0, 0, 90);
  t.add(2, 1, 0, 7);
  t.add(2, 0, 1, 3);
  t.finalize();
  t.cutoff = 9;
  t.pump_scale = 1.25e11;
  t.edge_population = 3.5e-9;
  t.mean_idler_at_end = 1.0 / 3.0;
  return t;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::path(TSMUX_TEST_SCRATCH) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(Cache, RoundTripIsExact) {
  const dy::BinOutcomeTable t = sample();
  const dy::BinOutcomeTable back = ca::parse_table(ca::serialize_table(t, 42), 42);
  ASSERT_EQ(back.entries().size(), t.entries().size());
  for (std::size_t i = 0; i < t.entries().size(); ++i) {
    EXPECT_EQ(back.entries()[i].signal, t.entries()[i].signal);
    EXPECT_EQ(back.entries()[i].weight, t.entries()[i].weight);
  }
  EXPECT_EQ(back.mean_idler_at_end, t.mean_idler_at_end);
  EXPECT_EQ(back.pump_scale, t.pump_scale);
  EXPECT_EQ(back.cutoff, 9);
  EXPECT_EQ(back.timing().decision_lag, 12e-12);
}

TEST(Cache, TamperingAndKeyMismatchAreDetected) {
  std::string text = ca::serialize_table(sample(), 42);
  EXPECT_THROW((void)ca::parse_table(text, 43), tsmux::CacheError);
  const auto at = text.find("2 1 0 7");
  ASSERT_NE(at, std::string::npos);
  text[at + 6] = '8';
  EXPECT_THROW((void)ca::parse_table(text, 42), tsmux::CacheError);
  EXPECT_THROW((void)ca::parse_table("tsmux-table 1\n", 42), tsmux::CacheError);
}

TEST(Cache, StoreLoadAndTamperOnDisk) {
  const ca::TableCache cache(scratch("cache"));
  EXPECT_FALSE(cache.load(7).has_value());
  cache.store(7, sample());
  ASSERT_TRUE(cache.load(7).has_value());
  EXPECT_EQ(cache.load(7)->total(), 100.0);
  EXPECT_FALSE(fs::exists(cache.path_for(7).string() + ".tmp"));
  {
    std::ofstream out(cache.path_for(7), std::ios::app);
    out << "0 0 0 1\n";
  }
  EXPECT_THROW((void)cache.load(7), tsmux::CacheError);
}

TEST(Cache, KeyDependsOnEveryInput) {
  dy::DynamicsParams p;
  p.kappa_idler = 1e11;
  const dy::BinTiming t{60e-12, 12e-12};
  const auto base = ca::table_key(p, t, 0.1, 0, 1000, 1);
  EXPECT_EQ(base, ca::table_key(p, t, 0.1, 0, 1000, 1));
  EXPECT_NE(base, ca::table_key(p, t, 0.1, 1, 1000, 1));
  EXPECT_NE(base, ca::table_key(p, t, 0.2, 0, 1000, 1));
  EXPECT_NE(base, ca::table_key(p, t, 0.1, 0, 1001, 1));
  EXPECT_NE(base, ca::table_key(p, t, 0.1, 0, 1000, 2));
  EXPECT_NE(base, ca::table_key(p, dy::BinTiming{61e-12, 12e-12}, 0.1, 0, 1000, 1));
  p.kappa_loss = 1.0;
  EXPECT_NE(base, ca::table_key(p, t, 0.1, 0, 1000, 1));
}

TEST(Cache, DirectoryPrecedence) {
  ::unsetenv(ca::kCacheDirVariable);
  EXPECT_EQ(ca::resolve_cache_dir("", "", "fallback"), fs::path("fallback"));
  EXPECT_EQ(ca::resolve_cache_dir("", "configured", "fallback"), fs::path("configured"));
  ::setenv(ca::kCacheDirVariable, "from-env", 1);
  EXPECT_EQ(ca::resolve_cache_dir("", "configured", "fallback"), fs::path("from-env"));
  EXPECT_EQ(ca::resolve_cache_dir("flag", "configured", "fallback"), fs::path("flag"));
  ::unsetenv(ca::kCacheDirVariable);
}
