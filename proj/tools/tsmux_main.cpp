#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tsmux/experiment.hpp"

namespace {

// Flags shared by every subcommand.
void add_common(CLI::App* sub, tsmux::experiment::Options& o, std::uint64_t& seed) {
  sub->add_option("--config", o.config_path, "experiment configuration (YAML)")->required();
  sub->add_option("--seed", seed, "master seed, overrides run.seed");
  sub->add_option("--out", o.output, "output directory, overrides run.output");
  sub->add_option("--jobs", o.jobs, "worker threads for trajectory batches")->check(CLI::PositiveNumber);
  sub->add_option("--cache-dir", o.cache_dir, "table cache directory (else $TSMUX_CACHE_DIR, run.cache_dir)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multiplexed heralded single-photon source: spectra, pair dynamics and protocol optimisation"};
  app.require_subcommand(1);
  tsmux::experiment::Options options;
  std::uint64_t seed = 0;

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"spectra", "ring and filter spectra, coupling-rate tuning curve"},
      {"pump-table", "build and cache pump-bin outcome tables for every bin duration"},
      {"verify-dynamics", "compare trajectory averages with the master equation"},
      {"optimize", "optimise the driving protocol from cached tables"},
      {"sweep", "optimise over efficiency, threshold and loss grids"},
      {"figures", "write the per-figure CSV bundles"},
  };
  std::vector<CLI::App*> subs;
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    add_common(sub, options, seed);
    if (name == "figures") {
      sub->add_option("--figure", options.figures, "figure numbers (3, 4, 6, 7, 8, 9); default all");
    }
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  for (CLI::App* sub : subs) {
    if (!sub->parsed()) continue;
    if (sub->count("--seed") > 0) options.seed = seed;
    return tsmux::experiment::run(sub->get_name(), options, std::cout, std::cerr);
  }
  return 1;
}
