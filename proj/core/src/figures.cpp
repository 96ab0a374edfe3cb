#include <algorithm>
#include <cmath>
#include <numbers>

#include "tsmux/errors.hpp"
#include "tsmux/experiment.hpp"
#include "tsmux/inference.hpp"
#include "tsmux/spectral.hpp"

namespace tsmux::experiment {

namespace fs = std::filesystem;

namespace {

constexpr double kWindow = 5e-4;  // half width of the fine grid around each resonance, in FSR
constexpr int kWindowPoints = 2001;
constexpr int kCoarsePerFsr = 1000;

// Uniform coarse grid plus fine windows around every ring resonance in [-span, span] FSR.
std::vector<double> spectrum_grid(const spectral::DeviceGeometry& g, int span) {
  const double fsr = g.free_spectral_range();
  std::vector<double> w;
  const double lo = -(span + 0.5);
  const int coarse = static_cast<int>((2 * span + 1) * kCoarsePerFsr);
  for (int k = 0; k <= coarse; ++k) w.push_back(g.pump_frequency + fsr * (lo + (2 * span + 1.0) * k / coarse));
  for (int k = -span; k <= span; ++k) {
    const double centre = spectral::mode_resonance(g.pump_frequency + k * fsr, g);
    for (int j = 0; j < kWindowPoints; ++j) {
      w.push_back(centre + fsr * kWindow * (2.0 * j / (kWindowPoints - 1) - 1.0));
    }
  }
  std::sort(w.begin(), w.end());
  w.erase(std::unique(w.begin(), w.end()), w.end());
  return w;
}

Csv spectrum_table(const spectral::DeviceGeometry& g) {
  const std::vector<double> w = spectrum_grid(g, 2);
  const spectral::FilterTuning t = spectral::static_tuning(g);
  const spectral::SpectralResponse r = spectral::circulating_response(w, t.idler, t.signal, g);
  Csv csv({"omega_detuning_over_fsr[1]", "p_circ[|s_f|^2]", "p_signal_out[|s_f|^2]", "p_idler_out[|s_f|^2]",
           "p_drop[|s_f|^2]"});
  const double fsr = g.free_spectral_range();
  for (std::size_t i = 0; i < w.size(); ++i) {
    csv.row()
        .cell((w[i] - g.pump_frequency) / fsr)
        .cell(r.circulating[i])
        .cell(r.signal_out[i])
        .cell(r.idler_out[i])
        .cell(r.drop_out[i]);
  }
  return csv;
}

Csv aux_table(const spectral::DeviceGeometry& g) {
  const std::vector<double> w = spectrum_grid(g, 24);
  const spectral::FilterTuning t = spectral::static_tuning(g);
  const spectral::SpectralResponse off = spectral::circulating_response(w, t.idler, t.signal, g);
  const spectral::SpectralResponse on = spectral::aux_circulating_response(w, g.aux_through, g);
  Csv csv({"omega_detuning_over_fsr[1]", "p_circ_no_aux[|s_f|^2]", "p_circ_aux[|s_f|^2]"});
  const double fsr = g.free_spectral_range();
  for (std::size_t i = 0; i < w.size(); ++i) {
    csv.row().cell((w[i] - g.pump_frequency) / fsr).cell(off.circulating[i]).cell(on.circulating[i]);
  }
  return csv;
}

Csv coupling_table(const spectral::DeviceGeometry& g) {
  const spectral::FilterTuning t = spectral::static_tuning(g);
  const spectral::ModeSet modes = spectral::mode_arithmetic(0, g);
  const double kappa_i = spectral::coupling_rate(modes.idler, t.idler, spectral::Filter::idler, g);
  Csv csv({"psi_s[rad]", "delta_psi_s[rad]", "kappa_s_over_kappa_i[1]", "delta_s_over_fsr[1]"});
  constexpr int kPoints = 201;
  for (int k = 0; k < kPoints; ++k) {
    const double psi = std::numbers::pi * (0.01 + 1.98 * k / (kPoints - 1));
    const double tuning = spectral::signal_tuning_for_phase(g, psi);
    const double kappa = spectral::coupling_rate(modes.signal, tuning, spectral::Filter::signal, g);
    std::string shift = "nan";
    try {
      shift = format_number(spectral::resonance_shift(tuning, g) / g.free_spectral_range());
    } catch (const NumericalError&) {
    }
    csv.row().cell(psi).cell(tuning).cell(kappa / kappa_i).cell(shift);
  }
  return csv;
}

spectral::DeviceGeometry geometry(const Session& s) {
  spectral::DeviceGeometry g = spectral::make_geometry(s.config.device);
  g.validate();
  return g;
}

// P(n, x* = 1) after pumping a fresh bin, from the n_s = 0 table.
inference::Masses herald_masses(const dynamics::BinOutcomeTable& t, double eta) {
  inference::Masses m;
  for (const auto& e : t.entries()) {
    const double w = e.weight / t.total() * inference::thin_detector(e.idler_pre, 1, eta);
    if (w == 0.0) continue;
    if (static_cast<std::size_t>(e.signal) >= m.size()) m.resize(static_cast<std::size_t>(e.signal) + 1, 0.0);
    m[static_cast<std::size_t>(e.signal)] += w;
  }
  return m;
}

Artifacts figure6(const Session& s, Workbench& bench) {
  Csv csv({"bin_duration[s]", "pump_probability[1]", "herald_probability[1]", "fidelity[1]", "g2[1]"});
  for (double d : config::bin_durations(s.config)) {
    auto lazy = bench.tables(s.config, d);
    for (double p : s.config.protocol.pump_grid) {
      const inference::Masses m = herald_masses(lazy->get(p, 0), s.config.protocol.efficiency);
      double total = 0.0;
      for (double v : m) total += v;
      const inference::Verdict v = inference::judge(m, {s.config.protocol.fidelity_threshold, s.config.protocol.g2_threshold});
      csv.row().cell(d).cell(p).cell(total).cell(v.fidelity).cell(v.g2);
    }
  }
  return {write_output(s, "fig6/fig6.csv", csv.text())};
}

Artifacts figure7(const Session& s, Workbench& bench) {
  const protocol::OptimizationResult r = bench.optimize(s.config);
  Artifacts out = write_optimization(s, r, "fig7");
  Csv a({"bins[1]", "bin[1]", "pump_probability[1]", "interpolation_sample[bool]"});
  for (const protocol::BinOptimum& o : r.best) {
    for (int m = 1; m <= o.bins; ++m) {
      const bool sample = std::any_of(o.config.pump_samples.begin(), o.config.pump_samples.end(),
                                      [&](const protocol::PumpSample& q) { return q.bin == m; });
      a.row().cell(o.bins).cell(m).cell(o.evaluation.pump_schedule[static_cast<std::size_t>(m)]).cell(
          std::string(sample ? "true" : "false"));
    }
  }
  Csv b({"bin_duration[s]", "bins[1]", "cycle_time[s]", "success[1]"});
  for (const protocol::DurationRun& run : r.runs) {
    for (const protocol::BinOptimum& o : run.per_bins) {
      b.row().cell(run.bin_duration).cell(o.bins).cell(o.bins * run.bin_duration).cell(o.success);
    }
  }
  out.push_back(write_output(s, "fig7/fig7a.csv", a.text()));
  out.push_back(write_output(s, "fig7/fig7b.csv", b.text()));
  return out;
}

template <class T>
std::vector<T> grid_or(const std::vector<T>& grid, T base) {
  return grid.empty() ? std::vector<T>{base} : grid;
}

Artifacts figure8(const Session& s, Workbench& bench) {
  const config::ExperimentConfig& c = s.config;
  const std::vector<double> q = {c.dynamics.quality_loss};
  const auto eta = grid_or(c.sweep.efficiencies, c.protocol.efficiency);
  const auto fth = grid_or(c.sweep.fidelity_thresholds, c.protocol.fidelity_threshold);
  const auto g2 = grid_or(c.sweep.g2_thresholds, c.protocol.g2_threshold);
  std::vector<SweepPoint> a = sweep_points(s, bench, q, eta, fth, {c.protocol.g2_threshold}, c.protocol.release_caps);
  const std::vector<SweepPoint> no_release = sweep_points(s, bench, q, eta, fth, {c.protocol.g2_threshold}, {2});
  a.insert(a.end(), no_release.begin(), no_release.end());
  const std::vector<SweepPoint> b =
      sweep_points(s, bench, q, eta, {c.protocol.fidelity_threshold}, g2, c.protocol.release_caps);
  return {write_output(s, "fig8/fig8a.csv", sweep_table(a, 0.99).text()),
          write_output(s, "fig8/fig8b.csv", sweep_table(b, 0.99).text())};
}

Artifacts figure9(const Session& s, Workbench& bench) {
  const config::ExperimentConfig& c = s.config;
  const auto q = grid_or(c.sweep.quality_loss, c.dynamics.quality_loss);
  const auto eta = grid_or(c.sweep.efficiencies, c.protocol.efficiency);
  const auto fth = grid_or(c.sweep.fidelity_thresholds, c.protocol.fidelity_threshold);
  const std::vector<SweepPoint> a = sweep_points(s, bench, q, eta, fth, {c.protocol.g2_threshold}, {2});
  const bool has_99 = std::any_of(fth.begin(), fth.end(), [](double f) { return std::abs(f - 0.99) < 1e-12; });
  const double target_fth = has_99 ? 0.99 : c.protocol.fidelity_threshold;
  const std::vector<SweepPoint> b = sweep_points(s, bench, q, eta, {target_fth}, {c.protocol.g2_threshold}, {2});
  return {write_output(s, "fig9/fig9a.csv", sweep_table(a, 0.99).text()),
          write_output(s, "fig9/fig9b.csv", sweep_table(b, 0.99).text())};
}

}  // namespace

Artifacts run_spectra(const Session& session, const fs::path& dir) {
  const spectral::DeviceGeometry g = geometry(session);
  return {write_output(session, dir / "spectra.csv", spectrum_table(g).text()),
          write_output(session, dir / "spectra_aux.csv", aux_table(g).text()),
          write_output(session, dir / "coupling.csv", coupling_table(g).text())};
}

Artifacts run_figures(const Session& session, const std::vector<int>& figures) {
  std::vector<int> wanted = figures.empty() ? std::vector<int>{3, 4, 6, 7, 8, 9} : figures;
  for (int f : wanted) {
    if (f != 3 && f != 4 && f != 6 && f != 7 && f != 8 && f != 9) {
      throw ConfigError("unknown figure " + std::to_string(f) + " (choose from 3, 4, 6, 7, 8, 9)");
    }
  }
  Workbench bench(session, TableMode::build);
  Artifacts out;
  for (int f : wanted) {
    session.note("figure " + std::to_string(f));
    Artifacts a;
    if (f == 3) {
      const spectral::DeviceGeometry g = geometry(session);
      a = {write_output(session, "fig3/spectra.csv", spectrum_table(g).text()),
           write_output(session, "fig3/coupling.csv", coupling_table(g).text())};
    } else if (f == 4) {
      a = {write_output(session, "fig4/spectra_aux.csv", aux_table(geometry(session)).text())};
    } else if (f == 6) {
      a = figure6(session, bench);
    } else if (f == 7) {
      a = figure7(session, bench);
    } else if (f == 8) {
      a = figure8(session, bench);
    } else {
      a = figure9(session, bench);
    }
    out.insert(out.end(), a.begin(), a.end());
  }
  return out;
}

}  // namespace tsmux::experiment
