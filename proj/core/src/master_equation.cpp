#include "tsmux/master_equation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tsmux/errors.hpp"

namespace tsmux::dynamics {

DensityMatrix::DensityMatrix(int cutoff) : cutoff_(cutoff), dim_((cutoff + 1) * (cutoff + 1)) {
  rho_.assign(static_cast<std::size_t>(dim_) * dim_, Complex{});
}

DensityMatrix DensityMatrix::pure(const TwoModeState& psi) {
  DensityMatrix r(psi.cutoff());
  const auto& a = psi.amplitudes();
  for (int i = 0; i < r.dim_; ++i) {
    for (int j = 0; j < r.dim_; ++j) r(i, j) = a[static_cast<std::size_t>(i)] * std::conj(a[static_cast<std::size_t>(j)]);
  }
  return r;
}

double DensityMatrix::trace() const {
  double t = 0.0;
  for (int i = 0; i < dim_; ++i) t += (*this)(i, i).real();
  return t;
}

double DensityMatrix::population(int n_signal, int n_idler) const {
  const int i = n_signal * (cutoff_ + 1) + n_idler;
  return (*this)(i, i).real();
}

double DensityMatrix::mean_signal() const {
  double sum = 0.0;
  for (int s = 0; s <= cutoff_; ++s) {
    for (int i = 0; i <= cutoff_; ++i) sum += s * population(s, i);
  }
  return sum / trace();
}

double DensityMatrix::mean_idler() const {
  double sum = 0.0;
  for (int s = 0; s <= cutoff_; ++s) {
    for (int i = 0; i <= cutoff_; ++i) sum += i * population(s, i);
  }
  return sum / trace();
}

double DensityMatrix::edge_population() const {
  double sum = 0.0;
  for (int k = 0; k <= cutoff_; ++k) {
    sum += population(cutoff_, k);
    if (k != cutoff_) sum += population(k, cutoff_);
  }
  return sum / trace();
}

namespace {

struct Liouvillian {
  int n = 0;      // photons per mode + 1
  int dim = 0;
  std::vector<int> ns, ni;
  std::vector<double> energy;  // Delta_i n_i + Delta_s n_s
  std::vector<double> decay;   // sum_c kappa_c n_c
  double rate_idler = 0.0;     // 2 (kappa_i + kappa_L)
  double rate_signal = 0.0;    // 2 (kappa_s + kappa_L)
  bool jumps = true;

  [[nodiscard]] int idx(int s, int i) const { return s * n + i; }

  // (A rho)_{ab} where A = X (a_i^+ a_s^+ + a_i a_s) + diag(energy - i decay).
  void apply(double x, const std::vector<Complex>& rho, std::vector<Complex>& out) const {
    const Complex minus_i{0.0, -1.0};
    for (int a = 0; a < dim; ++a) {
      const int sa = ns[static_cast<std::size_t>(a)];
      const int ia = ni[static_cast<std::size_t>(a)];
      const Complex ha{energy[static_cast<std::size_t>(a)], -decay[static_cast<std::size_t>(a)]};
      for (int b = 0; b < dim; ++b) {
        const int sb = ns[static_cast<std::size_t>(b)];
        const int ib = ni[static_cast<std::size_t>(b)];
        const Complex hb{energy[static_cast<std::size_t>(b)], decay[static_cast<std::size_t>(b)]};
        const std::size_t ab = static_cast<std::size_t>(a) * dim + b;
        // -i (H_eff rho - rho H_eff^dagger)
        Complex hr = ha * rho[ab];
        Complex rh = rho[ab] * hb;
        if (x != 0.0) {
          if (sa > 0 && ia > 0) hr += x * std::sqrt(double(sa) * ia) * rho[static_cast<std::size_t>(idx(sa - 1, ia - 1)) * dim + b];
          if (sa + 1 < n && ia + 1 < n) {
            hr += x * std::sqrt(double(sa + 1) * (ia + 1)) * rho[static_cast<std::size_t>(idx(sa + 1, ia + 1)) * dim + b];
          }
          if (sb > 0 && ib > 0) rh += x * std::sqrt(double(sb) * ib) * rho[static_cast<std::size_t>(a) * dim + idx(sb - 1, ib - 1)];
          if (sb + 1 < n && ib + 1 < n) {
            rh += x * std::sqrt(double(sb + 1) * (ib + 1)) * rho[static_cast<std::size_t>(a) * dim + idx(sb + 1, ib + 1)];
          }
        }
        Complex v = minus_i * (hr - rh);
        if (jumps) {
          if (ia + 1 < n && ib + 1 < n) {
            v += rate_idler * std::sqrt(double(ia + 1) * (ib + 1)) *
                 rho[static_cast<std::size_t>(idx(sa, ia + 1)) * dim + idx(sb, ib + 1)];
          }
          if (sa + 1 < n && sb + 1 < n) {
            v += rate_signal * std::sqrt(double(sa + 1) * (sb + 1)) *
                 rho[static_cast<std::size_t>(idx(sa + 1, ia)) * dim + idx(sb + 1, ib)];
          }
        }
        out[ab] = v;
      }
    }
  }
};

}  // namespace

DensityMatrix master_equation_evolve(const DensityMatrix& initial, double t0, double t1, const DynamicsParams& params,
                                     const MasterEquationOptions& options) {
  params.validate();
  if (t1 < t0) throw std::invalid_argument("master_equation_evolve: t1 < t0");
  Liouvillian L;
  L.n = initial.cutoff() + 1;
  L.dim = initial.dimension();
  L.jumps = options.include_jumps;
  L.rate_idler = 2.0 * (params.kappa_idler + params.kappa_loss);
  L.rate_signal = 2.0 * (params.kappa_signal + params.kappa_loss);
  for (int s = 0; s < L.n; ++s) {
    for (int i = 0; i < L.n; ++i) {
      L.ns.push_back(s);
      L.ni.push_back(i);
      L.energy.push_back(params.detuning_idler * i + params.detuning_signal * s);
      L.decay.push_back((params.kappa_idler + params.kappa_loss) * i + (params.kappa_signal + params.kappa_loss) * s);
    }
  }
  auto drive = [&](double t) { return params.pump.scale > 0.0 ? pump_energy(t, params.pump) : 0.0; };

  const double rate = std::max({params.kappa_idler + params.kappa_loss, params.kappa_signal + params.kappa_loss,
                                params.pump.scale, std::abs(params.detuning_idler), std::abs(params.detuning_signal)});
  DensityMatrix rho = initial;
  if (t1 == t0 || rate == 0.0) return rho;
  const int steps = std::max(1, static_cast<int>(std::ceil((t1 - t0) * options.steps_per_rate * rate)));
  const double h = (t1 - t0) / steps;
  const std::size_t size = rho.data().size();
  std::vector<Complex> k1(size), k2(size), k3(size), k4(size), tmp(size);
  auto& r = rho.data();
  for (int j = 0; j < steps; ++j) {
    const double t = t0 + j * h;
    const double xa = drive(t);
    const double xm = drive(t + 0.5 * h);
    const double xb = drive(t + h);
    L.apply(xa, r, k1);
    for (std::size_t i = 0; i < size; ++i) tmp[i] = r[i] + 0.5 * h * k1[i];
    L.apply(xm, tmp, k2);
    for (std::size_t i = 0; i < size; ++i) tmp[i] = r[i] + 0.5 * h * k2[i];
    L.apply(xm, tmp, k3);
    for (std::size_t i = 0; i < size; ++i) tmp[i] = r[i] + h * k3[i];
    L.apply(xb, tmp, k4);
    for (std::size_t i = 0; i < size; ++i) r[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }
  if (rho.trace() > 0.0 && rho.edge_population() > options.truncation_limit) {
    std::ostringstream msg;
    msg << "master equation: cutoff " << rho.cutoff() << " shell population " << rho.edge_population()
        << " exceeds " << options.truncation_limit;
    throw TruncationError(msg.str());
  }
  return rho;
}

}  // namespace tsmux::dynamics
