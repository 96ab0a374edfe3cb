#include "tsmux/fock.hpp"

#include <cmath>
#include <stdexcept>

namespace tsmux::dynamics {

TwoModeState::TwoModeState(int cutoff) : cutoff_(cutoff) {
  if (cutoff < 0) throw std::invalid_argument("TwoModeState: negative cutoff");
  amp_.assign(static_cast<std::size_t>(dimension()), Complex{});
}

TwoModeState TwoModeState::fock(int cutoff, int n_signal, int n_idler) {
  if (n_signal < 0 || n_idler < 0 || n_signal > cutoff || n_idler > cutoff) {
    throw std::invalid_argument("TwoModeState::fock: occupation outside cutoff");
  }
  TwoModeState s(cutoff);
  s.amplitude(n_signal, n_idler) = 1.0;
  return s;
}

double TwoModeState::norm_squared() const {
  double sum = 0.0;
  for (const Complex& a : amp_) sum += std::norm(a);
  return sum;
}

void TwoModeState::normalize() {
  const double n = norm_squared();
  if (!(n > 0.0)) throw std::domain_error("TwoModeState::normalize: zero state");
  const double scale = 1.0 / std::sqrt(n);
  for (Complex& a : amp_) a *= scale;
}

double TwoModeState::population(int n_signal, int n_idler) const {
  return std::norm(amplitude(n_signal, n_idler));
}

double TwoModeState::mean_signal() const {
  double sum = 0.0;
  for (int s = 0; s <= cutoff_; ++s) {
    for (int i = 0; i <= cutoff_; ++i) sum += s * population(s, i);
  }
  return sum / norm_squared();
}

double TwoModeState::mean_idler() const {
  double sum = 0.0;
  for (int s = 0; s <= cutoff_; ++s) {
    for (int i = 0; i <= cutoff_; ++i) sum += i * population(s, i);
  }
  return sum / norm_squared();
}

double TwoModeState::edge_population() const {
  double sum = 0.0;
  for (int k = 0; k <= cutoff_; ++k) {
    sum += population(cutoff_, k);
    if (k != cutoff_) sum += population(k, cutoff_);
  }
  return sum / norm_squared();
}

std::vector<double> TwoModeState::signal_distribution() const {
  std::vector<double> p(static_cast<std::size_t>(cutoff_ + 1), 0.0);
  const double total = norm_squared();
  for (int s = 0; s <= cutoff_; ++s) {
    for (int i = 0; i <= cutoff_; ++i) p[static_cast<std::size_t>(s)] += population(s, i) / total;
  }
  return p;
}

}  // namespace tsmux::dynamics
