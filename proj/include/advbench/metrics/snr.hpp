#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "advbench/common/errors.hpp"

namespace advbench::metrics {

inline double l2_norm(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

// Signal-to-noise ratio in dB between a clean waveform and an additive
// perturbation: 20 * (log10 ||x||_2 - log10 ||delta||_2). The shorter of the
// two is treated as zero-padded to the longer, which only matters through
// the norms. An exactly all-zero delta maps to +inf (the no-op attack); a
// silent signal is an error because the ratio is undefined.
inline double snr_db(const std::vector<double>& x,
                     const std::vector<double>& delta) {
  const double nx = l2_norm(x);
  if (nx == 0.0) throw ValidationError("snr_db: silent signal");
  const double nd = l2_norm(delta);
  if (nd == 0.0) return std::numeric_limits<double>::infinity();
  return 20.0 * (std::log10(nx) - std::log10(nd));
}

// L2 radius that achieves a target SNR against a signal of the given norm:
// ||x||_2 * 10^(-snr/20).
inline double epsilon_for_snr_norm(double signal_norm, double snr_target_db) {
  if (signal_norm <= 0.0) {
    throw ValidationError("epsilon_for_snr: silent signal");
  }
  return signal_norm * std::pow(10.0, -snr_target_db / 20.0);
}

inline double epsilon_for_snr(const std::vector<double>& x, double snr_target_db) {
  return epsilon_for_snr_norm(l2_norm(x), snr_target_db);
}

}  // namespace advbench::metrics
