#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "advbench/common/errors.hpp"
#include "advbench/common/rng.hpp"
#include "advbench/metrics/snr.hpp"

namespace advbench::audio {

// x plus Gaussian noise rescaled so the achieved SNR is exactly the requested
// level (sampling variance in the noise energy is divided out). Passing +inf
// is the no-noise sentinel.
inline std::vector<double> add_white_noise(const std::vector<double>& x,
                                           double snr_db, Rng& rng) {
  if (std::isinf(snr_db) && snr_db > 0) return x;
  const double nx = metrics::l2_norm(x);
  if (nx == 0.0) throw ValidationError("add_white_noise: silent input");

  std::vector<double> eta(x.size());
  double ne = 0.0;
  while (true) {
    for (auto& v : eta) v = rng.gaussian();
    ne = metrics::l2_norm(eta);
    if (ne > 0.0) break;  // all-zero draw is possible only in theory
  }
  const double target = nx * std::pow(10.0, -snr_db / 20.0);
  const double s = target / ne;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + s * eta[i];
  return out;
}

}  // namespace advbench::audio
