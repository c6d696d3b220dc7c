#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "advbench/common/errors.hpp"

namespace advbench::audio {

namespace resample_detail {

inline double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = M_PI * x;
  return std::sin(px) / px;
}

}  // namespace resample_detail

// Rational-ratio windowed-sinc resampler. Output length is
// ceil(n * out_rate / in_rate); the kernel is a Hann-windowed sinc with the
// cutoff at the narrower of the two Nyquist frequencies and per-output-sample
// gain normalization (exact DC gain).
inline std::vector<double> resample(const std::vector<double>& x, unsigned in_rate,
                                    unsigned out_rate) {
  if (in_rate == 0 || out_rate == 0) throw ValidationError("resample: zero rate");
  if (in_rate == out_rate) return x;
  if (x.empty()) return {};

  const unsigned g = std::gcd(in_rate, out_rate);
  const std::uint64_t up = out_rate / g;    // L
  const std::uint64_t down = in_rate / g;   // M

  // cutoff relative to the input Nyquist
  const double cutoff = std::min(1.0, static_cast<double>(up) / static_cast<double>(down));
  const int half_width = static_cast<int>(std::ceil(16.0 / cutoff));

  const std::size_t n_in = x.size();
  const auto n_out = static_cast<std::size_t>(
      (static_cast<std::uint64_t>(n_in) * up + down - 1) / down);

  std::vector<double> y(n_out, 0.0);
  for (std::size_t j = 0; j < n_out; ++j) {
    // position of output sample j on the input time axis
    const double t = static_cast<double>(j) * static_cast<double>(down) /
                     static_cast<double>(up);
    const auto i0 = static_cast<long>(std::floor(t)) - half_width + 1;
    const auto i1 = static_cast<long>(std::floor(t)) + half_width;
    double acc = 0.0, gain = 0.0;
    for (long i = i0; i <= i1; ++i) {
      const double u = (static_cast<double>(i) - t) / half_width;  // in (-1, 1]
      const double w = 0.5 * (1.0 + std::cos(M_PI * u));
      const double k = cutoff * resample_detail::sinc(cutoff * (static_cast<double>(i) - t)) * w;
      gain += k;
      if (i >= 0 && i < static_cast<long>(n_in)) acc += x[static_cast<std::size_t>(i)] * k;
    }
    y[j] = gain != 0.0 ? acc / gain : 0.0;
  }
  return y;
}

}  // namespace advbench::audio
