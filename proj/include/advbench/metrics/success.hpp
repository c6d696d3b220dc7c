#pragma once

#include <cmath>
#include <string>

#include "advbench/common/errors.hpp"
#include "advbench/metrics/text.hpp"

namespace advbench::metrics {

struct SuccessCriterion {
  double min_snr_db = 30.0;
  bool require_exact_target = true;
};

// Sentence-level targeted-attack success: exact normalized match against the
// target AND achieved SNR strictly above the threshold. An infinite SNR (the
// zero-perturbation degenerate case) passes the threshold.
inline bool targeted_success(const std::string& hypothesis,
                             const std::string& target,
                             double achieved_snr_db,
                             const SuccessCriterion& criterion = {}) {
  if (std::isnan(achieved_snr_db)) {
    throw ValidationError("targeted_success: NaN SNR");
  }
  if (criterion.require_exact_target &&
      normalize_text(hypothesis) != normalize_text(target)) {
    return false;
  }
  return achieved_snr_db > criterion.min_snr_db;
}

}  // namespace advbench::metrics
