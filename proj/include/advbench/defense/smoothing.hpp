#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "advbench/common/errors.hpp"
#include "advbench/common/rng.hpp"
#include "advbench/model/subject.hpp"

namespace advbench::defense {

struct SmoothingConfig {
  enum class Vote { single, majority_exact };
  double sigma = 0.02;
  int n_draws = 1;
  Vote vote = Vote::single;
  std::uint64_t seed = 0;

  void validate() const {
    if (sigma < 0.0) throw ValidationError("smoothing sigma must be >= 0");
    if (n_draws < 1) throw ValidationError("smoothing needs at least one draw");
    if (vote == Vote::single && n_draws != 1) {
      throw ValidationError("single-vote smoothing takes exactly one draw");
    }
  }
};

struct SmoothedResult {
  std::string text;
  std::vector<std::string> draw_transcripts;
};

// Gaussian input smoothing. sigma == 0 is an exact passthrough of the
// undefended model. With majority_exact, ties are broken by the lowest
// average teacher-forced loss of the candidate text across all draws.
inline SmoothedResult smooth_transcribe(const model::SubjectModel& model,
                                        const std::vector<double>& x,
                                        const SmoothingConfig& cfg) {
  cfg.validate();
  SmoothedResult out;
  if (cfg.sigma == 0.0) {
    out.text = model.transcribe(x).text;
    out.draw_transcripts.push_back(out.text);
    return out;
  }

  Rng rng(cfg.seed);
  std::vector<std::vector<double>> draws;
  std::vector<std::string> langs;
  draws.reserve(cfg.n_draws);
  for (int d = 0; d < cfg.n_draws; ++d) {
    std::vector<double> noisy(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double v = x[i] + cfg.sigma * rng.gaussian();
      noisy[i] = std::min(1.0, std::max(-1.0, v));
    }
    const auto tr = model.transcribe(noisy);
    out.draw_transcripts.push_back(tr.text);
    langs.push_back(tr.detected_language);
    draws.push_back(std::move(noisy));
  }

  if (cfg.vote == SmoothingConfig::Vote::single) {
    out.text = out.draw_transcripts.front();
    return out;
  }

  std::map<std::string, int> votes;
  for (const auto& t : out.draw_transcripts) ++votes[t];
  int top = 0;
  for (const auto& [_, n] : votes) top = std::max(top, n);

  std::vector<std::string> tied;
  for (const auto& [t, n] : votes) {
    if (n == top) tied.push_back(t);
  }
  if (tied.size() == 1) {
    out.text = tied.front();
    return out;
  }

  double best = std::numeric_limits<double>::infinity();
  for (const auto& cand : tied) {
    std::string lang;
    for (std::size_t d = 0; d < draws.size(); ++d) {
      if (out.draw_transcripts[d] == cand) {
        lang = langs[d];
        break;
      }
    }
    model::TokenSequence target;
    try {
      target = model::make_target(model.tokenizer(), cand);
    } catch (const ValidationError&) {
      continue;  // empty transcript cannot be scored
    }
    double acc = 0.0;
    for (const auto& noisy : draws) {
      acc += model.teacher_forced_loss(noisy, target, lang, nullptr, false).total;
    }
    const double mean = acc / static_cast<double>(draws.size());
    if (mean < best) {
      best = mean;
      out.text = cand;
    }
  }
  if (!std::isfinite(best) && out.text.empty() && !tied.empty()) {
    out.text = tied.front();
  }
  return out;
}

}  // namespace advbench::defense
