#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "advbench/common/errors.hpp"
#include "advbench/metrics/snr.hpp"

namespace advbench::attacks {

enum class Norm { L2, Linf };

enum class Algorithm { none, white_noise, pgd, cw, lang_confusion, universal_lang };

inline std::string to_string(Norm n) { return n == Norm::L2 ? "l2" : "linf"; }

inline Norm norm_from_string(const std::string& s) {
  if (s == "l2") return Norm::L2;
  if (s == "linf") return Norm::Linf;
  throw ValidationError("unknown norm '" + s + "' (expected l2 or linf)");
}

inline std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::none: return "none";
    case Algorithm::white_noise: return "white_noise";
    case Algorithm::pgd: return "pgd";
    case Algorithm::cw: return "cw";
    case Algorithm::lang_confusion: return "lang_confusion";
    case Algorithm::universal_lang: return "universal_lang";
  }
  throw ValidationError("unreachable algorithm value");
}

inline Algorithm algorithm_from_string(const std::string& s) {
  for (auto a : {Algorithm::none, Algorithm::white_noise, Algorithm::pgd, Algorithm::cw,
                 Algorithm::lang_confusion, Algorithm::universal_lang}) {
    if (to_string(a) == s) return a;
  }
  throw ValidationError("unknown attack algorithm '" + s + "'");
}

struct CwParams {
  double c = 0.25;          // L2 penalty coefficient
  bool c_from_model_size = true;
  double lambda = 1.0;      // extra weight on the first text token
  double alpha = 0.7;       // epsilon decay factor
  int k = 8;                // max decays
  double initial_epsilon = 0.1;
  double learning_rate = 0.01;
};

struct AttackConfig {
  Algorithm algorithm = Algorithm::pgd;
  Norm norm = Norm::L2;
  double epsilon = 0.0;                 // amplitude units; 0 means unset
  double snr_target_db = std::numeric_limits<double>::quiet_NaN();
  int steps = 200;
  double learning_rate = 0.0;  // absolute; 0 means use the relative rule
  // times epsilon; NaN picks the per-algorithm default (0.1, universal 0.001)
  double relative_learning_rate = std::numeric_limits<double>::quiet_NaN();
  CwParams cw;
  std::string target_text;
  std::string target_language;
  std::uint64_t seed = 0;

  bool has_epsilon() const { return epsilon > 0.0; }
  bool has_snr_target() const { return std::isfinite(snr_target_db); }

  void validate() const {
    if (steps < 0) throw ValidationError("attack steps must be >= 0");
    if (algorithm == Algorithm::cw) {
      if (!(cw.alpha > 0.0 && cw.alpha < 1.0)) {
        throw ValidationError("cw.alpha must lie in (0, 1)");
      }
      if (cw.k < 0) throw ValidationError("cw.k must be >= 0");
      if (cw.initial_epsilon <= 0.0) {
        throw ValidationError("cw.initial_epsilon must be positive");
      }
      return;
    }
    if (norm == Norm::L2 &&
        (algorithm == Algorithm::pgd || algorithm == Algorithm::lang_confusion ||
         algorithm == Algorithm::universal_lang)) {
      if (has_epsilon() == has_snr_target()) {
        throw ValidationError(
            "L2 attacks need exactly one of epsilon / snr_target_db");
      }
    }
    if (norm == Norm::Linf && algorithm == Algorithm::pgd && !has_epsilon()) {
      throw ValidationError("Linf attacks need an explicit epsilon");
    }
  }
};

inline nlohmann::json config_to_json(const AttackConfig& c) {
  nlohmann::json j{
      {"algorithm", to_string(c.algorithm)},
      {"norm", to_string(c.norm)},
      {"steps", c.steps},
      {"learning_rate", c.learning_rate},
      {"seed", c.seed},
  };
  if (std::isfinite(c.relative_learning_rate)) {
    j["relative_learning_rate"] = c.relative_learning_rate;
  }
  if (c.has_epsilon()) j["epsilon"] = c.epsilon;
  if (c.has_snr_target()) j["snr_target_db"] = c.snr_target_db;
  if (!c.target_text.empty()) j["target_text"] = c.target_text;
  if (!c.target_language.empty()) j["target_language"] = c.target_language;
  if (c.algorithm == Algorithm::cw) {
    j["cw"] = {{"c", c.cw.c}, {"c_from_model_size", c.cw.c_from_model_size},
               {"lambda", c.cw.lambda}, {"alpha", c.cw.alpha}, {"k", c.cw.k},
               {"initial_epsilon", c.cw.initial_epsilon},
               {"learning_rate", c.cw.learning_rate}};
  }
  return j;
}

struct Perturbation {
  std::vector<double> delta;
  Norm norm = Norm::L2;
  double epsilon = 0.0;
  double achieved_snr_db = 0.0;
  int steps_run = 0;
  std::uint64_t seed = 0;
};

struct AttackResult {
  std::string example_id;
  std::string clean_transcript;
  std::string adv_transcript;
  double clean_wer = 0.0;
  double adv_wer = 0.0;
  double achieved_snr_db = 0.0;
  bool targeted_success = false;
  double wall_time_s = 0.0;
  nlohmann::json config_snapshot;
  // language-attack bookkeeping
  std::string detected_language_clean;
  std::string detected_language_adv;
  // cw bookkeeping: the per-step clamp radius
  std::vector<double> epsilon_trace;
};

// Norm-ball projection; idempotent and non-expansive. The rescale is skipped
// within a relative 1e-12 of the boundary so that reprojecting an
// already-projected vector is an exact no-op despite rounding.
inline void project(std::vector<double>& delta, Norm norm, double epsilon) {
  if (!(epsilon > 0.0)) throw ValidationError("projection radius must be positive");
  if (norm == Norm::Linf) {
    for (auto& v : delta) v = std::min(epsilon, std::max(-epsilon, v));
    return;
  }
  const double n = metrics::l2_norm(delta);
  if (n > epsilon * (1.0 + 1e-12)) {
    const double s = epsilon / n;
    for (auto& v : delta) v *= s;
  }
}

// Postcondition guard run on every attack's final perturbation.
inline void check_norm_bound(const Perturbation& p) {
  const double tol = 1.0 + 1e-6;
  if (p.norm == Norm::L2) {
    const double n = metrics::l2_norm(p.delta);
    if (n > p.epsilon * tol) {
      throw NumericalError("perturbation violates its L2 bound: " +
                           std::to_string(n) + " > " + std::to_string(p.epsilon));
    }
  } else {
    double m = 0.0;
    for (double v : p.delta) m = std::max(m, std::abs(v));
    if (m > p.epsilon * tol) {
      throw NumericalError("perturbation violates its Linf bound: " +
                           std::to_string(m) + " > " + std::to_string(p.epsilon));
    }
  }
}

inline std::vector<double> clip_unit(std::vector<double> x) {
  for (auto& v : x) v = std::min(1.0, std::max(-1.0, v));
  return x;
}

inline std::vector<double> add_clip(const std::vector<double>& x,
                                    const std::vector<double>& delta) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::min(1.0, std::max(-1.0, x[i] + delta[i]));
  }
  return out;
}

}  // namespace advbench::attacks
