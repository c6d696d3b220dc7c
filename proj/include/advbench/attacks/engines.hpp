#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include "advbench/attacks/types.hpp"
#include "advbench/audio/corpus.hpp"
#include "advbench/audio/wav.hpp"
#include "advbench/metrics/snr.hpp"
#include "advbench/metrics/success.hpp"
#include "advbench/metrics/wer.hpp"
#include "advbench/model/subject.hpp"

namespace advbench::attacks {

struct AttackOutcome {
  Perturbation perturbation;
  AttackResult result;
};

namespace detail {

inline double elapsed_s(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

inline double resolve_epsilon(const AttackConfig& cfg,
                              const std::vector<double>& x) {
  if (cfg.norm == Norm::Linf) return cfg.epsilon;
  if (cfg.has_epsilon()) return cfg.epsilon;
  return metrics::epsilon_for_snr(x, cfg.snr_target_db);
}

inline double resolve_lr(const AttackConfig& cfg, double epsilon,
                         double default_relative) {
  if (cfg.learning_rate > 0.0) return cfg.learning_rate;
  const double rel = std::isfinite(cfg.relative_learning_rate)
                         ? cfg.relative_learning_rate
                         : default_relative;
  return rel * epsilon;
}

inline model::LossValue step_loss(const model::SubjectModel& m,
                                  const std::vector<double>& adv,
                                  const model::TokenSequence& target,
                                  const std::string& language,
                                  const std::vector<double>* weights, int step) {
  try {
    return m.teacher_forced_loss(adv, target, language, weights, true);
  } catch (const NumericalError& e) {
    throw NumericalError("attack aborted at step " + std::to_string(step) +
                         ": " + e.what());
  }
}

inline model::LossValue step_lang_loss(const model::SubjectModel& m,
                                       const std::vector<double>& adv,
                                       const std::string& lang, int step) {
  try {
    return m.language_target_loss(adv, lang, true);
  } catch (const NumericalError& e) {
    throw NumericalError("attack aborted at step " + std::to_string(step) +
                         ": " + e.what());
  }
}

// The artifact that actually gets persisted and scored: x + delta, clipped to
// [-1, 1], rounded through 16-bit quantization.
struct Artifact {
  std::vector<double> adv_q;
  std::vector<double> delta_eff;
  double snr_db = 0.0;
};

inline Artifact make_artifact(const std::vector<double>& x,
                              const std::vector<double>& delta) {
  Artifact a;
  a.adv_q = audio::quantize_int16(add_clip(x, delta));
  a.delta_eff.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) a.delta_eff[i] = a.adv_q[i] - x[i];
  a.snr_db = metrics::snr_db(x, a.delta_eff);
  return a;
}

}  // namespace detail

// Untargeted PGD: ascend the teacher-forced loss on the reference transcript.
inline AttackOutcome pgd_untargeted(const model::SubjectModel& model,
                                    const audio::AudioExample& ex,
                                    const AttackConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const auto& x = ex.waveform;
  const double eps = detail::resolve_epsilon(cfg, x);
  if (!(eps > 0.0)) throw ValidationError("resolved epsilon must be positive");
  const double lr = detail::resolve_lr(cfg, eps, 0.1);
  const std::string loss_lang = model.handle().multilingual ? ex.language : "";
  const auto target = model::make_target(model.tokenizer(), ex.reference_text);

  std::vector<double> delta(x.size(), 0.0);
  for (int step = 0; step < cfg.steps; ++step) {
    const auto lv =
        detail::step_loss(model, add_clip(x, delta), target, loss_lang, nullptr, step);
    const auto& g = lv.gradient_wrt_input;
    if (cfg.norm == Norm::Linf) {
      for (std::size_t i = 0; i < delta.size(); ++i) {
        if (g[i] > 0.0) delta[i] += lr;
        else if (g[i] < 0.0) delta[i] -= lr;
      }
    } else {
      const double gn = metrics::l2_norm(g);
      if (gn > 0.0) {
        const double s = lr / gn;
        for (std::size_t i = 0; i < delta.size(); ++i) delta[i] += s * g[i];
      }
    }
    project(delta, cfg.norm, eps);
  }

  AttackOutcome out;
  out.perturbation = {delta, cfg.norm, eps, 0.0, cfg.steps, cfg.seed};
  check_norm_bound(out.perturbation);

  const auto art = detail::make_artifact(x, delta);
  out.perturbation.achieved_snr_db = art.snr_db;
  auto& r = out.result;
  r.example_id = ex.id;
  r.clean_transcript = model.transcribe(clip_unit(x)).text;
  r.adv_transcript = model.transcribe(art.adv_q).text;
  r.clean_wer = metrics::wer(ex.reference_text, r.clean_transcript).wer;
  r.adv_wer = metrics::wer(ex.reference_text, r.adv_transcript).wer;
  r.achieved_snr_db = art.snr_db;
  r.targeted_success = false;
  r.config_snapshot = config_to_json(cfg);
  r.wall_time_s = detail::elapsed_s(t0);
  return out;
}

// Targeted attack: minimize weighted cross-entropy to the target transcript
// plus c * ||delta||_2^2 inside a shrinking Linf box.
inline AttackOutcome cw_targeted(const model::SubjectModel& model,
                                 const audio::AudioExample& ex,
                                 const AttackConfig& cfg) {
  cfg.validate();
  if (cfg.target_text.empty()) {
    throw ValidationError("cw attack needs target_text");
  }
  const auto t0 = std::chrono::steady_clock::now();
  const auto& x = ex.waveform;
  const auto& p = cfg.cw;
  const double c = p.c_from_model_size
                       ? (model.handle().parameter_count < 100'000'000 ? 0.25 : 1.0)
                       : p.c;
  const std::string loss_lang =
      model.handle().multilingual
          ? (cfg.target_language.empty() ? "en" : cfg.target_language)
          : "";
  const auto target = model::make_target(model.tokenizer(), cfg.target_text);
  const std::string target_norm = metrics::normalize_text(cfg.target_text);
  std::vector<double> weights(target.tokens.size(), 1.0);
  weights.front() += p.lambda;

  AttackOutcome out;
  auto& r = out.result;
  r.example_id = ex.id;
  r.config_snapshot = config_to_json(cfg);
  r.config_snapshot["cw"]["c"] = c;
  r.clean_transcript = model.transcribe(clip_unit(x)).text;
  r.clean_wer = metrics::wer(ex.reference_text, r.clean_transcript).wer;

  std::vector<double> delta(x.size(), 0.0);
  double eps = p.initial_epsilon;
  int decays = 0;

  bool found = false;
  double best_eps = std::numeric_limits<double>::infinity();
  double best_loss = std::numeric_limits<double>::infinity();
  std::vector<double> best_delta;

  int steps_run = 0;
  if (metrics::normalize_text(r.clean_transcript) == target_norm) {
    // Nothing to do: the clean input already transcribes to the target.
    found = true;
    best_delta = delta;
  } else {
    std::vector<double> m(x.size(), 0.0), v(x.size(), 0.0);
    for (int step = 0; step < cfg.steps; ++step) {
      const auto adv = add_clip(x, delta);
      const auto lv =
          detail::step_loss(model, adv, target, loss_lang, &weights, step);
      const double t = step + 1;
      const double bc1 = 1.0 - std::pow(0.9, t);
      const double bc2 = 1.0 - std::pow(0.999, t);
      for (std::size_t i = 0; i < delta.size(); ++i) {
        const double gi = lv.gradient_wrt_input[i] + 2.0 * c * delta[i];
        m[i] = 0.9 * m[i] + 0.1 * gi;
        v[i] = 0.999 * v[i] + 0.001 * gi * gi;
        delta[i] -= p.learning_rate * (m[i] / bc1) /
                    (std::sqrt(v[i] / bc2) + 1e-8);
      }
      project(delta, Norm::Linf, eps);
      ++steps_run;

      const auto greedy = model.transcribe(add_clip(x, delta), "", 1);
      if (metrics::normalize_text(greedy.text) == target_norm) {
        const double loss_now =
            model.teacher_forced_loss(add_clip(x, delta), target, loss_lang,
                                      &weights, false)
                .total;
        if (eps < best_eps || (eps == best_eps && loss_now < best_loss)) {
          found = true;
          best_eps = eps;
          best_loss = loss_now;
          best_delta = delta;
        }
        if (decays < p.k) {
          eps *= p.alpha;
          ++decays;
          project(delta, Norm::Linf, eps);
        }
      }
      r.epsilon_trace.push_back(eps);
    }
  }

  if (found) delta = best_delta;
  out.perturbation = {delta, Norm::Linf, eps, 0.0, steps_run, cfg.seed};
  check_norm_bound(out.perturbation);

  const auto art = detail::make_artifact(x, delta);
  out.perturbation.achieved_snr_db = art.snr_db;
  r.adv_transcript = model.transcribe(art.adv_q).text;
  r.adv_wer = metrics::wer(ex.reference_text, r.adv_transcript).wer;
  r.achieved_snr_db = art.snr_db;
  r.targeted_success =
      metrics::targeted_success(r.adv_transcript, cfg.target_text, art.snr_db,
                                metrics::SuccessCriterion{});
  r.wall_time_s = detail::elapsed_s(t0);
  return out;
}

// Push the language-identification distribution toward target_language while
// leaving the audio perceptually close (high-SNR L2 ball).
inline AttackOutcome language_confusion(const model::SubjectModel& model,
                                        const audio::AudioExample& ex,
                                        const AttackConfig& cfg) {
  cfg.validate();
  if (cfg.target_language.empty()) {
    throw ValidationError("language confusion needs target_language");
  }
  const auto t0 = std::chrono::steady_clock::now();
  const auto& x = ex.waveform;
  const double eps = detail::resolve_epsilon(cfg, x);
  if (!(eps > 0.0)) throw ValidationError("resolved epsilon must be positive");
  const double lr = detail::resolve_lr(cfg, eps, 0.1);

  AttackOutcome out;
  auto& r = out.result;
  r.example_id = ex.id;
  r.config_snapshot = config_to_json(cfg);
  const auto clean = model.transcribe(clip_unit(x));
  r.clean_transcript = clean.text;
  r.clean_wer = metrics::wer(ex.reference_text, r.clean_transcript).wer;
  r.detected_language_clean = clean.detected_language;

  std::vector<double> delta(x.size(), 0.0);
  for (int step = 0; step < cfg.steps; ++step) {
    const auto lv = detail::step_lang_loss(model, add_clip(x, delta),
                                           cfg.target_language, step);
    const auto& g = lv.gradient_wrt_input;
    const double gn = metrics::l2_norm(g);
    if (gn > 0.0) {
      const double s = lr / gn;
      for (std::size_t i = 0; i < delta.size(); ++i) delta[i] -= s * g[i];
    }
    project(delta, cfg.norm, eps);
  }

  out.perturbation = {delta, cfg.norm, eps, 0.0, cfg.steps, cfg.seed};
  check_norm_bound(out.perturbation);

  const auto art = detail::make_artifact(x, delta);
  out.perturbation.achieved_snr_db = art.snr_db;
  const auto adv = model.transcribe(art.adv_q);
  r.adv_transcript = adv.text;
  r.adv_wer = metrics::wer(ex.reference_text, r.adv_transcript).wer;
  r.detected_language_adv = adv.detected_language;
  r.achieved_snr_db = art.snr_db;
  r.targeted_success = r.detected_language_adv == cfg.target_language;
  r.wall_time_s = detail::elapsed_s(t0);
  return out;
}

struct UniversalOutcome {
  Perturbation perturbation;
  std::vector<double> epoch_loss;  // mean language loss per training epoch
};

// One perturbation for the whole window, trained by cycling the training set
// with a single projected step per input per epoch.
inline UniversalOutcome universal_language_attack(
    const model::SubjectModel& model,
    const std::vector<audio::AudioExample>& train,
    const AttackConfig& cfg) {
  cfg.validate();
  if (cfg.target_language.empty()) {
    throw ValidationError("universal attack needs target_language");
  }
  if (train.empty()) throw ValidationError("universal attack needs training inputs");

  const std::size_t window = model.max_samples();
  std::vector<std::vector<double>> padded;
  padded.reserve(train.size());
  std::vector<double> norms;
  for (const auto& ex : train) {
    if (ex.waveform.size() > window) {
      throw ValidationError("training input '" + ex.id + "' exceeds the model window");
    }
    std::vector<double> p(window, 0.0);
    std::copy(ex.waveform.begin(), ex.waveform.end(), p.begin());
    padded.push_back(std::move(p));
    norms.push_back(metrics::l2_norm(ex.waveform));
  }
  std::sort(norms.begin(), norms.end());
  const std::size_t n = norms.size();
  const double median =
      n % 2 == 1 ? norms[n / 2] : 0.5 * (norms[n / 2 - 1] + norms[n / 2]);
  const double snr = cfg.has_snr_target() ? cfg.snr_target_db : 40.0;
  const double eps = cfg.has_epsilon()
                         ? cfg.epsilon
                         : metrics::epsilon_for_snr_norm(median, snr);
  const double lr = detail::resolve_lr(cfg, eps, 0.001);

  std::vector<double> delta(window, 0.0);
  UniversalOutcome out;
  int steps_run = 0;
  for (int epoch = 0; epoch < cfg.steps; ++epoch) {
    double acc = 0.0;
    for (const auto& px : padded) {
      const auto lv = detail::step_lang_loss(model, add_clip(px, delta),
                                             cfg.target_language, steps_run);
      acc += lv.total;
      const auto& g = lv.gradient_wrt_input;
      const double gn = metrics::l2_norm(g);
      if (gn > 0.0) {
        const double s = lr / gn;
        for (std::size_t i = 0; i < delta.size(); ++i) delta[i] -= s * g[i];
      }
      project(delta, Norm::L2, eps);
      ++steps_run;
    }
    out.epoch_loss.push_back(acc / static_cast<double>(padded.size()));
  }

  out.perturbation = {delta, Norm::L2, eps, 0.0, steps_run, cfg.seed};
  check_norm_bound(out.perturbation);
  if (metrics::l2_norm(delta) > 0.0) {
    // SNR of the perturbation against the median training energy.
    out.perturbation.achieved_snr_db =
        20.0 * (std::log10(median) - std::log10(metrics::l2_norm(delta)));
  } else {
    out.perturbation.achieved_snr_db = std::numeric_limits<double>::infinity();
  }
  return out;
}

}  // namespace advbench::attacks
