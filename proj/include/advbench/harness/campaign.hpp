#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "advbench/attacks/engines.hpp"
#include "advbench/attacks/types.hpp"
#include "advbench/audio/corpus.hpp"
#include "advbench/audio/noise.hpp"
#include "advbench/audio/wav.hpp"
#include "advbench/common/rng.hpp"
#include "advbench/common/version.hpp"
#include "advbench/defense/smoothing.hpp"
#include "advbench/metrics/wer.hpp"
#include "advbench/model/subject.hpp"

namespace advbench::harness {

inline std::filesystem::path data_dir_default() {
  if (const char* env = std::getenv("ADVBENCH_DATA_DIR")) return env;
  return "fixtures/corpora";
}

struct CampaignConfig {
  std::string campaign;
  std::string model_id;
  std::string manifest;        // evaluation set, relative to the data dir
  std::string train_manifest;  // universal attacks only
  int max_utterances = 0;      // 0 keeps the whole manifest
  std::uint64_t seed = 1;
  int workers = 1;
  double wn_snr_db = 0.0;  // white-noise baseline level
  attacks::AttackConfig attack;
  std::optional<defense::SmoothingConfig> defense;
  std::filesystem::path output_dir;
  std::filesystem::path data_dir;  // empty means ADVBENCH_DATA_DIR / default

  void validate() const {
    if (campaign.empty()) throw ValidationError("campaign name is required");
    if (model_id.empty()) throw ValidationError("model id is required");
    if (manifest.empty()) throw ValidationError("manifest is required");
    if (output_dir.empty()) throw ValidationError("output_dir is required");
    if (max_utterances < 0) throw ValidationError("max_utterances must be >= 0");
    if (workers < 1) throw ValidationError("workers must be >= 1");
    if (attack.algorithm == attacks::Algorithm::universal_lang &&
        train_manifest.empty()) {
      throw ValidationError("universal attacks need a train_manifest");
    }
    attack.validate();
    if (defense) defense->validate();
  }

  std::filesystem::path resolved_data_dir() const {
    return data_dir.empty() ? data_dir_default() : data_dir;
  }
};

inline attacks::AttackConfig attack_preset(const std::string& name) {
  using attacks::Algorithm;
  using attacks::Norm;
  attacks::AttackConfig c;
  if (name == "pgd-l2-35db" || name == "pgd-l2-40db") {
    c.algorithm = Algorithm::pgd;
    c.norm = Norm::L2;
    c.snr_target_db = name == "pgd-l2-35db" ? 35.0 : 40.0;
    c.steps = 200;
  } else if (name == "pgd-linf-5e3" || name == "pgd-linf-15e4") {
    c.algorithm = Algorithm::pgd;
    c.norm = Norm::Linf;
    c.epsilon = name == "pgd-linf-5e3" ? 0.005 : 0.0015;
    c.steps = 200;
  } else if (name == "cw-default") {
    c.algorithm = Algorithm::cw;
    c.steps = 2000;
  } else if (name == "lang-45db") {
    c.algorithm = Algorithm::lang_confusion;
    c.norm = Norm::L2;
    c.snr_target_db = 45.0;
    c.steps = 30;
  } else if (name == "universal-40db") {
    c.algorithm = Algorithm::universal_lang;
    c.norm = Norm::L2;
    c.snr_target_db = 40.0;
    c.steps = 2000;
    c.relative_learning_rate = 0.001;
  } else if (name == "none") {
    c.algorithm = Algorithm::none;
  } else if (name == "white-noise-0db") {
    c.algorithm = Algorithm::white_noise;
    c.snr_target_db = 0.0;
  } else {
    throw ValidationError("unknown attack preset '" + name + "'");
  }
  return c;
}

namespace detail {

inline void apply_attack_overrides(attacks::AttackConfig& c,
                                   const nlohmann::json& j) {
  if (j.contains("algorithm")) {
    c.algorithm = attacks::algorithm_from_string(j.at("algorithm"));
  }
  if (j.contains("norm")) c.norm = attacks::norm_from_string(j.at("norm"));
  if (j.contains("epsilon")) c.epsilon = j.at("epsilon");
  if (j.contains("snr_target_db")) c.snr_target_db = j.at("snr_target_db");
  if (j.contains("steps")) c.steps = j.at("steps");
  if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate");
  if (j.contains("relative_learning_rate")) {
    c.relative_learning_rate = j.at("relative_learning_rate");
  }
  if (j.contains("target_text")) c.target_text = j.at("target_text");
  if (j.contains("target_language")) c.target_language = j.at("target_language");
  if (j.contains("cw")) {
    const auto& w = j.at("cw");
    if (w.contains("c")) {
      c.cw.c = w.at("c");
      c.cw.c_from_model_size = false;
    }
    if (w.contains("lambda")) c.cw.lambda = w.at("lambda");
    if (w.contains("alpha")) c.cw.alpha = w.at("alpha");
    if (w.contains("k")) c.cw.k = w.at("k");
    if (w.contains("initial_epsilon")) c.cw.initial_epsilon = w.at("initial_epsilon");
    if (w.contains("learning_rate")) c.cw.learning_rate = w.at("learning_rate");
  }
}

}  // namespace detail

inline CampaignConfig parse_campaign_config(const nlohmann::json& j) {
  CampaignConfig c;
  try {
    c.campaign = j.at("campaign");
    c.model_id = j.at("model");
    c.manifest = j.at("manifest");
    if (j.contains("train_manifest")) c.train_manifest = j.at("train_manifest");
    if (j.contains("max_utterances")) c.max_utterances = j.at("max_utterances");
    if (j.contains("seed")) c.seed = j.at("seed");
    if (j.contains("workers")) c.workers = j.at("workers");
    if (j.contains("wn_snr_db")) c.wn_snr_db = j.at("wn_snr_db");
    if (j.contains("output_dir")) {
      c.output_dir = std::filesystem::path(std::string(j.at("output_dir")));
    }
    if (j.contains("data_dir")) {
      c.data_dir = std::filesystem::path(std::string(j.at("data_dir")));
    }

    const auto& a = j.at("attack");
    if (a.contains("preset")) {
      c.attack = attack_preset(a.at("preset"));
    }
    detail::apply_attack_overrides(c.attack, a);

    if (j.contains("defense") && !j.at("defense").is_null()) {
      const auto& d = j.at("defense");
      defense::SmoothingConfig s;
      if (d.contains("sigma")) s.sigma = d.at("sigma");
      if (d.contains("n_draws")) s.n_draws = d.at("n_draws");
      if (d.contains("vote")) {
        const std::string v = d.at("vote");
        if (v == "single") s.vote = defense::SmoothingConfig::Vote::single;
        else if (v == "majority_exact") {
          s.vote = defense::SmoothingConfig::Vote::majority_exact;
        } else {
          throw ValidationError("unknown smoothing vote '" + v + "'");
        }
      }
      c.defense = s;
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("campaign config: ") + e.what());
  }
  if (c.output_dir.empty()) c.output_dir = "out/" + c.campaign;
  return c;
}

// One scored channel of a result row: enough to recompute pooled WER exactly.
struct Scored {
  std::string transcript;
  double wer = 0.0;
  long edits = 0;
  long ref_len = 0;
};

struct UtteranceRow {
  std::string id;
  std::string status = "ok";  // ok | error
  std::string error;
  std::string language;
  std::string reference_text;
  Scored clean, adv, wn;
  std::optional<Scored> defended_clean, defended_adv;
  double achieved_snr_db = 0.0;
  bool targeted_success = false;
  std::string detected_language_clean;
  std::string detected_language_adv;
  int steps_run = 0;
  std::uint64_t seed = 0;
  double wall_time_s = 0.0;
  std::string adv_wav;    // relative to the output dir
  std::string delta_wav;
};

namespace detail {

inline nlohmann::json scored_to_json(const Scored& s) {
  return {{"transcript", s.transcript},
          {"wer", s.wer},
          {"edits", s.edits},
          {"ref_len", s.ref_len}};
}

inline Scored scored_from_json(const nlohmann::json& j) {
  Scored s;
  s.transcript = j.at("transcript");
  s.wer = j.at("wer");
  s.edits = j.at("edits");
  s.ref_len = j.at("ref_len");
  return s;
}

inline nlohmann::json row_to_json(const UtteranceRow& r) {
  nlohmann::json j{{"id", r.id}, {"status", r.status}};
  if (r.status != "ok") {
    j["error"] = r.error;
    return j;
  }
  j["language"] = r.language;
  j["reference_text"] = r.reference_text;
  j["clean"] = scored_to_json(r.clean);
  j["adv"] = scored_to_json(r.adv);
  j["wn"] = scored_to_json(r.wn);
  if (r.defended_clean) j["defended_clean"] = scored_to_json(*r.defended_clean);
  if (r.defended_adv) j["defended_adv"] = scored_to_json(*r.defended_adv);
  if (std::isfinite(r.achieved_snr_db)) {
    j["achieved_snr_db"] = r.achieved_snr_db;
  } else {
    j["achieved_snr_db"] = "inf";
  }
  j["targeted_success"] = r.targeted_success;
  if (!r.detected_language_clean.empty()) {
    j["detected_language_clean"] = r.detected_language_clean;
  }
  if (!r.detected_language_adv.empty()) {
    j["detected_language_adv"] = r.detected_language_adv;
  }
  j["steps_run"] = r.steps_run;
  j["seed"] = r.seed;
  j["wall_time_s"] = r.wall_time_s;
  j["adv_wav"] = r.adv_wav;
  j["delta_wav"] = r.delta_wav;
  return j;
}

inline UtteranceRow row_from_json(const nlohmann::json& j) {
  UtteranceRow r;
  r.id = j.at("id");
  r.status = j.at("status");
  if (r.status != "ok") {
    r.error = j.value("error", "");
    return r;
  }
  r.language = j.at("language");
  r.reference_text = j.at("reference_text");
  r.clean = scored_from_json(j.at("clean"));
  r.adv = scored_from_json(j.at("adv"));
  r.wn = scored_from_json(j.at("wn"));
  if (j.contains("defended_clean")) {
    r.defended_clean = scored_from_json(j.at("defended_clean"));
  }
  if (j.contains("defended_adv")) {
    r.defended_adv = scored_from_json(j.at("defended_adv"));
  }
  if (j.at("achieved_snr_db").is_string()) {
    r.achieved_snr_db = std::numeric_limits<double>::infinity();
  } else {
    r.achieved_snr_db = j.at("achieved_snr_db");
  }
  r.targeted_success = j.at("targeted_success");
  r.detected_language_clean = j.value("detected_language_clean", "");
  r.detected_language_adv = j.value("detected_language_adv", "");
  r.steps_run = j.at("steps_run");
  r.seed = j.at("seed");
  r.wall_time_s = j.at("wall_time_s");
  r.adv_wav = j.at("adv_wav");
  r.delta_wav = j.at("delta_wav");
  return r;
}

inline Scored score(const std::string& reference, const std::string& hypothesis) {
  Scored s;
  s.transcript = hypothesis;
  const auto rep = metrics::wer(reference, hypothesis);
  s.wer = rep.wer;
  s.edits = static_cast<long>(rep.substitutions + rep.insertions + rep.deletions);
  s.ref_len = static_cast<long>(rep.ref_len);
  return s;
}

}  // namespace detail

struct CampaignSummary {
  nlohmann::json to_json() const { return doc; }
  nlohmann::json doc;
  bool failed = false;  // > 50% utterance errors
};

namespace detail {

struct Aggregates {
  double clean_wer = 0.0, adv_wer = 0.0, wn_wer = 0.0;
  std::optional<double> defended_clean_wer, defended_adv_wer;
  std::optional<double> mean_snr_db;
  std::optional<double> targeted_accuracy;
  std::optional<double> language_flip_rate;
  int n_ok = 0, n_error = 0;
};

inline double pooled(long edits, long ref) {
  if (ref <= 0) return 0.0;
  return static_cast<double>(edits) / static_cast<double>(ref);
}

inline Aggregates aggregate_rows(const std::vector<UtteranceRow>& rows,
                                 const CampaignConfig& cfg) {
  Aggregates a;
  long ce = 0, cr = 0, ae = 0, ar = 0, we = 0, wr = 0;
  long dce = 0, dcr = 0, dae = 0, dar = 0;
  bool any_defended = false;
  double snr_sum = 0.0;
  int snr_n = 0;
  int successes = 0;
  int flips = 0, flip_denom = 0;
  for (const auto& r : rows) {
    if (r.status != "ok") {
      ++a.n_error;
      continue;
    }
    ++a.n_ok;
    ce += r.clean.edits;
    cr += r.clean.ref_len;
    ae += r.adv.edits;
    ar += r.adv.ref_len;
    we += r.wn.edits;
    wr += r.wn.ref_len;
    if (r.defended_clean && r.defended_adv) {
      any_defended = true;
      dce += r.defended_clean->edits;
      dcr += r.defended_clean->ref_len;
      dae += r.defended_adv->edits;
      dar += r.defended_adv->ref_len;
    }
    if (std::isfinite(r.achieved_snr_db)) {
      snr_sum += r.achieved_snr_db;
      ++snr_n;
    }
    if (r.targeted_success) ++successes;
    if (!r.detected_language_adv.empty()) {
      ++flip_denom;
      if (r.detected_language_adv != r.language) ++flips;
    }
  }
  a.clean_wer = pooled(ce, cr);
  a.adv_wer = pooled(ae, ar);
  a.wn_wer = pooled(we, wr);
  if (any_defended) {
    a.defended_clean_wer = pooled(dce, dcr);
    a.defended_adv_wer = pooled(dae, dar);
  }
  if (snr_n > 0) a.mean_snr_db = snr_sum / snr_n;
  if (cfg.attack.algorithm == attacks::Algorithm::cw && a.n_ok > 0) {
    a.targeted_accuracy = static_cast<double>(successes) / a.n_ok;
  }
  if ((cfg.attack.algorithm == attacks::Algorithm::lang_confusion ||
       cfg.attack.algorithm == attacks::Algorithm::universal_lang) &&
      flip_denom > 0) {
    a.language_flip_rate = static_cast<double>(flips) / flip_denom;
  }
  return a;
}

}  // namespace detail

// The remaining campaign machinery: artifact persistence, the per-utterance
// pipeline, resume bookkeeping, and summary emission.
class CampaignRunner {
 public:
  explicit CampaignRunner(CampaignConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
  }

  CampaignSummary run();

 private:
  struct Prepared {
    audio::AudioExample example;
    std::uint64_t seed = 0;
  };

  UtteranceRow process(const model::SubjectModel& m, const Prepared& p,
                       const std::vector<double>* universal_delta) const;
  std::vector<double> train_universal(const model::SubjectModel& m) const;

  CampaignConfig cfg_;
};

inline UtteranceRow CampaignRunner::process(
    const model::SubjectModel& m, const Prepared& p,
    const std::vector<double>* universal_delta) const {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& ex = p.example;
  UtteranceRow row;
  row.id = ex.id;
  row.language = ex.language;
  row.reference_text = ex.reference_text;
  row.seed = p.seed;

  attacks::AttackConfig acfg = cfg_.attack;
  acfg.seed = p.seed;

  std::vector<double> x = ex.waveform;
  std::vector<double> adv_q;
  const std::string wav_rel = "adv_wav/" + ex.id + ".wav";
  const std::string delta_rel = "adv_wav/" + ex.id + ".delta.wav";

  using attacks::Algorithm;
  nlohmann::json sidecar;
  switch (acfg.algorithm) {
    case Algorithm::none: {
      adv_q = audio::quantize_int16(attacks::clip_unit(x));
      row.clean = detail::score(ex.reference_text, m.transcribe(adv_q).text);
      row.adv = row.clean;
      row.achieved_snr_db = std::numeric_limits<double>::infinity();
      row.steps_run = 0;
      sidecar["config_snapshot"] = attacks::config_to_json(acfg);
      break;
    }
    case Algorithm::white_noise: {
      const double snr =
          acfg.has_snr_target() ? acfg.snr_target_db : cfg_.wn_snr_db;
      Rng rng(derive_seed(p.seed, "white_noise"));
      adv_q = audio::quantize_int16(
          attacks::clip_unit(audio::add_white_noise(x, snr, rng)));
      row.clean = detail::score(ex.reference_text, m.transcribe(x).text);
      row.adv = detail::score(ex.reference_text, m.transcribe(adv_q).text);
      std::vector<double> delta_eff(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) delta_eff[i] = adv_q[i] - x[i];
      row.achieved_snr_db = metrics::snr_db(x, delta_eff);
      row.steps_run = 0;
      sidecar["config_snapshot"] = attacks::config_to_json(acfg);
      break;
    }
    case Algorithm::pgd: {
      const auto out = attacks::pgd_untargeted(m, ex, acfg);
      adv_q = audio::quantize_int16(attacks::add_clip(x, out.perturbation.delta));
      row.clean = detail::score(ex.reference_text, out.result.clean_transcript);
      row.adv = detail::score(ex.reference_text, out.result.adv_transcript);
      row.achieved_snr_db = out.result.achieved_snr_db;
      row.steps_run = out.perturbation.steps_run;
      sidecar["config_snapshot"] = out.result.config_snapshot;
      sidecar["epsilon"] = out.perturbation.epsilon;
      break;
    }
    case Algorithm::cw: {
      const auto out = attacks::cw_targeted(m, ex, acfg);
      adv_q = audio::quantize_int16(attacks::add_clip(x, out.perturbation.delta));
      row.clean = detail::score(ex.reference_text, out.result.clean_transcript);
      row.adv = detail::score(ex.reference_text, out.result.adv_transcript);
      row.achieved_snr_db = out.result.achieved_snr_db;
      row.targeted_success = out.result.targeted_success;
      row.steps_run = out.perturbation.steps_run;
      sidecar["config_snapshot"] = out.result.config_snapshot;
      sidecar["epsilon"] = out.perturbation.epsilon;
      sidecar["target_text"] = acfg.target_text;
      break;
    }
    case Algorithm::lang_confusion: {
      const auto out = attacks::language_confusion(m, ex, acfg);
      adv_q = audio::quantize_int16(attacks::add_clip(x, out.perturbation.delta));
      row.clean = detail::score(ex.reference_text, out.result.clean_transcript);
      row.adv = detail::score(ex.reference_text, out.result.adv_transcript);
      row.achieved_snr_db = out.result.achieved_snr_db;
      row.targeted_success = out.result.targeted_success;
      row.detected_language_clean = out.result.detected_language_clean;
      row.detected_language_adv = out.result.detected_language_adv;
      row.steps_run = out.perturbation.steps_run;
      sidecar["config_snapshot"] = out.result.config_snapshot;
      sidecar["epsilon"] = out.perturbation.epsilon;
      sidecar["target_language"] = acfg.target_language;
      break;
    }
    case Algorithm::universal_lang: {
      if (universal_delta == nullptr) {
        throw ValidationError("universal delta missing");
      }
      std::vector<double> px(universal_delta->size(), 0.0);
      if (x.size() > px.size()) {
        throw ValidationError("utterance exceeds the universal window");
      }
      std::copy(x.begin(), x.end(), px.begin());
      adv_q = audio::quantize_int16(attacks::add_clip(px, *universal_delta));
      const auto clean_tr = m.transcribe(x);
      const auto adv_tr = m.transcribe(adv_q);
      row.clean = detail::score(ex.reference_text, clean_tr.text);
      row.adv = detail::score(ex.reference_text, adv_tr.text);
      row.detected_language_clean = clean_tr.detected_language;
      row.detected_language_adv = adv_tr.detected_language;
      std::vector<double> delta_eff(px.size());
      for (std::size_t i = 0; i < px.size(); ++i) delta_eff[i] = adv_q[i] - px[i];
      row.achieved_snr_db = metrics::snr_db(x, delta_eff);
      row.targeted_success =
          !acfg.target_language.empty() &&
          row.detected_language_adv == acfg.target_language;
      row.steps_run = 0;  // applied, not trained, per utterance
      sidecar["config_snapshot"] = attacks::config_to_json(acfg);
      x = px;  // the persisted artifact spans the whole window
      break;
    }
  }

  // White-noise baseline column at the campaign's baseline level. Always on
  // the utterance's own extent, not the padded attack window, so the level
  // means the same thing in every campaign.
  if (acfg.algorithm != Algorithm::white_noise) {
    Rng rng(derive_seed(p.seed, "wn"));
    const auto wn_q = audio::quantize_int16(attacks::clip_unit(
        audio::add_white_noise(ex.waveform, cfg_.wn_snr_db, rng)));
    row.wn = detail::score(ex.reference_text, m.transcribe(wn_q).text);
  } else {
    row.wn = row.adv;
  }

  if (cfg_.defense) {
    auto dcfg = *cfg_.defense;
    dcfg.seed = derive_seed(p.seed, "defense/clean");
    row.defended_clean = detail::score(
        ex.reference_text,
        defense::smooth_transcribe(m, ex.waveform, dcfg).text);
    dcfg.seed = derive_seed(p.seed, "defense/adv");
    row.defended_adv = detail::score(
        ex.reference_text, defense::smooth_transcribe(m, adv_q, dcfg).text);
  }

  // Persist the artifact pair plus its self-describing sidecar.
  std::vector<double> delta_eff(adv_q.size());
  for (std::size_t i = 0; i < adv_q.size(); ++i) delta_eff[i] = adv_q[i] - x[i];
  audio::write_wav(adv_q, cfg_.output_dir / wav_rel, ex.sample_rate);
  audio::write_wav(delta_eff, cfg_.output_dir / delta_rel, ex.sample_rate);
  row.adv_wav = wav_rel;
  row.delta_wav = delta_rel;

  sidecar["id"] = ex.id;
  sidecar["model_id"] = cfg_.model_id;
  sidecar["seed"] = p.seed;
  sidecar["achieved_snr_db"] = std::isfinite(row.achieved_snr_db)
                                   ? nlohmann::json(row.achieved_snr_db)
                                   : nlohmann::json("inf");
  sidecar["steps_run"] = row.steps_run;
  sidecar["source_audio"] = ex.source_path;
  sidecar["reference_text"] = ex.reference_text;
  sidecar["language"] = ex.language;
  sidecar["clean_transcript"] = row.clean.transcript;
  sidecar["adv_transcript"] = row.adv.transcript;
  {
    std::ofstream os(cfg_.output_dir / ("adv_wav/" + ex.id + ".json"));
    os << sidecar.dump(2) << '\n';
  }

  row.wall_time_s = std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
  return row;
}

inline std::vector<double> CampaignRunner::train_universal(
    const model::SubjectModel& m) const {
  const auto mf =
      audio::load_manifest(cfg_.resolved_data_dir() / cfg_.train_manifest);
  std::vector<audio::AudioExample> train;
  for (const auto& e : mf.entries) train.push_back(audio::load_example(e));

  attacks::AttackConfig acfg = cfg_.attack;
  acfg.seed = cfg_.seed;
  const auto out = attacks::universal_language_attack(m, train, acfg);

  // Exact float payload for resume; a listenable rendering for inspection.
  const auto bin_path = cfg_.output_dir / "universal_delta.bin";
  {
    std::ofstream os(bin_path, std::ios::binary);
    const auto& d = out.perturbation.delta;
    os.write(reinterpret_cast<const char*>(d.data()),
             static_cast<std::streamsize>(d.size() * sizeof(double)));
  }
  audio::write_wav(out.perturbation.delta, cfg_.output_dir / "universal_delta.wav",
                   m.sample_rate());
  nlohmann::json meta{{"config_snapshot", attacks::config_to_json(acfg)},
                      {"epsilon", out.perturbation.epsilon},
                      {"steps_run", out.perturbation.steps_run},
                      {"epoch_loss", out.epoch_loss},
                      {"train_manifest", cfg_.train_manifest}};
  std::ofstream os(cfg_.output_dir / "universal_delta.json");
  os << meta.dump(2) << '\n';
  return out.perturbation.delta;
}

inline CampaignSummary CampaignRunner::run() {
  namespace fs = std::filesystem;
  fs::create_directories(cfg_.output_dir / "adv_wav");

  auto mf = audio::load_manifest(cfg_.resolved_data_dir() / cfg_.manifest);
  if (cfg_.max_utterances > 0) {
    mf.entries =
        audio::subsample(mf, static_cast<std::size_t>(cfg_.max_utterances),
                         cfg_.seed);
  }
  if (mf.entries.empty()) throw ValidationError("campaign has no utterances");

  // Resume: rows already on disk are kept verbatim.
  std::map<std::string, UtteranceRow> done;
  const auto results_path = cfg_.output_dir / "results.jsonl";
  if (fs::exists(results_path)) {
    std::ifstream is(results_path);
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const auto row = detail::row_from_json(nlohmann::json::parse(line));
      done.emplace(row.id, row);
    }
  }

  std::vector<Prepared> todo;
  for (const auto& e : mf.entries) {
    if (done.count(e.id)) continue;
    Prepared p;
    p.example = audio::load_example(e);
    p.seed = derive_seed(cfg_.seed, e.id);
    todo.push_back(std::move(p));
  }

  if (!todo.empty()) {
    std::unique_ptr<model::SubjectModel> shared;  // universal training only
    std::vector<double> universal_delta;
    if (cfg_.attack.algorithm == attacks::Algorithm::universal_lang) {
      const auto bin_path = cfg_.output_dir / "universal_delta.bin";
      shared = model::load_model(cfg_.model_id);
      if (fs::exists(bin_path)) {
        std::ifstream is(bin_path, std::ios::binary);
        is.seekg(0, std::ios::end);
        const auto bytes = is.tellg();
        is.seekg(0);
        universal_delta.resize(static_cast<std::size_t>(bytes) / sizeof(double));
        is.read(reinterpret_cast<char*>(universal_delta.data()), bytes);
        if (universal_delta.size() != shared->max_samples()) {
          throw ValidationError("universal_delta.bin does not match the model window");
        }
      } else {
        universal_delta = train_universal(*shared);
      }
    }

    std::ofstream out(results_path, std::ios::app);
    std::mutex io;
    std::atomic<std::size_t> next{0};
    std::atomic<bool> io_failed{false};
    const int workers =
        std::max(1, std::min<int>(cfg_.workers, static_cast<int>(todo.size())));

    auto work = [&]() {
      std::unique_ptr<model::SubjectModel> local;
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= todo.size() || io_failed.load()) break;
        UtteranceRow row;
        try {
          if (!local) {
            local = cfg_.attack.algorithm == attacks::Algorithm::universal_lang &&
                            workers == 1
                        ? std::move(shared)
                        : model::load_model(cfg_.model_id);
          }
          row = process(*local,
                        todo[i],
                        universal_delta.empty() ? nullptr : &universal_delta);
        } catch (const std::exception& e) {
          row = UtteranceRow{};
          row.id = todo[i].example.id;
          row.status = "error";
          row.error = e.what();
        }
        std::lock_guard<std::mutex> lk(io);
        out << detail::row_to_json(row).dump() << '\n';
        out.flush();
        if (!out) io_failed.store(true);
        done.emplace(row.id, row);
      }
    };

    if (workers == 1) {
      work();
    } else {
      std::vector<std::thread> pool;
      for (int w = 0; w < workers; ++w) pool.emplace_back(work);
      for (auto& t : pool) t.join();
    }
    if (io_failed.load()) throw IoError("failed writing results.jsonl");
  }

  // Summary, in manifest order, regenerated from rows every run.
  std::vector<UtteranceRow> rows;
  for (const auto& e : mf.entries) {
    auto it = done.find(e.id);
    if (it == done.end()) {
      throw IoError("missing result row for utterance '" + e.id + "'");
    }
    rows.push_back(it->second);
  }
  const auto agg = detail::aggregate_rows(rows, cfg_);

  CampaignSummary summary;
  auto& doc = summary.doc;
  doc["campaign"] = cfg_.campaign;
  doc["model_id"] = cfg_.model_id;
  doc["manifest"] = cfg_.manifest;
  doc["seed"] = cfg_.seed;
  doc["attack"] = attacks::config_to_json(cfg_.attack);
  if (cfg_.defense) {
    doc["defense"] = {
        {"sigma", cfg_.defense->sigma},
        {"n_draws", cfg_.defense->n_draws},
        {"vote", cfg_.defense->vote == defense::SmoothingConfig::Vote::single
                     ? "single"
                     : "majority_exact"}};
  }
  doc["version"] = kVersion;
  doc["utterance_ids"] = [&] {
    std::vector<std::string> ids;
    for (const auto& e : mf.entries) ids.push_back(e.id);
    return ids;
  }();
  {
    std::set<std::string> langs;
    for (const auto& r : rows) {
      if (r.status == "ok") langs.insert(r.language);
    }
    doc["source_language"] = langs.size() == 1 ? *langs.begin() : "";
  }
  doc["n_utterances"] = rows.size();
  doc["n_ok"] = agg.n_ok;
  doc["n_excluded"] = agg.n_error;
  nlohmann::json ja{{"clean_wer", agg.clean_wer},
                    {"adv_wer", agg.adv_wer},
                    {"wn_wer", agg.wn_wer}};
  if (agg.defended_clean_wer) ja["defended_clean_wer"] = *agg.defended_clean_wer;
  if (agg.defended_adv_wer) ja["defended_adv_wer"] = *agg.defended_adv_wer;
  if (agg.mean_snr_db) ja["mean_snr_db"] = *agg.mean_snr_db;
  if (agg.targeted_accuracy) ja["targeted_accuracy"] = *agg.targeted_accuracy;
  if (agg.language_flip_rate) ja["language_flip_rate"] = *agg.language_flip_rate;
  doc["aggregates"] = ja;

  if (cfg_.attack.algorithm == attacks::Algorithm::universal_lang) {
    std::map<std::string, std::pair<long, long>> per_lang;
    for (const auto& r : rows) {
      if (r.status != "ok") continue;
      auto& [e, n] = per_lang[r.language];
      e += r.adv.edits;
      n += r.adv.ref_len;
    }
    nlohmann::json pl;
    for (const auto& [lang, en] : per_lang) {
      pl[lang] = detail::pooled(en.first, en.second);
    }
    doc["per_language_adv_wer"] = pl;
  }

  summary.failed = agg.n_error * 2 > static_cast<int>(rows.size());
  doc["failed"] = summary.failed;
  doc["generated_at"] = [] {
    char buf[32];
    const auto t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return std::string(buf);
  }();

  std::ofstream os(cfg_.output_dir / "summary.json");
  os << doc.dump(2) << '\n';
  if (!os) throw IoError("failed writing summary.json");
  return summary;
}

inline CampaignSummary run_campaign(const CampaignConfig& cfg) {
  return CampaignRunner(cfg).run();
}

}  // namespace advbench::harness
