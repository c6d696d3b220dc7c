#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "advbench/audio/corpus.hpp"
#include "advbench/audio/wav.hpp"
#include "advbench/harness/campaign.hpp"
#include "advbench/harness/report.hpp"
#include "advbench/metrics/snr.hpp"
#include "advbench/model/subject.hpp"

namespace advbench::harness {

struct VerifyReport {
  int n_checked = 0;
  std::vector<std::string> problems;
  bool ok() const { return problems.empty(); }
};

// Re-derives every persisted artifact in a campaign directory from first
// principles: the perturbation from the adversarial and source audio, the
// achieved SNR from the recovered perturbation (within 1e-6 dB of the stored
// value), and the transcript by running the model again (exact match).
inline VerifyReport verify_campaign(const std::filesystem::path& dir) {
  VerifyReport rep;
  const auto summary = detail::load_summary(dir / "summary.json");
  const std::string model_id = summary.doc.at("model_id");
  const auto model = model::load_model(model_id);

  std::ifstream is(dir / "results.jsonl");
  if (!is) throw IoError("cannot open " + (dir / "results.jsonl").string());
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto row = detail::row_from_json(nlohmann::json::parse(line));
    if (row.status != "ok") continue;
    ++rep.n_checked;
    auto problem = [&](const std::string& what) {
      rep.problems.push_back(row.id + ": " + what);
    };

    nlohmann::json sidecar;
    try {
      sidecar = detail::load_json_file(dir / "adv_wav" / (row.id + ".json"));
    } catch (const std::exception& e) {
      problem(std::string("sidecar unreadable: ") + e.what());
      continue;
    }

    std::vector<double> adv, x, delta_stored;
    try {
      adv = audio::load_audio((dir / row.adv_wav).string());
      x = audio::load_audio(sidecar.at("source_audio").get<std::string>());
      delta_stored = audio::load_audio((dir / row.delta_wav).string());
    } catch (const std::exception& e) {
      problem(std::string("audio unreadable: ") + e.what());
      continue;
    }
    if (x.size() > adv.size()) {
      problem("source audio longer than adversarial audio");
      continue;
    }

    std::vector<double> delta(adv.size());
    for (std::size_t i = 0; i < adv.size(); ++i) {
      delta[i] = adv[i] - (i < x.size() ? x[i] : 0.0);
    }
    if (delta_stored != delta) problem("stored delta does not equal adv - source");

    const double snr = metrics::snr_db(x, delta);
    const double stored = row.achieved_snr_db;
    const bool both_inf = std::isinf(snr) && std::isinf(stored);
    if (!both_inf && !(std::abs(snr - stored) <= 1e-6)) {
      problem("snr mismatch: recomputed " + std::to_string(snr) + " vs stored " +
              std::to_string(stored));
    }

    const auto transcript = model->transcribe(adv).text;
    if (transcript != sidecar.at("adv_transcript").get<std::string>()) {
      problem("transcript mismatch: model now says '" + transcript + "'");
    }
    if (sidecar.at("adv_transcript").get<std::string>() != row.adv.transcript) {
      problem("sidecar and results row disagree on the transcript");
    }
  }
  if (rep.n_checked == 0) {
    rep.problems.push_back("no completed utterances to verify");
  }
  return rep;
}

}  // namespace advbench::harness
