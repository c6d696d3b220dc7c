#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "advbench/common/errors.hpp"

namespace advbench::harness {

inline constexpr const char* kTableHeader =
    "model,attack,setting,utterances,excluded,clean_wer,wn_wer,adv_wer,"
    "targeted_acc,mean_snr_db,defended_clean_wer,defended_adv_wer";

inline constexpr const char* kFigureHeader =
    "source_language,training_hours,target_language,wer";

namespace detail {

inline std::string fmt(double v, const char* spec) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

inline std::string wer_cell(double v) { return fmt(v, "%.6f"); }

inline nlohmann::json load_json_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

// Compact human-readable descriptor of the attack setting, derived from the
// config snapshot stored in the summary.
inline std::string setting_label(const nlohmann::json& attack) {
  const std::string alg = attack.at("algorithm");
  auto level = [&]() -> std::string {
    if (attack.contains("snr_target_db")) {
      return fmt(attack.at("snr_target_db").get<double>(), "%g") + "db";
    }
    if (attack.contains("epsilon")) {
      return "eps" + fmt(attack.at("epsilon").get<double>(), "%g");
    }
    return "";
  };
  if (alg == "pgd") {
    const std::string norm = attack.at("norm");
    return norm + "@" + level();
  }
  if (alg == "cw") return "cw";
  if (alg == "lang_confusion") {
    return "lang->" + attack.value("target_language", std::string("?")) + "@" +
           level();
  }
  if (alg == "universal_lang") {
    std::string s = "universal";
    if (attack.contains("target_language")) {
      s += "->" + attack.at("target_language").get<std::string>();
    }
    return s + "@" + level();
  }
  if (alg == "white_noise") return "wn@" + level();
  return alg;
}

struct SummaryView {
  nlohmann::json doc;
  std::filesystem::path path;

  const nlohmann::json& aggregates() const { return doc.at("aggregates"); }
};

inline SummaryView load_summary(const std::filesystem::path& path) {
  SummaryView v{load_json_file(path), path};
  try {
    (void)v.doc.at("model_id").get<std::string>();
    (void)v.doc.at("attack").at("algorithm").get<std::string>();
    (void)v.doc.at("n_utterances").get<int>();
    (void)v.doc.at("n_excluded").get<int>();
    (void)v.aggregates().at("clean_wer").get<double>();
    (void)v.aggregates().at("adv_wer").get<double>();
    (void)v.aggregates().at("wn_wer").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("summary " + path.string() +
                          " does not match the campaign schema: " + e.what());
  }
  return v;
}

}  // namespace detail

// One CSV row per campaign summary, columns in kTableHeader order. Cells
// that do not apply to a campaign (targeted accuracy for untargeted
// attacks, defended WERs without a defense) are left empty.
inline std::string emit_table(const std::vector<std::filesystem::path>& summaries) {
  std::string out = std::string(kTableHeader) + "\n";
  std::vector<detail::SummaryView> views;
  for (const auto& p : summaries) views.push_back(detail::load_summary(p));
  for (const auto& v : views) {
    const auto& agg = v.aggregates();
    std::vector<std::string> cells;
    cells.push_back(v.doc.at("model_id"));
    cells.push_back(v.doc.at("attack").at("algorithm"));
    cells.push_back(detail::setting_label(v.doc.at("attack")));
    cells.push_back(std::to_string(v.doc.at("n_utterances").get<int>()));
    cells.push_back(std::to_string(v.doc.at("n_excluded").get<int>()));
    cells.push_back(detail::wer_cell(agg.at("clean_wer")));
    cells.push_back(detail::wer_cell(agg.at("wn_wer")));
    cells.push_back(detail::wer_cell(agg.at("adv_wer")));
    cells.push_back(agg.contains("targeted_accuracy")
                        ? detail::wer_cell(agg.at("targeted_accuracy"))
                        : "");
    cells.push_back(agg.contains("mean_snr_db")
                        ? detail::fmt(agg.at("mean_snr_db"), "%.3f")
                        : "");
    cells.push_back(agg.contains("defended_clean_wer")
                        ? detail::wer_cell(agg.at("defended_clean_wer"))
                        : "");
    cells.push_back(agg.contains("defended_adv_wer")
                        ? detail::wer_cell(agg.at("defended_adv_wer"))
                        : "");
    for (std::size_t i = 0; i < cells.size(); ++i) {
      out += cells[i];
      out += i + 1 == cells.size() ? '\n' : ',';
    }
  }
  return out;
}

// Figure data: language-confusion and universal campaigns become rows of
// (source language, training hours, target language, aggregate adversarial
// WER), sorted by ascending training hours. A universal campaign contributes
// one row per source language, labeled with target "universal".
inline std::string emit_language_figure_data(
    const std::vector<std::filesystem::path>& summaries,
    const std::filesystem::path& training_hours_file) {
  const auto hours_doc = detail::load_json_file(training_hours_file);
  auto hours_for = [&](const std::string& lang) -> double {
    if (!hours_doc.contains(lang)) {
      throw ValidationError("no training-hours entry for language '" + lang +
                            "' in " + training_hours_file.string());
    }
    return hours_doc.at(lang);
  };

  struct Row {
    std::string source;
    double hours;
    std::string target;
    double wer;
  };
  std::vector<Row> rows;
  for (const auto& p : summaries) {
    const auto v = detail::load_summary(p);
    const std::string alg = v.doc.at("attack").at("algorithm");
    if (alg == "universal_lang") {
      if (!v.doc.contains("per_language_adv_wer")) {
        throw ValidationError("summary " + p.string() +
                              " lacks per-language aggregates");
      }
      for (const auto& [lang, wer] : v.doc.at("per_language_adv_wer").items()) {
        rows.push_back({lang, hours_for(lang), "universal", wer});
      }
    } else if (alg == "lang_confusion") {
      const std::string source = v.doc.value("source_language", std::string());
      if (source.empty()) {
        throw ValidationError("summary " + p.string() +
                              " mixes source languages");
      }
      const std::string target =
          v.doc.at("attack").value("target_language", std::string());
      rows.push_back(
          {source, hours_for(source), target, v.aggregates().at("adv_wer")});
    } else {
      throw ValidationError("summary " + p.string() +
                            " is not a language attack campaign");
    }
  }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.hours != b.hours) return a.hours < b.hours;
    if (a.source != b.source) return a.source < b.source;
    return a.target < b.target;
  });

  std::string out = std::string(kFigureHeader) + "\n";
  for (const auto& r : rows) {
    out += r.source + "," + detail::fmt(r.hours, "%.6f") + "," + r.target +
           "," + detail::wer_cell(r.wer) + "\n";
  }
  return out;
}

}  // namespace advbench::harness
