#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "advbench/audio/wav.hpp"
#include "advbench/harness/campaign.hpp"
#include "advbench/harness/report.hpp"
#include "advbench/harness/verify.hpp"
#include "advbench/model/checkpoint.hpp"
#include "support/summary_oracle.hpp"
#include "support/unit_model.hpp"

namespace fs = std::filesystem;
using namespace advbench;

namespace {

// One shared workspace per test run: a unit-scale checkpoint the harness can
// load by id, plus a three-utterance corpus. The unit model's window is 0.8 s.
struct Workspace {
  fs::path root;

  Workspace() {
    root = fs::temp_directory_path() /
           ("advbench_harness_" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root / "models");
    fs::create_directories(root / "data" / "wav");
    model::save_checkpoint(testsupport::unit_checkpoint(77),
                           (root / "models" / "unit.advm").string());
    ::setenv("ADVBENCH_MODEL_DIR", (root / "models").c_str(), 1);

    const struct {
      const char* id;
      const char* lang;
      const char* text;
      double f;
      int n;
    } utts[] = {
        {"u_en", "en", "zero uno due", 440.0, 8000},
        {"u_it", "it", "tre quattro", 550.0, 7000},
        {"u_sr", "sr", "due due zero", 660.0, 9000},
    };
    std::ofstream mf(root / "data" / "eval.jsonl");
    for (const auto& u : utts) {
      std::vector<double> x(static_cast<std::size_t>(u.n));
      for (int i = 0; i < u.n; ++i) {
        x[static_cast<std::size_t>(i)] =
            0.3 * std::sin(2.0 * 3.14159265358979 * u.f * i / 16000.0);
      }
      x = audio::quantize_int16(x);
      audio::write_wav(x, (root / "data" / "wav" / (std::string(u.id) + ".wav")).string(),
                       16000);
      mf << nlohmann::json{{"id", u.id},
                           {"audio", std::string("wav/") + u.id + ".wav"},
                           {"text", u.text},
                           {"lang", u.lang}}
                .dump()
         << '\n';
    }
    // A second manifest where two of three utterances exceed the model
    // window, to exercise the failure policy.
    std::vector<double> long_x(20000, 0.0);
    for (std::size_t i = 0; i < long_x.size(); ++i) {
      long_x[i] = 0.2 * std::sin(0.17 * static_cast<double>(i));
    }
    long_x = audio::quantize_int16(long_x);
    audio::write_wav(long_x, (root / "data" / "wav" / "too_long_a.wav").string(), 16000);
    audio::write_wav(long_x, (root / "data" / "wav" / "too_long_b.wav").string(), 16000);
    std::ofstream bad(root / "data" / "broken.jsonl");
    bad << nlohmann::json{{"id", "ok_one"}, {"audio", "wav/u_en.wav"},
                          {"text", "zero uno due"}, {"lang", "en"}}
               .dump()
        << '\n';
    bad << nlohmann::json{{"id", "long_a"}, {"audio", "wav/too_long_a.wav"},
                          {"text", "zero"}, {"lang", "en"}}
               .dump()
        << '\n';
    bad << nlohmann::json{{"id", "long_b"}, {"audio", "wav/too_long_b.wav"},
                          {"text", "uno"}, {"lang", "en"}}
               .dump()
        << '\n';
    // Universal training pair.
    std::ofstream um(root / "data" / "utrain.jsonl");
    um << nlohmann::json{{"id", "u_en"}, {"audio", "wav/u_en.wav"},
                         {"text", "zero uno due"}, {"lang", "en"}}
              .dump()
       << '\n';
    um << nlohmann::json{{"id", "u_it"}, {"audio", "wav/u_it.wav"},
                         {"text", "tre quattro"}, {"lang", "it"}}
              .dump()
       << '\n';
    std::ofstream hours(root / "data" / "training_hours.json");
    hours << nlohmann::json{{"en", 2.5}, {"it", 1.25}, {"sr", 0.25}}.dump() << '\n';
  }
};

Workspace& ws() {
  static Workspace w;
  return w;
}

harness::CampaignConfig base_config(const std::string& name) {
  harness::CampaignConfig c;
  c.campaign = name;
  c.model_id = "unit";
  c.manifest = "eval.jsonl";
  c.seed = 99;
  c.data_dir = ws().root / "data";
  c.output_dir = ws().root / ("out_" + name);
  return c;
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream is(p);
  REQUIRE(is.good());
  return nlohmann::json::parse(is);
}

nlohmann::json strip_timestamp(nlohmann::json j) {
  j.erase("generated_at");
  return j;
}

}  // namespace

TEST_CASE("campaign config: presets and parsing") {
  const auto pgd35 = harness::attack_preset("pgd-l2-35db");
  CHECK(pgd35.algorithm == attacks::Algorithm::pgd);
  CHECK(pgd35.norm == attacks::Norm::L2);
  CHECK(pgd35.snr_target_db == 35.0);
  CHECK(pgd35.steps == 200);
  CHECK(harness::attack_preset("pgd-linf-5e3").epsilon == 0.005);
  CHECK(harness::attack_preset("pgd-linf-15e4").epsilon == 0.0015);
  CHECK(harness::attack_preset("cw-default").steps == 2000);
  CHECK(harness::attack_preset("lang-45db").snr_target_db == 45.0);
  CHECK(harness::attack_preset("universal-40db").relative_learning_rate == 0.001);
  CHECK_THROWS_AS(harness::attack_preset("pgd-l7"), ValidationError);

  const auto cfg = harness::parse_campaign_config(nlohmann::json{
      {"campaign", "c"},
      {"model", "unit"},
      {"manifest", "eval.jsonl"},
      {"seed", 5},
      {"attack", {{"preset", "pgd-l2-35db"}, {"steps", 7}, {"snr_target_db", 20.0}}},
      {"defense", {{"sigma", 0.1}, {"n_draws", 3}, {"vote", "majority_exact"}}}});
  CHECK(cfg.attack.steps == 7);
  CHECK(cfg.attack.snr_target_db == 20.0);
  CHECK(cfg.attack.algorithm == attacks::Algorithm::pgd);
  REQUIRE(cfg.defense.has_value());
  CHECK(cfg.defense->n_draws == 3);
  CHECK(cfg.output_dir == fs::path("out/c"));

  CHECK_THROWS_AS(
      harness::parse_campaign_config(nlohmann::json{{"campaign", "c"}}),
      ValidationError);

  auto bad = base_config("bad");
  bad.attack = harness::attack_preset("universal-40db");
  CHECK_THROWS_AS(harness::CampaignRunner(bad).run(), ValidationError);
}

TEST_CASE("campaign: none attack is a clean passthrough") {
  auto cfg = base_config("none");
  cfg.attack = harness::attack_preset("none");
  fs::remove_all(cfg.output_dir);
  const auto summary = harness::run_campaign(cfg);

  CHECK_FALSE(summary.failed);
  const auto& agg = summary.doc.at("aggregates");
  CHECK(agg.at("adv_wer") == agg.at("clean_wer"));
  CHECK(summary.doc.at("n_ok") == 3);
  CHECK(summary.doc.at("n_excluded") == 0);
  CHECK(summary.doc.at("source_language") == "");

  int rows = 0;
  std::ifstream is(cfg.output_dir / "results.jsonl");
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    ++rows;
    const auto j = nlohmann::json::parse(line);
    CHECK(j.at("adv").at("transcript") == j.at("clean").at("transcript"));
    CHECK(j.at("achieved_snr_db") == "inf");
    CHECK(fs::exists(cfg.output_dir / j.at("adv_wav").get<std::string>()));
    CHECK(fs::exists(cfg.output_dir / j.at("delta_wav").get<std::string>()));
    CHECK(fs::exists(cfg.output_dir / "adv_wav" /
                     (j.at("id").get<std::string>() + ".json")));
  }
  CHECK(rows == 3);
}

TEST_CASE("campaign: resume needs no model and appends nothing") {
  auto cfg = base_config("resume");
  cfg.attack = harness::attack_preset("pgd-l2-35db");
  cfg.attack.steps = 2;
  fs::remove_all(cfg.output_dir);
  const auto first = harness::run_campaign(cfg);
  const auto bytes_before = fs::file_size(cfg.output_dir / "results.jsonl");

  // With every row complete, a rerun must not touch the model at all; hiding
  // the checkpoint makes any attempted load an error.
  const auto model_path = ws().root / "models" / "unit.advm";
  const auto hidden = ws().root / "models" / "unit.hidden";
  fs::rename(model_path, hidden);
  nlohmann::json second_doc;
  try {
    const auto second = harness::run_campaign(cfg);
    second_doc = second.doc;
  } catch (...) {
    fs::rename(hidden, model_path);
    throw;
  }
  fs::rename(hidden, model_path);

  CHECK(strip_timestamp(second_doc) == strip_timestamp(first.doc));
  CHECK(fs::file_size(cfg.output_dir / "results.jsonl") == bytes_before);
}

TEST_CASE("campaign: identical config and seed reproduce the summary") {
  auto a = base_config("det");
  a.attack = harness::attack_preset("pgd-l2-35db");
  a.attack.steps = 2;
  auto b = a;
  b.output_dir = ws().root / "out_det_replay";
  fs::remove_all(a.output_dir);
  fs::remove_all(b.output_dir);

  const auto sa = harness::run_campaign(a);
  const auto sb = harness::run_campaign(b);
  CHECK(strip_timestamp(sa.doc) == strip_timestamp(sb.doc));

  // Row payloads match too, apart from wall-clock timing.
  auto rows_of = [](const fs::path& dir) {
    std::vector<nlohmann::json> rows;
    std::ifstream is(dir / "results.jsonl");
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      auto j = nlohmann::json::parse(line);
      j.erase("wall_time_s");
      rows.push_back(std::move(j));
    }
    return rows;
  };
  CHECK(rows_of(a.output_dir) == rows_of(b.output_dir));
}

TEST_CASE("campaign: aggregates are recomputable from the rows") {
  auto cfg = base_config("recompute");
  cfg.attack = harness::attack_preset("pgd-l2-35db");
  cfg.attack.steps = 2;
  cfg.defense = defense::SmoothingConfig{};
  cfg.defense->sigma = 0.01;
  fs::remove_all(cfg.output_dir);
  const auto summary = harness::run_campaign(cfg);

  const auto rec = testsupport::recompute_aggregates(
      (cfg.output_dir / "results.jsonl").string());
  CHECK(rec.n_ok == 3);
  CHECK(testsupport::max_aggregate_error(summary.doc.at("aggregates"), rec) <=
        1e-9);
  CHECK(summary.doc.at("aggregates").contains("defended_clean_wer"));
  CHECK(summary.doc.at("aggregates").contains("defended_adv_wer"));
}

TEST_CASE("campaign: per-utterance failures are excluded, majority fails the run") {
  auto cfg = base_config("failures");
  cfg.manifest = "broken.jsonl";
  cfg.attack = harness::attack_preset("pgd-l2-35db");
  cfg.attack.steps = 1;
  fs::remove_all(cfg.output_dir);
  const auto summary = harness::run_campaign(cfg);

  CHECK(summary.failed);
  CHECK(summary.doc.at("n_ok") == 1);
  CHECK(summary.doc.at("n_excluded") == 2);
  int error_rows = 0;
  std::ifstream is(cfg.output_dir / "results.jsonl");
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    if (j.at("status") == "error") {
      ++error_rows;
      CHECK_FALSE(j.at("error").get<std::string>().empty());
    }
  }
  CHECK(error_rows == 2);
}

TEST_CASE("campaign: universal attack trains once and reuses the saved delta") {
  auto cfg = base_config("universal");
  cfg.attack = harness::attack_preset("universal-40db");
  cfg.attack.steps = 2;
  cfg.attack.target_language = "sr";
  cfg.train_manifest = "utrain.jsonl";
  fs::remove_all(cfg.output_dir);
  const auto summary = harness::run_campaign(cfg);

  const auto bin = cfg.output_dir / "universal_delta.bin";
  REQUIRE(fs::exists(bin));
  CHECK(fs::file_size(bin) == 12800 * sizeof(double));
  CHECK(fs::exists(cfg.output_dir / "universal_delta.wav"));
  REQUIRE(summary.doc.contains("per_language_adv_wer"));
  CHECK(summary.doc.at("per_language_adv_wer").size() == 3);
  CHECK(summary.doc.at("aggregates").contains("language_flip_rate"));

  // Force a re-application pass; the stored delta must be reused as-is.
  const auto before = fs::last_write_time(bin);
  fs::remove(cfg.output_dir / "results.jsonl");
  fs::remove(cfg.output_dir / "summary.json");
  const auto again = harness::run_campaign(cfg);
  CHECK(fs::last_write_time(bin) == before);
  CHECK(strip_timestamp(again.doc) == strip_timestamp(summary.doc));
}

TEST_CASE("campaign: worker pool matches the single-threaded result") {
  auto one = base_config("workers");
  one.attack = harness::attack_preset("pgd-l2-35db");
  one.attack.steps = 2;
  auto four = one;
  four.output_dir = ws().root / "out_workers_pool";
  four.workers = 4;
  fs::remove_all(one.output_dir);
  fs::remove_all(four.output_dir);

  const auto s1 = harness::run_campaign(one);
  const auto s4 = harness::run_campaign(four);
  CHECK(strip_timestamp(s1.doc) == strip_timestamp(s4.doc));
}

TEST_CASE("table: golden header, one row per summary, schema enforced") {
  const auto none_summary = ws().root / "out_none" / "summary.json";
  const auto pgd_summary = ws().root / "out_recompute" / "summary.json";
  REQUIRE(fs::exists(none_summary));
  REQUIRE(fs::exists(pgd_summary));

  const auto csv = harness::emit_table({none_summary, pgd_summary});
  std::istringstream is(csv);
  std::string header, row1, row2, extra;
  REQUIRE(std::getline(is, header));
  CHECK(header == harness::kTableHeader);
  REQUIRE(std::getline(is, row1));
  REQUIRE(std::getline(is, row2));
  CHECK_FALSE(std::getline(is, extra));
  CHECK(row1.rfind("unit,none,none,3,0,", 0) == 0);
  CHECK(row2.rfind("unit,pgd,l2@35db,3,0,", 0) == 0);
  // The defended columns are filled only for the defended campaign.
  CHECK(row1.back() == ',');
  CHECK(row2.back() != ',');

  const auto bogus = ws().root / "bogus_summary.json";
  std::ofstream(bogus) << nlohmann::json{{"model_id", "unit"}}.dump();
  CHECK_THROWS_AS(harness::emit_table({bogus}), ValidationError);
}

TEST_CASE("figure: sorted by training hours, universal fan-out, missing hours named") {
  const auto dir = ws().root / "figure_inputs";
  fs::create_directories(dir);
  auto write_summary = [&](const std::string& name, const std::string& source,
                           const std::string& target, double wer) {
    nlohmann::json doc{
        {"model_id", "unit"},
        {"attack",
         {{"algorithm", "lang_confusion"}, {"target_language", target}}},
        {"n_utterances", 3},
        {"n_excluded", 0},
        {"source_language", source},
        {"aggregates",
         {{"clean_wer", 0.1}, {"adv_wer", wer}, {"wn_wer", 0.2}}}};
    std::ofstream(dir / name) << doc.dump();
    return dir / name;
  };
  const auto s1 = write_summary("s1.json", "en", "sr", 0.5);
  const auto s2 = write_summary("s2.json", "it", "sr", 0.7);
  const auto universal = ws().root / "out_universal" / "summary.json";
  REQUIRE(fs::exists(universal));

  const auto hours = ws().root / "data" / "training_hours.json";
  const auto csv =
      harness::emit_language_figure_data({s1, s2, universal}, hours);
  std::istringstream is(csv);
  std::string line;
  REQUIRE(std::getline(is, line));
  CHECK(line == harness::kFigureHeader);
  std::vector<double> hour_col;
  std::vector<std::string> targets;
  while (std::getline(is, line)) {
    std::istringstream row(line);
    std::string src, hrs, tgt, wer;
    REQUIRE(std::getline(row, src, ','));
    REQUIRE(std::getline(row, hrs, ','));
    REQUIRE(std::getline(row, tgt, ','));
    REQUIRE(std::getline(row, wer, ','));
    hour_col.push_back(std::stod(hrs));
    targets.push_back(tgt);
  }
  REQUIRE(hour_col.size() == 5);  // 2 confusion rows + 3 universal languages
  CHECK(std::is_sorted(hour_col.begin(), hour_col.end()));
  CHECK(std::count(targets.begin(), targets.end(), "universal") == 3);

  const auto missing = write_summary("s3.json", "da", "sr", 0.4);
  CHECK_THROWS_WITH(harness::emit_language_figure_data({missing}, hours),
                    Catch::Matchers::ContainsSubstring("'da'"));
  const auto none_summary = ws().root / "out_none" / "summary.json";
  CHECK_THROWS_AS(harness::emit_language_figure_data({none_summary}, hours),
                  ValidationError);
}

TEST_CASE("verify: artifacts reproduce, tampering is caught") {
  const auto dir = ws().root / "out_recompute";
  REQUIRE(fs::exists(dir / "summary.json"));
  const auto clean = harness::verify_campaign(dir);
  CHECK(clean.n_checked == 3);
  CHECK(clean.ok());

  // Corrupt one adversarial wav and expect a named complaint.
  const auto target = dir / "adv_wav" / "u_en.wav";
  const auto backup = dir / "adv_wav" / "u_en.wav.bak";
  fs::copy_file(target, backup);
  std::vector<double> noise(8000);
  for (std::size_t i = 0; i < noise.size(); ++i) {
    noise[i] = 0.1 * std::sin(0.3 * static_cast<double>(i));
  }
  audio::write_wav(audio::quantize_int16(noise), target.string(), 16000);
  const auto tampered = harness::verify_campaign(dir);
  fs::rename(backup, target);
  CHECK_FALSE(tampered.ok());
  bool names_utterance = false;
  for (const auto& p : tampered.problems) {
    if (p.rfind("u_en:", 0) == 0) names_utterance = true;
  }
  CHECK(names_utterance);
  CHECK(harness::verify_campaign(dir).ok());
}
