#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "advbench/common/errors.hpp"
#include "advbench/common/version.hpp"
#include "advbench/harness/campaign.hpp"
#include "advbench/harness/report.hpp"
#include "advbench/harness/verify.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitCampaignFailure = 3;

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path);
  os << text;
  if (!os) throw advbench::IoError("cannot write " + path.string());
}

int cmd_run(const std::string& config_path, std::int64_t seed,
            int max_utterances, int workers, const std::string& output) {
  std::ifstream is(config_path);
  if (!is) throw advbench::IoError("cannot open config: " + config_path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw advbench::ParseError(config_path + ": " + e.what());
  }
  auto cfg = advbench::harness::parse_campaign_config(j);
  if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
  if (max_utterances >= 0) cfg.max_utterances = max_utterances;
  if (workers > 0) cfg.workers = workers;
  if (!output.empty()) cfg.output_dir = output;

  const auto summary = advbench::harness::run_campaign(cfg);
  const auto& agg = summary.doc.at("aggregates");
  std::printf("campaign %s: %d/%d utterances ok\n",
              cfg.campaign.c_str(), summary.doc.at("n_ok").get<int>(),
              summary.doc.at("n_utterances").get<int>());
  std::printf("  clean_wer=%.4f wn_wer=%.4f adv_wer=%.4f\n",
              agg.at("clean_wer").get<double>(),
              agg.at("wn_wer").get<double>(), agg.at("adv_wer").get<double>());
  if (agg.contains("mean_snr_db")) {
    std::printf("  mean_snr_db=%.2f\n", agg.at("mean_snr_db").get<double>());
  }
  if (agg.contains("targeted_accuracy")) {
    std::printf("  targeted_accuracy=%.4f\n",
                agg.at("targeted_accuracy").get<double>());
  }
  if (agg.contains("language_flip_rate")) {
    std::printf("  language_flip_rate=%.4f\n",
                agg.at("language_flip_rate").get<double>());
  }
  std::printf("  wrote %s\n", (cfg.output_dir / "summary.json").c_str());
  if (summary.failed) {
    std::fprintf(stderr, "campaign failed: more than half of the utterances errored\n");
    return kExitCampaignFailure;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial robustness benchmark for speech transcription models"};
  app.set_version_flag("--version", std::string("advbench ") + advbench::kVersion);
  app.require_subcommand(1);

  std::string config_path, output;
  std::int64_t seed = -1;
  int max_utterances = -1, workers = 0;
  auto* run = app.add_subcommand("run", "Run an attack campaign from a config file");
  run->add_option("config", config_path, "Campaign config (JSON)")->required();
  run->add_option("--seed", seed, "Override the campaign seed");
  run->add_option("--max-utterances", max_utterances,
                  "Override the number of evaluated utterances");
  run->add_option("--workers", workers, "Override the worker count");
  run->add_option("--output", output, "Override the output directory");

  std::vector<std::string> summary_paths;
  std::string table_out = "table.csv";
  auto* table = app.add_subcommand("table", "Aggregate campaign summaries into a CSV table");
  table->add_option("summaries", summary_paths, "summary.json files")->required();
  table->add_option("--output", table_out, "Output CSV path");

  std::vector<std::string> figure_paths;
  std::string figure_out = "figure.csv";
  std::string hours_file;
  auto* figure = app.add_subcommand(
      "figure", "Emit training-hours vs language-attack WER figure data");
  figure->add_option("summaries", figure_paths, "summary.json files")->required();
  figure->add_option("--hours", hours_file,
                     "Training-hours JSON (default: <data dir>/training_hours.json)");
  figure->add_option("--output", figure_out, "Output CSV path");

  std::string verify_dir;
  auto* verify = app.add_subcommand(
      "verify", "Re-derive the artifacts of a finished campaign");
  verify->add_option("dir", verify_dir, "Campaign output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      return cmd_run(config_path, seed, max_utterances, workers, output);
    }
    if (table->parsed()) {
      std::vector<std::filesystem::path> paths(summary_paths.begin(),
                                               summary_paths.end());
      write_text(table_out, advbench::harness::emit_table(paths));
      std::printf("wrote %s (%zu rows)\n", table_out.c_str(), paths.size());
      return 0;
    }
    if (figure->parsed()) {
      std::vector<std::filesystem::path> paths(figure_paths.begin(),
                                               figure_paths.end());
      const std::filesystem::path hours =
          hours_file.empty()
              ? advbench::harness::data_dir_default() / "training_hours.json"
              : std::filesystem::path(hours_file);
      write_text(figure_out,
                 advbench::harness::emit_language_figure_data(paths, hours));
      std::printf("wrote %s\n", figure_out.c_str());
      return 0;
    }
    if (verify->parsed()) {
      const auto rep = advbench::harness::verify_campaign(verify_dir);
      if (rep.ok()) {
        std::printf("verified %d utterances: all artifacts reproduce\n",
                    rep.n_checked);
        return 0;
      }
      std::fprintf(stderr, "verification failed (%zu problems):\n",
                   rep.problems.size());
      for (const auto& p : rep.problems) {
        std::fprintf(stderr, "  %s\n", p.c_str());
      }
      return kExitCampaignFailure;
    }
  } catch (const advbench::ValidationError& e) {
    std::fprintf(stderr, "validation error: %s\n", e.what());
    return kExitValidation;
  } catch (const advbench::ParseError& e) {
    std::fprintf(stderr, "validation error: %s\n", e.what());
    return kExitValidation;
  } catch (const advbench::IoError& e) {
    std::fprintf(stderr, "validation error: %s\n", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
