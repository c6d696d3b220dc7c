#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "advbench/common/errors.hpp"
#include "advbench/common/version.hpp"
#include "advbench/fixtures/corpus_gen.hpp"
#include "advbench/fixtures/trainer.hpp"
#include "advbench/model/checkpoint.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Synthetic corpus and checkpoint builder"};
  app.set_version_flag("--version", advbench::kVersion);
  app.require_subcommand(1);

  std::filesystem::path corpus_out = "fixtures/corpora";
  std::uint64_t corpus_seed = 4242;
  auto* corpus = app.add_subcommand("corpus", "generate the evaluation corpus");
  corpus->add_option("--out", corpus_out, "output directory");
  corpus->add_option("--seed", corpus_seed, "corpus seed");

  advbench::fixtures::TrainConfig tc;
  tc.data_dir = "fixtures/corpora";
  auto* train = app.add_subcommand("train", "train or initialize a checkpoint");
  train->add_option("--model", tc.model_id, "tiny | tiny.en | base | surrogate")
      ->required();
  train->add_option("--data-dir", tc.data_dir, "corpus directory");
  train->add_option("--out", tc.out_path, "checkpoint path (.advm)");
  train->add_option("--seed", tc.seed, "training seed");
  train->add_option("--short-epochs", tc.short_epochs, "epochs at native length");
  train->add_option("--long-epochs", tc.long_epochs, "epochs at the full window");
  train->add_option("--lr", tc.lr, "adam learning rate");
  train->add_option("--noise", tc.max_noise_sigma, "max augmentation sigma");
  train->add_option("--lang-smoothing", tc.lang_smoothing,
                    "label smoothing over the language set");
  train->add_option("--max-examples", tc.max_examples,
                    "truncate the training set (smoke runs)");
  train->add_flag("--quiet", tc.quiet, "suppress progress lines");

  CLI11_PARSE(app, argc, argv);

  try {
    if (corpus->parsed()) {
      advbench::fixtures::generate_corpus(corpus_out, corpus_seed);
      std::cout << "corpus written to " << corpus_out.string() << '\n';
      return 0;
    }
    if (train->parsed()) {
      if (tc.out_path.empty()) {
        tc.out_path = "fixtures/models/" + tc.model_id + ".advm";
      }
      const auto ckpt = advbench::fixtures::train_model(tc);
      std::filesystem::create_directories(tc.out_path.parent_path());
      advbench::model::save_checkpoint(ckpt, tc.out_path);
      std::cout << "checkpoint written to " << tc.out_path.string() << " ("
                << ckpt.param_count() << " parameters)\n";
      return 0;
    }
  } catch (const advbench::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
