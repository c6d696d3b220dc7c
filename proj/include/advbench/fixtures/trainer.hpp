#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "advbench/audio/corpus.hpp"
#include "advbench/common/rng.hpp"
#include "advbench/fixtures/corpus_gen.hpp"
#include "advbench/metrics/wer.hpp"
#include "advbench/model/checkpoint.hpp"
#include "advbench/model/network.hpp"
#include "advbench/model/subject.hpp"

namespace advbench::fixtures {

inline model::Arch family_arch(const std::string& model_id) {
  model::Arch a;
  a.model_id = model_id;
  a.n_heads = 4;
  a.ffn_mult = 4;
  a.n_mels = 40;
  a.win = 256;
  a.hop = 1200;
  // Sized so a full-length utterance nearly fills the analysis window; a
  // mostly-silent window hands windowed attacks free evidence space that the
  // per-utterance attacks cannot reach.
  a.max_frames = 44;
  a.max_text_positions = 24;
  if (model_id == "tiny" || model_id == "surrogate") {
    a.d_model = 32;
    a.enc_layers = 2;
    a.dec_layers = 2;
    a.vocab = family_vocab();
  } else if (model_id == "tiny.en") {
    a.d_model = 32;
    a.enc_layers = 2;
    a.dec_layers = 2;
    a.multilingual = false;
    a.vocab = english_vocab();
  } else if (model_id == "base") {
    a.d_model = 48;
    a.enc_layers = 3;
    a.dec_layers = 3;
    a.vocab = family_vocab();
  } else {
    throw ValidationError("unknown model id '" + model_id + "'");
  }
  return a;
}

struct TrainConfig {
  std::string model_id = "tiny";
  std::filesystem::path data_dir;
  std::filesystem::path out_path;
  std::uint64_t seed = 7;
  int short_epochs = 40;
  int long_epochs = 6;
  double lr = 1e-3;
  double max_noise_sigma = 0.012;
  double lang_smoothing = 0.3;
  double grad_clip = 1.0;
  int max_examples = 0;  // 0 keeps the whole manifest
  bool quiet = false;
};

namespace detail {

struct LoadedExample {
  std::string id;
  std::string language;
  std::string text;
  std::vector<double> waveform;
};

inline std::vector<LoadedExample> load_set(const std::filesystem::path& data_dir,
                                           const std::string& manifest,
                                           int max_examples) {
  const auto mf = audio::load_manifest(data_dir / manifest);
  std::vector<LoadedExample> out;
  for (const auto& e : mf.entries) {
    if (max_examples > 0 && static_cast<int>(out.size()) >= max_examples) break;
    auto ex = audio::load_example(e);
    out.push_back({ex.id, ex.language, ex.reference_text, std::move(ex.waveform)});
  }
  return out;
}

struct Adam {
  std::map<std::string, ad::Mat> m, v;
  long t = 0;

  void step(std::map<std::string, ad::Mat>& params,
            const std::map<std::string, ad::Mat>& grads, double lr) {
    ++t;
    const double bc1 = 1.0 - std::pow(0.9, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(0.999, static_cast<double>(t));
    for (auto& [name, p] : params) {
      const auto& g = grads.at(name);
      auto& mi = m[name];
      auto& vi = v[name];
      if (mi.size() == 0) {
        mi = ad::Mat::Zero(p.rows(), p.cols());
        vi = ad::Mat::Zero(p.rows(), p.cols());
      }
      mi = 0.9 * mi + 0.1 * g;
      vi = 0.999 * vi + 0.001 * g.cwiseProduct(g);
      p -= lr * ((mi / bc1).array() /
                 ((vi / bc2).array().sqrt() + 1e-8))
                    .matrix();
    }
  }
};

// Teacher-forced text loss plus, for multilingual models, the language
// identification term at the first decoder position.
inline ad::Var training_loss(ad::Tape& tape, const model::Arch& arch,
                             const model::net::Constants& consts,
                             const model::net::ParamVars& pv,
                             const model::Tokenizer& tok,
                             const std::vector<double>& wave,
                             const std::string& language,
                             const std::string& text,
                             double lang_smoothing) {
  ad::Mat w(1, static_cast<long>(wave.size()));
  for (std::size_t i = 0; i < wave.size(); ++i) {
    w(0, static_cast<long>(i)) = wave[i];
  }
  ad::Var wave_var = tape.constant(w);
  ad::Var enc = model::net::encode(tape, arch, consts, pv, wave_var);

  const auto target = model::make_target(tok, text);
  std::vector<int> prefix = {tok.sot()};
  if (arch.multilingual) prefix.push_back(tok.language_id(language));
  prefix.push_back(tok.task_transcribe());

  std::vector<int> dec_input = prefix;
  dec_input.insert(dec_input.end(), target.tokens.begin(),
                   target.tokens.end() - 1);
  ad::Var logits = model::net::decode_logits(tape, arch, pv, enc, dec_input);
  ad::Var logp = ad::log_softmax_rows(logits);
  std::vector<int> rows(target.tokens.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i] = static_cast<int>(prefix.size()) - 1 + static_cast<int>(i);
  }
  ad::Var picked = ad::gather_rows(logp, rows);
  ad::Var nll = ad::nll_rows(picked, target.tokens);
  const std::vector<double> ones(target.tokens.size(), 1.0);
  ad::Var loss = ad::weighted_mean(nll, ones);

  if (arch.multilingual) {
    ad::Var l0 = model::net::decode_logits(tape, arch, pv, enc, {tok.sot()});
    ad::Var lp0 = ad::log_softmax_rows(l0);
    // Smoothed over the language set: hard one-hot targets let the detection
    // margin grow without bound, which no amount of inference-time noise can
    // later cross.
    const auto& lang_ids = tok.language_ids();
    const double off = lang_smoothing / static_cast<double>(lang_ids.size());
    ad::Var lang_nll = ad::scale(ad::pick(lp0, 0, tok.language_id(language)),
                                 -(1.0 - lang_smoothing));
    for (const auto& [code, id] : lang_ids) {
      lang_nll = ad::add(lang_nll, ad::scale(ad::pick(lp0, 0, id), -off));
    }
    loss = ad::add(loss, lang_nll);
  }
  return loss;
}

inline double run_epoch(model::Checkpoint& ckpt,
                        const model::net::Constants& consts,
                        const model::Tokenizer& tok,
                        const std::vector<LoadedExample>& data, Adam& opt,
                        const TrainConfig& cfg, int epoch, bool full_window) {
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng shuffle_rng(derive_seed(cfg.seed, "epoch" + std::to_string(epoch)));
  shuffle_rng.shuffle(order);

  double total = 0.0;
  for (std::size_t idx : order) {
    const auto& ex = data[idx];
    Rng noise_rng(
        derive_seed(cfg.seed, "noise" + std::to_string(epoch) + "/" + ex.id));
    const double sigma = cfg.max_noise_sigma * noise_rng.uniform();
    std::vector<double> wave = ex.waveform;
    if (full_window) wave.resize(ckpt.arch.max_samples(), 0.0);
    for (auto& s : wave) {
      s = std::min(1.0, std::max(-1.0, s + sigma * noise_rng.gaussian()));
    }

    ad::Tape tape;
    auto pv = model::net::lift_params(tape, ckpt.params, true);
    ad::Var loss = training_loss(tape, ckpt.arch, consts, pv, tok, wave,
                                 ex.language, ex.text, cfg.lang_smoothing);
    tape.backward(loss);
    total += loss.value()(0, 0);

    std::map<std::string, ad::Mat> grads;
    double sq = 0.0;
    for (const auto& [name, var] : pv.vars) {
      ad::Mat g = var.grad();
      sq += g.squaredNorm();
      grads.emplace(name, std::move(g));
    }
    const double gn = std::sqrt(sq);
    if (gn > cfg.grad_clip) {
      const double s = cfg.grad_clip / gn;
      for (auto& [_, g] : grads) g *= s;
    }
    // Cosine decay to a tenth of the base rate keeps the larger models from
    // churning between minima late in training.
    const int total_epochs = cfg.short_epochs + cfg.long_epochs;
    const double frac =
        total_epochs > 1
            ? static_cast<double>(epoch) / static_cast<double>(total_epochs - 1)
            : 0.0;
    const double lr =
        cfg.lr * (0.1 + 0.45 * (1.0 + std::cos(frac * 3.14159265358979)));
    opt.step(ckpt.params, grads, lr);
  }
  return total / static_cast<double>(data.size());
}

inline double probe_wer(const model::Checkpoint& ckpt,
                        const std::vector<LoadedExample>& data, int count) {
  model::MiniTransformer m(ckpt);
  double acc = 0.0;
  int n = 0;
  const std::size_t stride =
      std::max<std::size_t>(1, data.size() / static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < data.size() && n < count; i += stride) {
    const auto tr = m.transcribe(data[i].waveform, "", 1);
    acc += metrics::wer(data[i].text, tr.text).wer;
    ++n;
  }
  return n > 0 ? acc / n : 0.0;
}

}  // namespace detail

inline model::Checkpoint train_model(const TrainConfig& cfg) {
  model::Checkpoint ckpt;
  ckpt.arch = family_arch(cfg.model_id);
  Rng init_rng(derive_seed(cfg.seed, "init/" + cfg.model_id));
  ckpt.params = model::net::init_params(ckpt.arch, init_rng);
  ckpt.meta = {{"seed", cfg.seed}, {"trained", false}};

  if (cfg.model_id == "surrogate") return ckpt;  // random-init by design

  const std::string manifest =
      ckpt.arch.multilingual ? "train_multi.jsonl" : "train_en.jsonl";
  const auto data =
      detail::load_set(cfg.data_dir, manifest, cfg.max_examples);
  if (data.empty()) throw ValidationError("training manifest is empty");

  const auto consts = model::net::make_constants(ckpt.arch);
  const model::Tokenizer tok(ckpt.arch.vocab);
  detail::Adam opt;

  const int total_epochs = cfg.short_epochs + cfg.long_epochs;
  for (int epoch = 0; epoch < total_epochs; ++epoch) {
    const bool full = epoch >= cfg.short_epochs;
    const double mean =
        detail::run_epoch(ckpt, consts, tok, data, opt, cfg, epoch, full);
    if (!cfg.quiet) {
      std::cerr << cfg.model_id << " epoch " << (epoch + 1) << "/"
                << total_epochs << (full ? " [full]" : " [short]")
                << " loss " << mean;
      if ((epoch + 1) % 5 == 0 || epoch + 1 == total_epochs) {
        std::cerr << " probe-wer " << detail::probe_wer(ckpt, data, 8);
      }
      std::cerr << '\n';
    }
  }

  ckpt.meta["trained"] = true;
  ckpt.meta["epochs"] = total_epochs;
  ckpt.meta["examples"] = data.size();
  return ckpt;
}

}  // namespace advbench::fixtures
