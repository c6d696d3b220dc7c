#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "advbench/common/errors.hpp"
#include "advbench/model/checkpoint.hpp"
#include "advbench/model/network.hpp"
#include "advbench/model/tokenizer.hpp"

namespace advbench::model {

struct ModelHandle {
  std::string model_id;
  bool multilingual = true;
  double max_input_seconds = 30.0;
  int beam_size = 5;
  long parameter_count = 0;
};

struct Transcription {
  std::string text;
  std::vector<int> tokens;  // generated tokens, prefix excluded
  double avg_logprob = 0.0;
  std::string detected_language;  // set when detection ran
};

struct LanguageScores {
  std::map<std::string, double> probs;
  std::string argmax;
};

struct LossValue {
  double total = 0.0;
  std::vector<double> per_token;
  std::vector<double> gradient_wrt_input;  // input-shaped; empty unless requested
};

// The differentiable ASR contract the attacks are written against.
class SubjectModel {
 public:
  virtual ~SubjectModel() = default;
  virtual const ModelHandle& handle() const = 0;
  virtual const Tokenizer& tokenizer() const = 0;
  virtual int sample_rate() const = 0;
  virtual std::size_t max_samples() const = 0;
  // language: ISO code forced into the decoder prefix; empty means detect
  // (multilingual) or English-only behavior.
  virtual Transcription transcribe(const std::vector<double>& x,
                                   const std::string& language = "",
                                   int beam_size = -1) const = 0;
  virtual LossValue teacher_forced_loss(const std::vector<double>& x,
                                        const TokenSequence& target,
                                        const std::string& language,
                                        const std::vector<double>* token_weights,
                                        bool with_gradient) const = 0;
  virtual LanguageScores language_scores(const std::vector<double>& x) const = 0;
  virtual LossValue language_target_loss(const std::vector<double>& x,
                                         const std::string& target_language,
                                         bool with_gradient) const = 0;
};

// Concrete binding around a trained miniature transformer checkpoint.
class MiniTransformer final : public SubjectModel {
 public:
  explicit MiniTransformer(Checkpoint ckpt)
      : ckpt_(std::move(ckpt)),
        consts_(net::make_constants(ckpt_.arch)),
        tok_(ckpt_.arch.vocab) {
    handle_.model_id = ckpt_.arch.model_id;
    handle_.multilingual = ckpt_.arch.multilingual;
    handle_.parameter_count = ckpt_.param_count();
    if (handle_.multilingual && tok_.language_ids().empty()) {
      throw ValidationError("multilingual checkpoint without language tokens");
    }
  }

  const ModelHandle& handle() const override { return handle_; }
  const Tokenizer& tokenizer() const override { return tok_; }
  int sample_rate() const override { return ckpt_.arch.sample_rate(); }
  std::size_t max_samples() const override { return ckpt_.arch.max_samples(); }
  const Arch& arch() const { return ckpt_.arch; }
  const std::map<std::string, ad::Mat>& params() const { return ckpt_.params; }

  Transcription transcribe(const std::vector<double>& x, const std::string& language = "",
                           int beam_size = -1) const override {
    const auto padded = pad_input(x);
    ad::Tape tape;
    auto pv = net::lift_params(tape, ckpt_.params, false);
    ad::Var enc = encode_padded(tape, pv, padded);

    Transcription out;
    std::vector<int> prefix = {tok_.sot()};
    if (handle_.multilingual) {
      std::string lang = language;
      if (lang.empty()) {
        lang = detect_language(tape, pv, enc).argmax;
        out.detected_language = lang;
      }
      prefix.push_back(tok_.language_id(lang));
    }
    prefix.push_back(tok_.task_transcribe());

    const int beams = beam_size > 0 ? beam_size : handle_.beam_size;
    auto [tokens, avg_lp] = beam_search(tape, pv, enc, prefix, beams);
    out.tokens = tokens;
    out.avg_logprob = avg_lp;
    out.text = tok_.decode(tokens);
    return out;
  }

  LossValue teacher_forced_loss(const std::vector<double>& x, const TokenSequence& target,
                                const std::string& language,
                                const std::vector<double>* token_weights,
                                bool with_gradient) const override {
    if (target.tokens.empty()) throw ValidationError("empty target token sequence");
    const auto n_target = target.tokens.size();
    std::vector<double> weights(n_target, 1.0);
    if (token_weights != nullptr) {
      if (token_weights->size() != n_target) {
        throw ValidationError("token_weights length does not match the target");
      }
      for (double w : *token_weights) {
        if (!(w > 0.0)) throw ValidationError("token_weights must be positive");
      }
      weights = *token_weights;
    }

    const auto padded = pad_input(x);
    ad::Tape tape;
    auto pv = net::lift_params(tape, ckpt_.params, false);
    ad::Mat row(1, static_cast<Eigen::Index>(padded.size()));
    for (std::size_t i = 0; i < padded.size(); ++i) {
      row(0, static_cast<Eigen::Index>(i)) = padded[i];
    }
    ad::Var wave = tape.leaf(std::move(row), with_gradient);
    ad::Var enc = net::encode(tape, ckpt_.arch, consts_, pv, wave);

    std::vector<int> prefix = decoder_prefix(language);
    std::vector<int> dec_input = prefix;
    dec_input.insert(dec_input.end(), target.tokens.begin(), target.tokens.end() - 1);

    ad::Var logits = net::decode_logits(tape, ckpt_.arch, pv, enc, dec_input);
    ad::Var logp = ad::log_softmax_rows(logits);
    std::vector<int> pred_rows(n_target);
    for (std::size_t i = 0; i < n_target; ++i) {
      pred_rows[i] = static_cast<int>(prefix.size()) - 1 + static_cast<int>(i);
    }
    ad::Var per_tok = ad::nll_rows(ad::gather_rows(logp, pred_rows), target.tokens);
    ad::Var total = ad::weighted_mean(per_tok, weights);

    LossValue lv;
    lv.total = total.value()(0, 0);
    lv.per_token.resize(n_target);
    for (std::size_t i = 0; i < n_target; ++i) {
      lv.per_token[i] = per_tok.value()(static_cast<Eigen::Index>(i), 0);
    }
    if (!std::isfinite(lv.total)) {
      throw NumericalError("non-finite teacher-forced loss");
    }
    if (with_gradient) {
      tape.backward(total);
      extract_gradient(tape, wave, x.size(), lv);
    }
    return lv;
  }

  LanguageScores language_scores(const std::vector<double>& x) const override {
    require_multilingual();
    const auto padded = pad_input(x);
    ad::Tape tape;
    auto pv = net::lift_params(tape, ckpt_.params, false);
    ad::Var enc = encode_padded(tape, pv, padded);
    return detect_language(tape, pv, enc);
  }

  LossValue language_target_loss(const std::vector<double>& x,
                                 const std::string& target_language,
                                 bool with_gradient) const override {
    require_multilingual();
    const int target_pos = language_slot(target_language);

    const auto padded = pad_input(x);
    ad::Tape tape;
    auto pv = net::lift_params(tape, ckpt_.params, false);
    ad::Mat row(1, static_cast<Eigen::Index>(padded.size()));
    for (std::size_t i = 0; i < padded.size(); ++i) {
      row(0, static_cast<Eigen::Index>(i)) = padded[i];
    }
    ad::Var wave = tape.leaf(std::move(row), with_gradient);
    ad::Var enc = net::encode(tape, ckpt_.arch, consts_, pv, wave);

    ad::Var lang_logp = language_logprobs(tape, pv, enc);
    ad::Var total = ad::scale(ad::pick(lang_logp, 0, target_pos), -1.0);

    LossValue lv;
    lv.total = total.value()(0, 0);
    lv.per_token = {lv.total};
    if (!std::isfinite(lv.total)) {
      throw NumericalError("non-finite language loss");
    }
    if (with_gradient) {
      tape.backward(total);
      extract_gradient(tape, wave, x.size(), lv);
    }
    return lv;
  }

 private:
  std::vector<double> pad_input(const std::vector<double>& x) const {
    const auto cap = static_cast<std::size_t>(ckpt_.arch.max_samples());
    if (x.size() > cap) {
      throw ValidationError("input exceeds the model's analysis window (" +
                            std::to_string(x.size()) + " samples)");
    }
    std::vector<double> padded = x;
    padded.resize(cap, 0.0);
    return padded;
  }

  ad::Var encode_padded(ad::Tape& tape, const net::ParamVars& pv,
                        const std::vector<double>& padded) const {
    ad::Mat row(1, static_cast<Eigen::Index>(padded.size()));
    for (std::size_t i = 0; i < padded.size(); ++i) {
      row(0, static_cast<Eigen::Index>(i)) = padded[i];
    }
    ad::Var wave = tape.leaf(std::move(row), false);
    return net::encode(tape, ckpt_.arch, consts_, pv, wave);
  }

  void require_multilingual() const {
    if (!handle_.multilingual) {
      throw CapabilityError("model '" + handle_.model_id +
                            "' is English-only: no language detection");
    }
  }

  // Sorted language codes define the score-vector layout.
  std::vector<std::string> language_codes() const {
    std::vector<std::string> codes;
    for (const auto& [code, id] : tok_.language_ids()) codes.push_back(code);
    return codes;
  }

  int language_slot(const std::string& code) const {
    const auto codes = language_codes();
    for (std::size_t i = 0; i < codes.size(); ++i) {
      if (codes[i] == code) return static_cast<int>(i);
    }
    throw ValidationError("unsupported language code '" + code + "'");
  }

  // Log-probabilities over languages from the first decoder step (1×L row).
  ad::Var language_logprobs(ad::Tape& tape, const net::ParamVars& pv, ad::Var enc) const {
    ad::Var logits = net::decode_logits(tape, ckpt_.arch, pv, enc, {tok_.sot()});
    std::vector<int> lang_ids;
    for (const auto& code : language_codes()) {
      lang_ids.push_back(tok_.language_id(code));
    }
    return ad::log_softmax_rows(ad::gather_cols(logits, lang_ids));
  }

  LanguageScores detect_language(ad::Tape& tape, const net::ParamVars& pv,
                                 ad::Var enc) const {
    ad::Var logp = language_logprobs(tape, pv, enc);
    LanguageScores ls;
    const auto codes = language_codes();
    double best = -1.0;
    for (std::size_t i = 0; i < codes.size(); ++i) {
      const double p = std::exp(logp.value()(0, static_cast<Eigen::Index>(i)));
      ls.probs[codes[i]] = p;
      if (p > best) {
        best = p;
        ls.argmax = codes[i];
      }
    }
    return ls;
  }

  std::vector<int> decoder_prefix(const std::string& language) const {
    std::vector<int> prefix = {tok_.sot()};
    if (handle_.multilingual) {
      if (language.empty()) {
        throw ValidationError("multilingual loss needs an explicit language");
      }
      prefix.push_back(tok_.language_id(language));
    }
    prefix.push_back(tok_.task_transcribe());
    return prefix;
  }

  struct Beam {
    std::vector<int> tokens;  // includes prefix
    double score = 0.0;       // sum of generated-token log-probs
    int generated = 0;
    bool done = false;
  };

  std::pair<std::vector<int>, double> beam_search(ad::Tape& tape, const net::ParamVars& pv,
                                                  ad::Var enc, const std::vector<int>& prefix,
                                                  int beam_size) const {
    const int max_new = ckpt_.arch.max_text_positions - static_cast<int>(prefix.size());
    std::vector<Beam> beams = {Beam{prefix, 0.0, 0, false}};
    for (int step = 0; step < max_new; ++step) {
      bool any_live = false;
      struct Cand {
        double score;
        std::size_t beam;
        int token;  // -1 marks a finished beam carried over
      };
      std::vector<Cand> cands;
      for (std::size_t b = 0; b < beams.size(); ++b) {
        if (beams[b].done) {
          cands.push_back({beams[b].score, b, -1});
          continue;
        }
        any_live = true;
        ad::Var logits = net::decode_logits(tape, ckpt_.arch, pv, enc, beams[b].tokens);
        ad::Var logp = ad::log_softmax_rows(logits);
        const auto last = logp.value().rows() - 1;
        for (int v = 0; v < tok_.size(); ++v) {
          cands.push_back({beams[b].score + logp.value()(last, v), b, v});
        }
      }
      if (!any_live) break;
      std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.beam != b.beam) return a.beam < b.beam;
        return a.token < b.token;
      });
      std::vector<Beam> next;
      for (const Cand& c : cands) {
        if (static_cast<int>(next.size()) == beam_size) break;
        Beam nb = beams[c.beam];
        if (c.token >= 0) {
          nb.tokens.push_back(c.token);
          nb.score = c.score;
          nb.generated += 1;
          nb.done = c.token == tok_.eot();
        }
        next.push_back(std::move(nb));
      }
      beams = std::move(next);
    }

    // Rank by mean generated-token log-prob; unfinished beams are still
    // usable (truncated decode).
    const Beam* best = nullptr;
    double best_avg = 0.0;
    for (const Beam& b : beams) {
      const double avg = b.generated > 0 ? b.score / b.generated : -1e30;
      if (best == nullptr || avg > best_avg + 1e-12 ||
          (std::abs(avg - best_avg) <= 1e-12 && b.tokens < best->tokens)) {
        best = &b;
        best_avg = avg;
      }
    }
    std::vector<int> generated(best->tokens.begin() + static_cast<long>(prefix.size()),
                               best->tokens.end());
    return {generated, best_avg};
  }

  static void extract_gradient(ad::Tape& tape, ad::Var wave, std::size_t n_out,
                               LossValue& lv) {
    const ad::Mat& g = wave.grad();
    lv.gradient_wrt_input.resize(n_out);
    for (std::size_t i = 0; i < n_out; ++i) {
      const double v = g(0, static_cast<Eigen::Index>(i));
      if (!std::isfinite(v)) {
        throw NumericalError("non-finite input gradient");
      }
      lv.gradient_wrt_input[i] = v;
    }
  }

  Checkpoint ckpt_;
  net::Constants consts_;
  Tokenizer tok_;
  ModelHandle handle_;
};

inline std::string model_dir_default() {
  const char* env = std::getenv("ADVBENCH_MODEL_DIR");
  return env != nullptr && *env != '\0' ? env : "fixtures/models";
}

inline std::unique_ptr<SubjectModel> load_model(const std::string& model_id,
                                                const std::string& dir = "") {
  const std::string base = dir.empty() ? model_dir_default() : dir;
  return std::make_unique<MiniTransformer>(
      load_checkpoint(base + "/" + model_id + ".advm"));
}

}  // namespace advbench::model
