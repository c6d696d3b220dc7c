#pragma once

#include <map>
#include <string>
#include <vector>

#include "advbench/common/errors.hpp"
#include "advbench/metrics/text.hpp"

namespace advbench::model {

// Word-level tokenizer over a closed vocabulary. Specials occupy the low ids;
// language tokens exist only in multilingual vocabularies.
class Tokenizer {
 public:
  Tokenizer() = default;
  explicit Tokenizer(std::vector<std::string> vocab) : vocab_(std::move(vocab)) {
    for (std::size_t i = 0; i < vocab_.size(); ++i) {
      const std::string& tok = vocab_[i];
      if (!index_.emplace(tok, static_cast<int>(i)).second) {
        throw ValidationError("tokenizer: duplicate vocab entry '" + tok + "'");
      }
      if (tok.rfind("<lang:", 0) == 0) {
        lang_ids_[tok.substr(6, tok.size() - 7)] = static_cast<int>(i);
      }
    }
    sot_ = require("<sot>");
    eot_ = require("<eot>");
    task_ = require("<task:transcribe>");
    unk_ = require("<unk>");
  }

  int size() const { return static_cast<int>(vocab_.size()); }
  int sot() const { return sot_; }
  int eot() const { return eot_; }
  int task_transcribe() const { return task_; }
  int unk() const { return unk_; }

  bool is_special(int id) const {
    const std::string& s = vocab_.at(static_cast<std::size_t>(id));
    return s.size() >= 2 && s.front() == '<' && s.back() == '>';
  }

  const std::vector<std::string>& vocab() const { return vocab_; }
  const std::map<std::string, int>& language_ids() const { return lang_ids_; }

  int language_id(const std::string& code) const {
    auto it = lang_ids_.find(code);
    if (it == lang_ids_.end()) {
      throw ValidationError("tokenizer: unsupported language code '" + code + "'");
    }
    return it->second;
  }

  std::string language_of(int id) const {
    for (const auto& [code, lid] : lang_ids_) {
      if (lid == id) return code;
    }
    throw ValidationError("tokenizer: id is not a language token");
  }

  // Text tokens for a transcript (normalized, no specials appended).
  std::vector<int> encode(const std::string& text) const {
    std::vector<int> out;
    for (const auto& w : metrics::split_words(metrics::normalize_text(text))) {
      auto it = index_.find(w);
      out.push_back(it == index_.end() ? unk_ : it->second);
    }
    return out;
  }

  // Joins non-special tokens with single spaces.
  std::string decode(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) {
      if (id < 0 || id >= size()) {
        throw ValidationError("tokenizer: id out of range");
      }
      if (is_special(id)) continue;
      if (!out.empty()) out += ' ';
      out += vocab_[static_cast<std::size_t>(id)];
    }
    return out;
  }

 private:
  int require(const std::string& tok) const {
    auto it = index_.find(tok);
    if (it == index_.end()) {
      throw ValidationError("tokenizer: vocabulary lacks required token " + tok);
    }
    return it->second;
  }

  std::vector<std::string> vocab_;
  std::map<std::string, int> index_;
  std::map<std::string, int> lang_ids_;
  int sot_ = -1, eot_ = -1, task_ = -1, unk_ = -1;
};

// A decoder-ready target: text tokens terminated by <eot>.
struct TokenSequence {
  std::vector<int> tokens;
  std::string text;
  bool includes_task_prefix = false;
};

inline TokenSequence make_target(const Tokenizer& tok, const std::string& text) {
  TokenSequence seq;
  seq.text = metrics::normalize_text(text);
  if (seq.text.empty()) {
    throw ValidationError("target text is empty after normalization");
  }
  seq.tokens = tok.encode(text);
  seq.tokens.push_back(tok.eot());
  return seq;
}

}  // namespace advbench::model
