#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "advbench/audio/wav.hpp"
#include "advbench/common/errors.hpp"
#include "advbench/common/rng.hpp"

// Synthetic multilingual speech-like corpus. Every word is a two-tone chord
// from a shared 16-slot alphabet; each language reads the same chord alphabet
// with its own lexicon, and carries a language cue as a low-frequency hum.
// Resource imbalance across languages is built into the training counts.
namespace advbench::fixtures {

constexpr int kRate = 16000;
constexpr int kWordSamples = 5120;  // 0.32 s
constexpr int kGapSamples = 640;
constexpr int kEdgeSamples = 800;
constexpr int kRampSamples = 160;
constexpr int kChordSlots = 16;
constexpr double kSlotBaseHz = 1200.0;
constexpr double kSlotTopHz = 7000.0;
constexpr double kHumBaseHz = 150.0;
constexpr double kHumStepHz = 125.0;

// Geometric spacing keeps neighbouring slots apart by a constant mel-ish
// ratio, so every slot stays resolvable through the log-frequency frontend.
inline double slot_hz(int s) {
  const double ratio = std::pow(kSlotTopHz / kSlotBaseHz,
                                1.0 / (kChordSlots - 1));
  return kSlotBaseHz * std::pow(ratio, s);
}
constexpr double kWordAmp = 0.08;
constexpr double kHumAmp = 0.04;

struct LanguageSpec {
  std::string code;
  int lexicon_size;
  int train_count;
};

inline const std::vector<LanguageSpec>& language_table() {
  static const std::vector<LanguageSpec> t = {
      {"hy", 25, 20},  {"lt", 25, 30},  {"cs", 25, 60},
      {"da", 25, 80},  {"id", 25, 120}, {"it", 25, 200},
      {"en", 40, 400}, {"tl", 25, 40},  {"sr", 25, 40},
  };
  return t;
}

inline int language_index(const std::string& code) {
  const auto& t = language_table();
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i].code == code) return static_cast<int>(i);
  }
  throw ValidationError("unknown corpus language '" + code + "'");
}

// Source languages attacked in the experiments (all but the target-only two).
inline std::vector<std::string> source_languages() {
  return {"hy", "lt", "cs", "da", "id", "it", "en"};
}

inline std::vector<std::string> target_languages() { return {"en", "tl", "sr"}; }

namespace detail {

inline std::string make_word(Rng& rng) {
  static const std::string cons = "bdfgklmnprstvz";
  static const std::string vows = "aeiou";
  std::string w;
  const int syllables = 2 + static_cast<int>(rng.uniform_int(2));
  for (int s = 0; s < syllables; ++s) {
    w += cons[rng.uniform_int(cons.size())];
    w += vows[rng.uniform_int(vows.size())];
  }
  return w;
}

}  // namespace detail

// Per-language word lists. Seeded independently of any corpus seed so the
// vocabulary (and with it every trained checkpoint) stays stable even when
// the audio is regenerated under a different seed.
inline std::vector<std::vector<std::string>> lexica() {
  std::set<std::string> used = {"<pad>", "<sot>", "<eot>", "<task:transcribe>",
                                "<unk>"};
  std::vector<std::vector<std::string>> out;
  const auto& langs = language_table();
  for (std::size_t li = 0; li < langs.size(); ++li) {
    std::vector<std::string> words;
    if (langs[li].code == "en") {
      words = {"ok", "google", "browse", "to", "evilcom"};
      for (const auto& w : words) used.insert(w);
    }
    Rng rng(derive_seed(9000 + li, "lexicon"));
    while (static_cast<int>(words.size()) < langs[li].lexicon_size) {
      const auto w = detail::make_word(rng);
      if (used.insert(w).second) words.push_back(w);
    }
    out.push_back(std::move(words));
  }
  return out;
}

// Chord for word index j: the j-th entry of a fixed shuffle of all slot
// pairs (s1 < s2). Lexicographic order would give every low-index word the
// same first tone; the shuffle spreads small lexica over the whole alphabet.
// The mapping is shared across languages, so the same audio means different
// words depending on the decoded language.
inline std::pair<int, int> chord_for_word(int j) {
  static const std::vector<std::pair<int, int>> pairs = [] {
    std::vector<std::pair<int, int>> p;
    for (int a = 0; a < kChordSlots; ++a) {
      for (int b = a + 1; b < kChordSlots; ++b) p.emplace_back(a, b);
    }
    Rng rng(derive_seed(7777, "chords"));
    for (std::size_t i = p.size(); i > 1; --i) {
      std::swap(p[i - 1], p[rng.uniform_int(i)]);
    }
    return p;
  }();
  return pairs.at(static_cast<std::size_t>(j));
}

// Shared token inventory of the multilingual model family.
inline std::vector<std::string> family_vocab() {
  std::vector<std::string> v = {"<pad>", "<sot>", "<eot>", "<task:transcribe>",
                                "<unk>"};
  for (const auto& l : language_table()) v.push_back("<lang:" + l.code + ">");
  for (const auto& words : lexica()) {
    for (const auto& w : words) v.push_back(w);
  }
  return v;
}

inline std::vector<std::string> english_vocab() {
  std::vector<std::string> v = {"<pad>", "<sot>", "<eot>", "<task:transcribe>",
                                "<unk>"};
  const auto lex = lexica();
  const int en = language_index("en");
  for (const auto& w : lex[en]) v.push_back(w);
  return v;
}

struct Utterance {
  std::string id;
  std::string language;
  std::string text;
  std::vector<double> waveform;
};

// Deterministic per-id synthesis; the generation order never matters.
inline Utterance synthesize(const std::string& id, const std::string& lang,
                            std::uint64_t corpus_seed,
                            const std::vector<std::vector<std::string>>& lex) {
  const int li = language_index(lang);
  Rng rng(derive_seed(corpus_seed, id));
  const int n_words = 4 + static_cast<int>(rng.uniform_int(5));

  Utterance u;
  u.id = id;
  u.language = lang;
  std::vector<int> word_ids;
  for (int w = 0; w < n_words; ++w) {
    const int j = static_cast<int>(rng.uniform_int(lex[li].size()));
    word_ids.push_back(j);
    if (w > 0) u.text += ' ';
    u.text += lex[li][j];
  }

  const int total = 2 * kEdgeSamples + n_words * kWordSamples +
                    (n_words - 1) * kGapSamples;
  u.waveform.assign(total, 0.0);

  const double fh = kHumBaseHz + kHumStepHz * li;
  const double ph = 2.0 * std::numbers::pi * rng.uniform();
  for (int t = 0; t < total; ++t) {
    u.waveform[t] +=
        kHumAmp * std::sin(2.0 * std::numbers::pi * fh * t / kRate + ph);
  }

  int pos = kEdgeSamples;
  for (int j : word_ids) {
    const auto [s1, s2] = chord_for_word(j);
    const double f1 = slot_hz(s1);
    const double f2 = slot_hz(s2);
    const double a1 = kWordAmp * (0.9 + 0.2 * rng.uniform());
    const double a2 = kWordAmp * (0.9 + 0.2 * rng.uniform());
    const double p1 = 2.0 * std::numbers::pi * rng.uniform();
    const double p2 = 2.0 * std::numbers::pi * rng.uniform();
    for (int k = 0; k < kWordSamples; ++k) {
      double env = 1.0;
      if (k < kRampSamples) {
        env = 0.5 - 0.5 * std::cos(std::numbers::pi * k / kRampSamples);
      } else if (k >= kWordSamples - kRampSamples) {
        env = 0.5 - 0.5 * std::cos(std::numbers::pi * (kWordSamples - 1 - k) /
                                   kRampSamples);
      }
      const double t = pos + k;
      u.waveform[pos + k] +=
          env * (a1 * std::sin(2.0 * std::numbers::pi * f1 * t / kRate + p1) +
                 a2 * std::sin(2.0 * std::numbers::pi * f2 * t / kRate + p2));
    }
    pos += kWordSamples + kGapSamples;
  }

  const double gain = 0.9 + 0.2 * rng.uniform();
  for (auto& v : u.waveform) v *= gain;
  return u;
}

namespace detail {

inline void append_manifest_line(std::ofstream& os, const Utterance& u) {
  nlohmann::json j{{"id", u.id},
                   {"audio", "wav/" + u.id + ".wav"},
                   {"text", u.text},
                   {"lang", u.language}};
  os << j.dump() << '\n';
}

}  // namespace detail

// Writes WAVs, manifests, per-language training-hour totals, and the lexica.
inline void generate_corpus(const std::filesystem::path& out_dir,
                            std::uint64_t seed = 4242) {
  namespace fs = std::filesystem;
  const auto lex = lexica();
  fs::create_directories(out_dir / "wav");

  std::map<std::string, double> train_seconds;
  auto emit = [&](const Utterance& u, std::ofstream& manifest) {
    audio::write_wav(u.waveform, out_dir / "wav" / (u.id + ".wav"), kRate);
    detail::append_manifest_line(manifest, u);
  };
  auto pad3 = [](int n) {
    std::string s = std::to_string(n);
    while (s.size() < 3) s.insert(s.begin(), '0');
    return s;
  };

  {
    std::ofstream multi(out_dir / "train_multi.jsonl");
    std::ofstream en_only(out_dir / "train_en.jsonl");
    for (const auto& spec : language_table()) {
      double secs = 0.0;
      for (int i = 0; i < spec.train_count; ++i) {
        const auto u = synthesize(spec.code + "_train_" + pad3(i), spec.code,
                                  seed, lex);
        emit(u, multi);
        if (spec.code == "en") detail::append_manifest_line(en_only, u);
        secs += static_cast<double>(u.waveform.size()) / kRate;
      }
      train_seconds[spec.code] = secs;
    }
  }

  for (const auto& spec : language_table()) {
    std::ofstream ev(out_dir / ("eval_" + spec.code + ".jsonl"));
    for (int i = 0; i < 20; ++i) {
      emit(synthesize(spec.code + "_eval_" + pad3(i), spec.code, seed, lex), ev);
    }
  }

  {
    std::ofstream utr(out_dir / "universal_train.jsonl");
    for (const auto& code : source_languages()) {
      for (int i = 0; i < 2; ++i) {
        emit(synthesize(code + "_utrain_" + pad3(i), code, seed, lex), utr);
      }
    }
    std::ofstream uev(out_dir / "universal_eval.jsonl");
    const auto sources = source_languages();
    std::vector<int> counts(sources.size(), 0);
    for (int i = 0; i < 20; ++i) {
      const auto& code = sources[i % sources.size()];
      emit(synthesize(code + "_ueval_" + pad3(counts[i % sources.size()]++),
                      code, seed, lex),
           uev);
    }
  }

  {
    nlohmann::json hours;
    for (const auto& [code, secs] : train_seconds) hours[code] = secs / 3600.0;
    std::ofstream os(out_dir / "training_hours.json");
    os << hours.dump(2) << '\n';
  }
  {
    nlohmann::json jl;
    for (std::size_t i = 0; i < lex.size(); ++i) {
      jl[language_table()[i].code] = lex[i];
    }
    std::ofstream os(out_dir / "lexicon.json");
    os << jl.dump(2) << '\n';
  }
}

}  // namespace advbench::fixtures
