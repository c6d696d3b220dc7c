#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "advbench/audio/flac.hpp"
#include "advbench/audio/resample.hpp"
#include "advbench/audio/wav.hpp"
#include "advbench/common/errors.hpp"
#include "advbench/common/rng.hpp"

namespace advbench::audio {

struct AudioExample {
  std::string id;
  std::vector<double> waveform;  // mono, [-1, 1]
  unsigned sample_rate = 16000;
  std::string reference_text;
  std::string language = "unknown";  // ISO-639-1 code
  std::string source_path;
};

struct ManifestEntry {
  std::string id;
  std::string audio_path;  // resolved against the manifest directory
  std::string text;
  std::string language;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  int format_version = 1;
};

// Loads a JSON-lines manifest: one object per line with keys `id`, `audio`,
// `text`, `lang`. Unknown keys are ignored. Relative audio paths are resolved
// against the manifest's directory and must exist.
inline Manifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path);
  const auto base = std::filesystem::path(path).parent_path();

  Manifest mf;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("manifest " + path + " line " + std::to_string(line_no) +
                       ": " + e.what());
    }
    if (!j.is_object() || !j.contains("id") || !j.contains("audio") ||
        !j.contains("text") || !j.contains("lang")) {
      throw ParseError("manifest " + path + " line " + std::to_string(line_no) +
                       ": need keys id/audio/text/lang");
    }
    ManifestEntry e;
    try {
      e.id = j.at("id").get<std::string>();
      e.audio_path = j.at("audio").get<std::string>();
      e.text = j.at("text").get<std::string>();
      e.language = j.at("lang").get<std::string>();
    } catch (const nlohmann::json::exception& ex) {
      throw ParseError("manifest " + path + " line " + std::to_string(line_no) +
                       ": " + ex.what());
    }
    if (!seen.insert(e.id).second) {
      throw ValidationError("manifest " + path + ": duplicate id '" + e.id + "'");
    }
    std::filesystem::path ap(e.audio_path);
    if (ap.is_relative()) ap = base / ap;
    e.audio_path = ap.string();
    if (!std::filesystem::exists(ap)) {
      throw ValidationError("manifest " + path + ": audio not found for id '" +
                            e.id + "': " + e.audio_path);
    }
    mf.entries.push_back(std::move(e));
  }
  return mf;
}

// Loads a WAV or FLAC file (sniffed by magic bytes), averages channels to
// mono and resamples to target_rate.
inline std::vector<double> load_audio(const std::string& path,
                                      unsigned target_rate = 16000) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw IoError("cannot open audio file: " + path);
  char magic[4] = {0, 0, 0, 0};
  probe.read(magic, 4);
  probe.close();

  RawAudio raw;
  if (std::memcmp(magic, "RIFF", 4) == 0) {
    raw = read_wav(path);
  } else if (std::memcmp(magic, "fLaC", 4) == 0) {
    raw = read_flac(path);
  } else {
    throw IoError("unsupported audio container: " + path);
  }
  if (raw.samples.empty()) throw ValidationError("zero-length audio: " + path);

  std::vector<double> mono;
  if (raw.channels == 1) {
    mono = std::move(raw.samples);
  } else {
    const std::size_t frames = raw.samples.size() / raw.channels;
    mono.resize(frames);
    for (std::size_t i = 0; i < frames; ++i) {
      double s = 0.0;
      for (unsigned c = 0; c < raw.channels; ++c) s += raw.samples[i * raw.channels + c];
      mono[i] = s / raw.channels;
    }
  }
  for (double v : mono) {
    if (!std::isfinite(v)) throw ValidationError("non-finite sample in: " + path);
  }
  return resample(mono, raw.sample_rate, target_rate);
}

inline AudioExample load_example(const ManifestEntry& e, unsigned target_rate = 16000) {
  AudioExample ex;
  ex.id = e.id;
  ex.waveform = load_audio(e.audio_path, target_rate);
  ex.sample_rate = target_rate;
  ex.reference_text = e.text;
  ex.language = e.language.empty() ? "unknown" : e.language;
  ex.source_path = e.audio_path;
  return ex;
}

// Deterministic subsample: seeded shuffle, take the first max_count, restore
// manifest order among the selected entries.
inline std::vector<ManifestEntry> subsample(const Manifest& mf, std::size_t max_count,
                                            std::uint64_t seed) {
  if (max_count == 0 || mf.entries.size() <= max_count) return mf.entries;
  std::vector<std::size_t> idx(mf.entries.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(derive_seed(seed, "subsample"));
  rng.shuffle(idx);
  idx.resize(max_count);
  std::sort(idx.begin(), idx.end());
  std::vector<ManifestEntry> out;
  out.reserve(max_count);
  for (auto i : idx) out.push_back(mf.entries[i]);
  return out;
}

}  // namespace advbench::audio
