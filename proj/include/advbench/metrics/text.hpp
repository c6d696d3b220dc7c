#pragma once

#include <cctype>
#include <sstream>
#include <string>
#include <vector>

namespace advbench::metrics {

// Scoring-side text normalization, applied identically to references and
// hypotheses: ASCII lowercase, drop punctuation except apostrophes, collapse
// runs of whitespace, trim. Bytes >= 0x80 pass through untouched.
inline std::string normalize_text(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (unsigned char c : s) {
    if (std::isspace(c)) {
      if (!out.empty()) pending_space = true;
      continue;
    }
    bool keep;
    if (c >= 0x80) {
      keep = true;
    } else if (std::isalnum(c) || c == '\'') {
      keep = true;
    } else {
      keep = false;
    }
    if (!keep) continue;
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(c < 0x80 ? static_cast<char>(std::tolower(c))
                           : static_cast<char>(c));
  }
  return out;
}

inline std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> words;
  std::istringstream iss(s);
  std::string w;
  while (iss >> w) words.push_back(w);
  return words;
}

}  // namespace advbench::metrics
