#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "advbench/common/errors.hpp"
#include "advbench/metrics/text.hpp"

namespace advbench::metrics {

struct ScoreReport {
  double wer = 0.0;  // (S + I + D) / ref_len; may exceed 1.0
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
  std::size_t ref_len = 0;
};

// Word-level Levenshtein alignment with unit costs. Both strings are
// normalized before alignment. When several minimal alignments exist the
// backtrace prefers match/substitution over deletion over insertion; the
// distance itself is unique either way.
inline ScoreReport wer(const std::string& reference, const std::string& hypothesis) {
  const auto ref = split_words(normalize_text(reference));
  const auto hyp = split_words(normalize_text(hypothesis));
  if (ref.empty()) throw ValidationError("wer: empty normalized reference");

  const std::size_t n = ref.size();
  const std::size_t m = hyp.size();
  std::vector<std::vector<std::size_t>> d(n + 1, std::vector<std::size_t>(m + 1));
  for (std::size_t i = 0; i <= n; ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= m; ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      const std::size_t del = d[i - 1][j] + 1;
      const std::size_t ins = d[i][j - 1] + 1;
      d[i][j] = std::min({sub, del, ins});
    }
  }

  ScoreReport r;
  r.ref_len = n;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 &&
        d[i][j] == d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (ref[i - 1] != hyp[j - 1]) ++r.substitutions;
      --i;
      --j;
    } else if (i > 0 && d[i][j] == d[i - 1][j] + 1) {
      ++r.deletions;
      --i;
    } else {
      ++r.insertions;
      --j;
    }
  }
  r.wer = static_cast<double>(r.substitutions + r.insertions + r.deletions) /
          static_cast<double>(n);
  return r;
}

}  // namespace advbench::metrics
