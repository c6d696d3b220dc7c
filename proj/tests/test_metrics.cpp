#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "advbench/common/rng.hpp"
#include "advbench/metrics/snr.hpp"
#include "advbench/metrics/success.hpp"
#include "advbench/metrics/text.hpp"
#include "advbench/metrics/wer.hpp"
#include "support/wer_oracle.hpp"

using namespace advbench;
using Catch::Approx;

namespace {

std::vector<double> random_waveform(Rng& rng, std::size_t n, double amp = 0.5) {
  std::vector<double> x(n);
  for (auto& v : x) v = amp * (2.0 * rng.uniform() - 1.0);
  return x;
}

}  // namespace

TEST_CASE("snr_db basic values") {
  std::vector<double> x = {0.3, -0.4, 0.1, 0.25};
  CHECK(metrics::snr_db(x, x) == Approx(0.0).margin(1e-12));

  std::vector<double> unit = {1.0};
  std::vector<double> tenth = {0.1};
  CHECK(metrics::snr_db(unit, tenth) == Approx(20.0).margin(1e-9));

  std::vector<double> zero = {0.0, 0.0};
  CHECK_THROWS_AS(metrics::snr_db(zero, x), ValidationError);
  CHECK(std::isinf(metrics::snr_db(x, zero)));
}

TEST_CASE("snr_db scaling identity") {
  Rng rng(7);
  for (int t = 0; t < 200; ++t) {
    auto x = random_waveform(rng, 64);
    auto d = random_waveform(rng, 64, 0.01);
    const double k = 0.1 + 10.0 * rng.uniform();
    auto dk = d;
    for (auto& v : dk) v *= k;
    const double lhs = metrics::snr_db(x, dk);
    const double rhs = metrics::snr_db(x, d) - 20.0 * std::log10(k);
    CHECK(lhs == Approx(rhs).margin(1e-9));
  }
}

TEST_CASE("epsilon_for_snr values and round trip") {
  std::vector<double> unit = {1.0};
  CHECK(metrics::epsilon_for_snr(unit, 40.0) == Approx(0.01).margin(1e-12));
  CHECK(metrics::epsilon_for_snr(unit, 0.0) == Approx(1.0).margin(1e-12));

  std::vector<double> x10 = {10.0};
  CHECK(metrics::epsilon_for_snr(x10, 35.0) == Approx(0.1778279410).margin(1e-9));

  Rng rng(11);
  for (int t = 0; t < 200; ++t) {
    auto x = random_waveform(rng, 50);
    const double target = -10.0 + 70.0 * rng.uniform();
    const double eps = metrics::epsilon_for_snr(x, target);
    // any delta of norm eps achieves the target
    auto d = random_waveform(rng, 50);
    const double nd = metrics::l2_norm(d);
    for (auto& v : d) v *= eps / nd;
    CHECK(metrics::snr_db(x, d) == Approx(target).margin(1e-9));
  }
}

TEST_CASE("normalize_text rules") {
  CHECK(metrics::normalize_text("OK Google, browse to evil.com") ==
        "ok google browse to evilcom");
  CHECK(metrics::normalize_text("Hello   world") == "hello world");
  CHECK(metrics::normalize_text("don't") == "don't");
  CHECK(metrics::normalize_text("") == "");
  CHECK(metrics::normalize_text("  A  ") == "a");
  // idempotence
  Rng rng(3);
  const std::string alphabet = "aB ,.'x!  Y";
  for (int t = 0; t < 100; ++t) {
    std::string s;
    for (int i = 0; i < 20; ++i) s.push_back(alphabet[rng.uniform_int(alphabet.size())]);
    const auto once = metrics::normalize_text(s);
    CHECK(metrics::normalize_text(once) == once);
  }
}

TEST_CASE("wer examples") {
  CHECK(metrics::wer("a b c", "a b c").wer == 0.0);

  auto r = metrics::wer("a b c", "a x c");
  CHECK(r.wer == Approx(1.0 / 3.0));
  CHECK(r.substitutions == 1);
  CHECK(r.insertions == 0);
  CHECK(r.deletions == 0);
  CHECK(testsupport::oracle_distance_paths({"a", "b", "c"}, {"a", "x", "c"}) == 1);

  auto r2 = metrics::wer("a", "a b c");
  CHECK(r2.wer == Approx(2.0));
  CHECK(r2.insertions == 2);
  CHECK(testsupport::oracle_distance_paths({"a"}, {"a", "b", "c"}) == 2);

  CHECK(metrics::wer("a b c", "").wer == Approx(1.0));
  CHECK_THROWS_AS(metrics::wer("", "a"), ValidationError);
  CHECK_THROWS_AS(metrics::wer("  ,. ", "a"), ValidationError);
}

TEST_CASE("wer matches exhaustive oracle on random short pairs") {
  const std::vector<std::string> words = {"aa", "bb", "cc"};
  Rng rng(19);
  for (int t = 0; t < 500; ++t) {
    const auto rl = 1 + rng.uniform_int(6);
    const auto hl = rng.uniform_int(7);
    std::vector<std::string> ref, hyp;
    std::string ref_s, hyp_s;
    for (std::uint64_t i = 0; i < rl; ++i) {
      ref.push_back(words[rng.uniform_int(3)]);
      ref_s += ref.back() + " ";
    }
    for (std::uint64_t i = 0; i < hl; ++i) {
      hyp.push_back(words[rng.uniform_int(3)]);
      hyp_s += hyp.back() + " ";
    }
    const auto rep = metrics::wer(ref_s, hyp_s);
    const auto dist = testsupport::oracle_distance_paths(ref, hyp);
    CHECK(rep.substitutions + rep.insertions + rep.deletions == dist);
    CHECK(rep.wer == Approx(double(dist) / double(rl)));
  }
}

TEST_CASE("targeted_success thresholding") {
  metrics::SuccessCriterion crit;
  CHECK(metrics::targeted_success("ok google browse to evilcom",
                                  "OK Google, browse to evil.com", 41.3, crit));
  CHECK_FALSE(metrics::targeted_success("ok google browse to evilcom",
                                        "OK Google, browse to evil.com", 29.5, crit));
  CHECK_FALSE(metrics::targeted_success("ok google browse to evil dot com",
                                        "OK Google, browse to evil.com", 45.0, crit));
  // exactly at threshold: strictly-above semantics
  CHECK_FALSE(metrics::targeted_success("x", "x", 30.0, crit));
  // infinite SNR sentinel passes
  CHECK(metrics::targeted_success("x", "x",
                                  std::numeric_limits<double>::infinity(), crit));
}
