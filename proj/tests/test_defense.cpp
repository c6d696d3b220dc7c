#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <string>
#include <vector>

#include "advbench/defense/smoothing.hpp"
#include "support/mock_model.hpp"
#include "support/unit_model.hpp"

using namespace advbench;
using defense::SmoothingConfig;
using Catch::Approx;

TEST_CASE("smoothing config validation") {
  SmoothingConfig c;
  c.sigma = -0.1;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c.sigma = 0.02;
  c.n_draws = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c.n_draws = 3;
  c.vote = SmoothingConfig::Vote::single;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c.vote = SmoothingConfig::Vote::majority_exact;
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("zero sigma is an exact passthrough") {
  static model::MiniTransformer m(testsupport::unit_checkpoint(91));
  std::vector<double> x(4000);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = 0.2 * std::sin(0.05 * static_cast<double>(i));
  }
  SmoothingConfig cfg;
  cfg.sigma = 0.0;
  cfg.seed = 123;
  const auto smoothed = defense::smooth_transcribe(m, x, cfg);
  CHECK(smoothed.text == m.transcribe(x).text);
  CHECK(smoothed.draw_transcripts.size() == 1);
}

TEST_CASE("smoothing is deterministic for a fixed seed and clips its draws") {
  testsupport::MockModel mock;
  mock.transcribe_fn = [](const std::vector<double>& x, int) {
    double mean = 0.0;
    for (double v : x) mean += v;
    return mean >= 0.0 ? std::string("a") : std::string("b");
  };
  std::vector<double> x(500, 1.0);  // at the clip boundary already

  SmoothingConfig cfg;
  cfg.sigma = 0.5;
  cfg.n_draws = 7;
  cfg.vote = SmoothingConfig::Vote::majority_exact;
  cfg.seed = 9;
  const auto a = defense::smooth_transcribe(mock, x, cfg);
  CHECK(mock.max_abs_seen <= 1.0);
  const auto b = defense::smooth_transcribe(mock, x, cfg);
  CHECK(a.text == b.text);
  CHECK(a.draw_transcripts == b.draw_transcripts);
  CHECK(a.draw_transcripts.size() == 7);
}

TEST_CASE("majority vote picks the most common exact transcript") {
  testsupport::MockModel mock;
  int call = 0;
  mock.transcribe_fn = [&call](const std::vector<double>&, int) {
    return call++ < 2 ? std::string("a b") : std::string("b");
  };
  std::vector<double> x(100, 0.0);
  SmoothingConfig cfg;
  cfg.sigma = 0.01;
  cfg.n_draws = 5;
  cfg.vote = SmoothingConfig::Vote::majority_exact;
  const auto r = defense::smooth_transcribe(mock, x, cfg);
  CHECK(r.text == "b");  // three of five draws
}

TEST_CASE("majority ties break on the lowest average loss") {
  testsupport::MockModel mock;
  int call = 0;
  mock.transcribe_fn = [&call](const std::vector<double>&, int) {
    return call++ % 2 == 0 ? std::string("a") : std::string("b");
  };
  mock.loss_fn = [&mock](const std::vector<double>&,
                         const model::TokenSequence& t) {
    return t.text == "b" ? 1.0 : 2.0;
  };
  std::vector<double> x(100, 0.0);
  SmoothingConfig cfg;
  cfg.sigma = 0.01;
  cfg.n_draws = 4;  // two votes each
  cfg.vote = SmoothingConfig::Vote::majority_exact;
  const auto r = defense::smooth_transcribe(mock, x, cfg);
  CHECK(r.text == "b");
  CHECK(mock.loss_calls == 8);  // two candidates scored across four draws
}

TEST_CASE("single-draw smoothing changes transcripts only via the noise") {
  static model::MiniTransformer m(testsupport::unit_checkpoint(92));
  std::vector<double> x(4000);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = 0.15 * std::sin(0.03 * static_cast<double>(i));
  }
  SmoothingConfig cfg;
  cfg.sigma = 0.02;
  cfg.n_draws = 1;
  cfg.seed = 5;
  const auto a = defense::smooth_transcribe(m, x, cfg);
  const auto b = defense::smooth_transcribe(m, x, cfg);
  CHECK(a.text == b.text);
  CHECK(a.draw_transcripts.size() == 1);
}
