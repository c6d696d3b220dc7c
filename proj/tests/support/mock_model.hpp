#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "advbench/common/errors.hpp"
#include "advbench/model/subject.hpp"
#include "advbench/model/tokenizer.hpp"

namespace advbench::testsupport {

// English-only stand-in with scriptable transcription and a quadratic loss.
// Lets schedule/vote logic be tested without a trained network.
class MockModel final : public model::SubjectModel {
 public:
  std::function<std::string(const std::vector<double>&, int call)> transcribe_fn;
  std::function<double(const std::vector<double>&, const model::TokenSequence&)>
      loss_fn;
  mutable int transcribe_calls = 0;
  mutable int loss_calls = 0;
  mutable double max_abs_seen = 0.0;

  MockModel()
      : tok_({"<pad>", "<sot>", "<eot>", "<task:transcribe>", "<unk>",
              "a", "b", "target", "words"}) {
    handle_.model_id = "mock";
    handle_.multilingual = false;
    handle_.parameter_count = 1000;
  }

  const model::ModelHandle& handle() const override { return handle_; }
  const model::Tokenizer& tokenizer() const override { return tok_; }
  int sample_rate() const override { return 16000; }
  std::size_t max_samples() const override { return 480000; }

  model::Transcription transcribe(const std::vector<double>& x,
                                  const std::string& = "",
                                  int = -1) const override {
    observe(x);
    model::Transcription t;
    t.text = transcribe_fn ? transcribe_fn(x, transcribe_calls) : "a";
    ++transcribe_calls;
    return t;
  }

  model::LossValue teacher_forced_loss(const std::vector<double>& x,
                                       const model::TokenSequence& target,
                                       const std::string&,
                                       const std::vector<double>*,
                                       bool with_gradient) const override {
    observe(x);
    ++loss_calls;
    model::LossValue lv;
    if (loss_fn) {
      lv.total = loss_fn(x, target);
    } else {
      double acc = 0.0;
      for (double v : x) acc += 0.5 * v * v;
      lv.total = acc;
    }
    lv.per_token.assign(target.tokens.size(),
                        lv.total / static_cast<double>(target.tokens.size()));
    if (with_gradient) lv.gradient_wrt_input = x;
    return lv;
  }

  model::LanguageScores language_scores(const std::vector<double>&) const override {
    throw CapabilityError("mock model is not multilingual");
  }

  model::LossValue language_target_loss(const std::vector<double>&,
                                        const std::string&, bool) const override {
    throw CapabilityError("mock model is not multilingual");
  }

 private:
  void observe(const std::vector<double>& x) const {
    for (double v : x) max_abs_seen = std::max(max_abs_seen, std::abs(v));
  }

  model::ModelHandle handle_;
  model::Tokenizer tok_;
};

}  // namespace advbench::testsupport
