#pragma once

// Differentiable forward graphs for the miniature encoder-decoder ASR family:
// a DFT/log-mel frontend, a strided conv stem, pre-norm transformer blocks,
// and a tied-embedding decoder. Everything is built on the autodiff tape, so
// the same code serves inference, input-gradient attacks, and training.

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "advbench/common/errors.hpp"
#include "advbench/common/rng.hpp"
#include "advbench/model/autodiff.hpp"
#include "advbench/model/checkpoint.hpp"

namespace advbench::model {

namespace net {

using ad::Mat;
using ad::Tape;
using ad::Var;

// Hann-windowed real DFT basis: frames (F×win) @ basis (win×2K) yields
// [re | im] halves.
inline Mat dft_basis(int win) {
  const int k_bins = win / 2 + 1;
  Mat b(win, 2 * k_bins);
  for (int t = 0; t < win; ++t) {
    const double h = 0.5 - 0.5 * std::cos(2.0 * M_PI * t / win);
    for (int k = 0; k < k_bins; ++k) {
      const double ang = 2.0 * M_PI * k * t / win;
      b(t, k) = h * std::cos(ang);
      b(t, k_bins + k) = -h * std::sin(ang);
    }
  }
  return b;
}

inline double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
inline double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

// Triangular filters, K fft bins to n_mels bands over [0, sr/2].
inline Mat mel_filterbank(int win, int n_mels, double sample_rate) {
  const int k_bins = win / 2 + 1;
  const double mel_hi = hz_to_mel(sample_rate / 2.0);
  std::vector<double> centers(static_cast<std::size_t>(n_mels) + 2);
  for (int i = 0; i < n_mels + 2; ++i) {
    centers[static_cast<std::size_t>(i)] = mel_to_hz(mel_hi * i / (n_mels + 1));
  }
  Mat fb = Mat::Zero(k_bins, n_mels);
  for (int k = 0; k < k_bins; ++k) {
    const double f = k * sample_rate / win;
    for (int m = 0; m < n_mels; ++m) {
      const double lo = centers[static_cast<std::size_t>(m)];
      const double mid = centers[static_cast<std::size_t>(m) + 1];
      const double hi = centers[static_cast<std::size_t>(m) + 2];
      if (f > lo && f < mid) {
        fb(k, m) = (f - lo) / (mid - lo);
      } else if (f >= mid && f < hi) {
        fb(k, m) = (hi - f) / (hi - mid);
      }
    }
  }
  return fb;
}

inline Mat sinusoidal_positions(int n_positions, int d_model) {
  Mat p(n_positions, d_model);
  for (int pos = 0; pos < n_positions; ++pos) {
    for (int i = 0; i < d_model / 2; ++i) {
      const double rate = std::pow(10000.0, -2.0 * i / d_model);
      p(pos, 2 * i) = std::sin(pos * rate);
      p(pos, 2 * i + 1) = std::cos(pos * rate);
    }
  }
  return p;
}

inline Mat causal_mask(int n) {
  Mat m = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) m(i, j) = -1e9;
  }
  return m;
}

// Constants derived from the architecture, shared by every forward pass.
struct Constants {
  Mat dft;      // win × 2K
  Mat mel;      // K × n_mels
  Mat enc_pos;  // max encoder positions × d
};

inline Constants make_constants(const Arch& arch) {
  Constants c;
  c.dft = dft_basis(arch.win);
  c.mel = mel_filterbank(arch.win, arch.n_mels, arch.sample_rate());
  c.enc_pos = sinusoidal_positions(arch.max_enc_positions(), arch.d_model);
  return c;
}

// Parameters lifted onto a tape.
struct ParamVars {
  std::map<std::string, Var> vars;

  Var at(const std::string& name) const {
    auto it = vars.find(name);
    if (it == vars.end()) {
      throw ValidationError("missing model parameter: " + name);
    }
    return it->second;
  }
};

inline ParamVars lift_params(Tape& tape, const std::map<std::string, Mat>& params,
                             bool needs_grad) {
  ParamVars pv;
  for (const auto& [name, m] : params) {
    pv.vars.emplace(name, tape.leaf(m, needs_grad));
  }
  return pv;
}

inline std::vector<int> iota_ids(int n) {
  std::vector<int> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = i;
  return v;
}

// Multi-head scaled dot-product attention; q_in is T×d, kv_in is S×d.
inline Var attention(Tape& tape, const ParamVars& pv, const std::string& prefix,
                     int n_heads, Var q_in, Var kv_in, const Mat* mask) {
  const auto d = q_in.value().cols();
  const auto dh = d / n_heads;
  Var q = ad::add_rowvec(ad::matmul(q_in, pv.at(prefix + ".wq")), pv.at(prefix + ".bq"));
  Var k = ad::add_rowvec(ad::matmul(kv_in, pv.at(prefix + ".wk")), pv.at(prefix + ".bk"));
  Var v = ad::add_rowvec(ad::matmul(kv_in, pv.at(prefix + ".wv")), pv.at(prefix + ".bv"));
  std::vector<Var> heads;
  heads.reserve(static_cast<std::size_t>(n_heads));
  for (int h = 0; h < n_heads; ++h) {
    Var qh = ad::cols(q, h * dh, dh);
    Var kh = ad::cols(k, h * dh, dh);
    Var vh = ad::cols(v, h * dh, dh);
    Var scores = ad::scale(ad::matmul_nt(qh, kh), 1.0 / std::sqrt(static_cast<double>(dh)));
    if (mask != nullptr) scores = ad::add_const(scores, *mask);
    heads.push_back(ad::matmul(ad::softmax_rows(scores), vh));
  }
  Var o = ad::hcat(heads);
  return ad::add_rowvec(ad::matmul(o, pv.at(prefix + ".wo")), pv.at(prefix + ".bo"));
}

inline Var ffn(Tape& tape, const ParamVars& pv, const std::string& prefix, Var x) {
  Var h = ad::gelu(ad::add_rowvec(ad::matmul(x, pv.at(prefix + ".w1")), pv.at(prefix + ".b1")));
  return ad::add_rowvec(ad::matmul(h, pv.at(prefix + ".w2")), pv.at(prefix + ".b2"));
}

inline Var layer_norm(Tape& tape, const ParamVars& pv, const std::string& prefix, Var x) {
  return ad::layer_norm_rows(x, pv.at(prefix + ".g"), pv.at(prefix + ".b"));
}

// Frontend + encoder stack. `wave` is a 1×N leaf; N need not be the full
// analysis window during training.
inline Var encode(Tape& tape, const Arch& arch, const Constants& consts,
                  const ParamVars& pv, Var wave) {
  const long n = wave.value().cols();
  const long frames = (n + arch.hop - 1) / arch.hop;
  const int k_bins = arch.n_fft_bins();

  std::vector<long> starts(static_cast<std::size_t>(frames));
  for (long f = 0; f < frames; ++f) starts[static_cast<std::size_t>(f)] = f * arch.hop;

  Var spec = ad::matmul(ad::frame_rows(wave, std::move(starts), arch.win),
                        tape.constant(consts.dft));
  Var mel = ad::matmul(ad::power_pairs(spec, k_bins), tape.constant(consts.mel));
  Var logmel = ad::affine(ad::log10_floor(mel, 1e-10), 0.25, 1.0);

  const long positions = (frames + 1) / 2;
  if (positions > arch.max_enc_positions()) {
    throw ValidationError("input longer than the model's receptive window");
  }
  std::vector<std::vector<long>> patch(static_cast<std::size_t>(positions));
  for (long p = 0; p < positions; ++p) {
    for (long k = -1; k <= 1; ++k) {
      const long f = 2 * p + k;
      patch[static_cast<std::size_t>(p)].push_back(f >= 0 && f < frames ? f : -1);
    }
  }
  Var x = ad::gelu(ad::add_rowvec(
      ad::matmul(ad::gather_rows_concat(logmel, std::move(patch)), pv.at("conv.w")),
      pv.at("conv.b")));
  x = ad::add_const(x, consts.enc_pos.topRows(positions));

  for (int l = 0; l < arch.enc_layers; ++l) {
    const std::string p = "enc" + std::to_string(l);
    Var q = layer_norm(tape, pv, p + ".ln1", x);
    x = ad::add(x, attention(tape, pv, p + ".att", arch.n_heads, q, q, nullptr));
    x = ad::add(x, ffn(tape, pv, p + ".ffn", layer_norm(tape, pv, p + ".ln2", x)));
  }
  return layer_norm(tape, pv, "enc_ln", x);
}

// Decoder stack over a token prefix; returns logits (T×V).
inline Var decode_logits(Tape& tape, const Arch& arch, const ParamVars& pv,
                         Var enc, const std::vector<int>& tokens) {
  const int t_len = static_cast<int>(tokens.size());
  if (t_len == 0) throw ValidationError("decoder needs at least one token");
  if (t_len > arch.max_text_positions) {
    throw ValidationError("token sequence exceeds the decoder's position table");
  }
  Var emb = ad::gather_rows(pv.at("tok_emb"), tokens);
  Var pos = ad::gather_rows(pv.at("dec_pos"), iota_ids(t_len));
  Var x = ad::add(emb, pos);
  const Mat mask = causal_mask(t_len);
  for (int l = 0; l < arch.dec_layers; ++l) {
    const std::string p = "dec" + std::to_string(l);
    Var q = layer_norm(tape, pv, p + ".ln1", x);
    x = ad::add(x, attention(tape, pv, p + ".self", arch.n_heads, q, q, &mask));
    x = ad::add(x, attention(tape, pv, p + ".cross", arch.n_heads,
                             layer_norm(tape, pv, p + ".ln2", x), enc, nullptr));
    x = ad::add(x, ffn(tape, pv, p + ".ffn", layer_norm(tape, pv, p + ".ln3", x)));
  }
  x = layer_norm(tape, pv, "dec_ln", x);
  return ad::matmul_nt(x, pv.at("tok_emb"));
}

inline void add_linear(std::map<std::string, Mat>& p, const std::string& prefix,
                       int in, int out, Rng& rng) {
  Mat w(in, out);
  const double s = 1.0 / std::sqrt(static_cast<double>(in));
  for (int i = 0; i < in; ++i) {
    for (int j = 0; j < out; ++j) w(i, j) = s * rng.gaussian();
  }
  p[prefix + ".w"] = std::move(w);
  p[prefix + ".b"] = Mat::Zero(1, out);
}

inline void add_attention(std::map<std::string, Mat>& p, const std::string& prefix,
                          int d, Rng& rng) {
  for (const char* n : {"q", "k", "v", "o"}) {
    Mat w(d, d);
    const double s = 1.0 / std::sqrt(static_cast<double>(d));
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) w(i, j) = s * rng.gaussian();
    }
    p[prefix + ".w" + n] = std::move(w);
    p[prefix + ".b" + n] = Mat::Zero(1, d);
  }
}

inline void add_layer_norm(std::map<std::string, Mat>& p, const std::string& prefix, int d) {
  p[prefix + ".g"] = Mat::Ones(1, d);
  p[prefix + ".b"] = Mat::Zero(1, d);
}

inline void add_ffn(std::map<std::string, Mat>& p, const std::string& prefix,
                    int d, int mult, Rng& rng) {
  Mat w1(d, d * mult), w2(d * mult, d);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(d));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(d * mult));
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d * mult; ++j) w1(i, j) = s1 * rng.gaussian();
  }
  for (int i = 0; i < d * mult; ++i) {
    for (int j = 0; j < d; ++j) w2(i, j) = s2 * rng.gaussian();
  }
  p[prefix + ".w1"] = std::move(w1);
  p[prefix + ".b1"] = Mat::Zero(1, d * mult);
  p[prefix + ".w2"] = std::move(w2);
  p[prefix + ".b2"] = Mat::Zero(1, d);
}

inline std::map<std::string, Mat> init_params(const Arch& arch, Rng& rng) {
  std::map<std::string, Mat> p;
  const int d = arch.d_model;
  const int v = static_cast<int>(arch.vocab.size());

  Mat emb(v, d), pos(arch.max_text_positions, d);
  for (int i = 0; i < v; ++i) {
    for (int j = 0; j < d; ++j) emb(i, j) = 0.02 * rng.gaussian();
  }
  for (int i = 0; i < arch.max_text_positions; ++i) {
    for (int j = 0; j < d; ++j) pos(i, j) = 0.02 * rng.gaussian();
  }
  p["tok_emb"] = std::move(emb);
  p["dec_pos"] = std::move(pos);
  add_linear(p, "conv", 3 * arch.n_mels, d, rng);

  for (int l = 0; l < arch.enc_layers; ++l) {
    const std::string pre = "enc" + std::to_string(l);
    add_layer_norm(p, pre + ".ln1", d);
    add_attention(p, pre + ".att", d, rng);
    add_layer_norm(p, pre + ".ln2", d);
    add_ffn(p, pre + ".ffn", d, arch.ffn_mult, rng);
  }
  add_layer_norm(p, "enc_ln", d);
  for (int l = 0; l < arch.dec_layers; ++l) {
    const std::string pre = "dec" + std::to_string(l);
    add_layer_norm(p, pre + ".ln1", d);
    add_attention(p, pre + ".self", d, rng);
    add_layer_norm(p, pre + ".ln2", d);
    add_attention(p, pre + ".cross", d, rng);
    add_layer_norm(p, pre + ".ln3", d);
    add_ffn(p, pre + ".ffn", d, arch.ffn_mult, rng);
  }
  add_layer_norm(p, "dec_ln", d);
  return p;
}

}  // namespace net

}  // namespace advbench::model
