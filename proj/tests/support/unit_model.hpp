#pragma once

#include <cstdint>

#include "advbench/common/rng.hpp"
#include "advbench/model/checkpoint.hpp"
#include "advbench/model/network.hpp"

namespace advbench::testsupport {

// A deliberately tiny architecture: fast enough for exhaustive finite
// differences, structurally identical to the real checkpoints.
inline model::Arch unit_arch() {
  model::Arch a;
  a.model_id = "unit";
  a.multilingual = true;
  a.d_model = 16;
  a.n_heads = 2;
  a.enc_layers = 1;
  a.dec_layers = 1;
  a.ffn_mult = 2;
  a.n_mels = 8;
  a.win = 64;
  a.hop = 320;
  a.max_frames = 40;  // 0.8 s window
  a.max_text_positions = 12;
  a.vocab = {"<pad>", "<sot>", "<eot>", "<task:transcribe>", "<unk>",
             "<lang:en>", "<lang:it>", "<lang:sr>",
             "zero", "uno", "due", "tre", "quattro"};
  return a;
}

inline model::Checkpoint unit_checkpoint(std::uint64_t seed) {
  model::Checkpoint ckpt;
  ckpt.arch = unit_arch();
  Rng rng(seed);
  ckpt.params = model::net::init_params(ckpt.arch, rng);
  ckpt.meta["seed"] = seed;
  return ckpt;
}

}  // namespace advbench::testsupport
