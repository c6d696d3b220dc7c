#pragma once

// Checkpoint container: "ADVM" magic, a JSON header describing the
// architecture and tensor shapes, then the tensor data as little-endian f32
// in header order, row-major.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "advbench/common/errors.hpp"

namespace advbench::model {

using Mat = Eigen::MatrixXd;

struct Arch {
  std::string model_id;
  bool multilingual = true;
  int d_model = 32;
  int n_heads = 4;
  int enc_layers = 2;
  int dec_layers = 2;
  int ffn_mult = 4;
  int n_mels = 24;
  int win = 256;
  int hop = 1200;
  int max_frames = 400;          // full window length, in hops
  int max_text_positions = 24;
  std::vector<std::string> vocab;

  int n_fft_bins() const { return win / 2 + 1; }
  int max_enc_positions() const { return (max_frames + 1) / 2; }
  int sample_rate() const { return 16000; }
  int max_samples() const { return max_frames * hop; }
};

struct Checkpoint {
  Arch arch;
  std::map<std::string, Mat> params;  // sorted by name: the blob order
  nlohmann::json meta;

  long param_count() const {
    long n = 0;
    for (const auto& [name, m] : params) n += static_cast<long>(m.size());
    return n;
  }
};

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  nlohmann::json header;
  header["format"] = 1;
  header["model_id"] = ckpt.arch.model_id;
  header["arch"] = {
      {"multilingual", ckpt.arch.multilingual},
      {"d_model", ckpt.arch.d_model},
      {"n_heads", ckpt.arch.n_heads},
      {"enc_layers", ckpt.arch.enc_layers},
      {"dec_layers", ckpt.arch.dec_layers},
      {"ffn_mult", ckpt.arch.ffn_mult},
      {"n_mels", ckpt.arch.n_mels},
      {"win", ckpt.arch.win},
      {"hop", ckpt.arch.hop},
      {"max_frames", ckpt.arch.max_frames},
      {"max_text_positions", ckpt.arch.max_text_positions},
      {"vocab", ckpt.arch.vocab},
  };
  header["meta"] = ckpt.meta;
  auto tensors = nlohmann::json::array();
  for (const auto& [name, m] : ckpt.params) {
    tensors.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  }
  header["tensors"] = tensors;
  const std::string hj = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write("ADVM", 4);
  const auto hl = static_cast<std::uint32_t>(hj.size());
  unsigned char lb[4] = {static_cast<unsigned char>(hl & 0xFF),
                         static_cast<unsigned char>((hl >> 8) & 0xFF),
                         static_cast<unsigned char>((hl >> 16) & 0xFF),
                         static_cast<unsigned char>((hl >> 24) & 0xFF)};
  out.write(reinterpret_cast<const char*>(lb), 4);
  out.write(hj.data(), static_cast<std::streamsize>(hj.size()));
  std::vector<float> buf;
  for (const auto& [name, m] : ckpt.params) {
    buf.resize(static_cast<std::size_t>(m.size()));
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        buf[k++] = static_cast<float>(m(i, j));
      }
    }
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * 4));
  }
  if (!out) throw IoError("checkpoint write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "ADVM", 4) != 0) {
    throw ParseError("not a checkpoint file: " + path);
  }
  unsigned char lb[4];
  in.read(reinterpret_cast<char*>(lb), 4);
  const std::uint32_t hl = std::uint32_t(lb[0]) | std::uint32_t(lb[1]) << 8 |
                           std::uint32_t(lb[2]) << 16 | std::uint32_t(lb[3]) << 24;
  std::string hj(hl, '\0');
  in.read(hj.data(), static_cast<std::streamsize>(hl));
  if (!in) throw ParseError("truncated checkpoint header: " + path);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hj);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("bad checkpoint header in " + path + ": " + e.what());
  }
  if (header.value("format", 0) != 1) {
    throw ParseError("unsupported checkpoint format in " + path);
  }

  Checkpoint ckpt;
  const auto& a = header.at("arch");
  ckpt.arch.model_id = header.at("model_id").get<std::string>();
  ckpt.arch.multilingual = a.at("multilingual").get<bool>();
  ckpt.arch.d_model = a.at("d_model").get<int>();
  ckpt.arch.n_heads = a.at("n_heads").get<int>();
  ckpt.arch.enc_layers = a.at("enc_layers").get<int>();
  ckpt.arch.dec_layers = a.at("dec_layers").get<int>();
  ckpt.arch.ffn_mult = a.at("ffn_mult").get<int>();
  ckpt.arch.n_mels = a.at("n_mels").get<int>();
  ckpt.arch.win = a.at("win").get<int>();
  ckpt.arch.hop = a.at("hop").get<int>();
  ckpt.arch.max_frames = a.at("max_frames").get<int>();
  ckpt.arch.max_text_positions = a.at("max_text_positions").get<int>();
  ckpt.arch.vocab = a.at("vocab").get<std::vector<std::string>>();
  ckpt.meta = header.value("meta", nlohmann::json::object());

  std::vector<float> buf;
  for (const auto& tj : header.at("tensors")) {
    const auto name = tj.at("name").get<std::string>();
    const auto rows = tj.at("rows").get<Eigen::Index>();
    const auto cols = tj.at("cols").get<Eigen::Index>();
    buf.resize(static_cast<std::size_t>(rows * cols));
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * 4));
    if (!in) throw ParseError("truncated tensor '" + name + "' in " + path);
    Mat m(rows, cols);
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = buf[k++];
    }
    ckpt.params.emplace(name, std::move(m));
  }
  return ckpt;
}

}  // namespace advbench::model
