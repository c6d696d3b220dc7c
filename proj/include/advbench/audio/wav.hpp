#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "advbench/common/errors.hpp"

namespace advbench::audio {

struct RawAudio {
  std::vector<double> samples;  // interleaved, in [-1, 1]
  unsigned channels = 0;
  unsigned sample_rate = 0;
};

namespace detail {

inline std::uint32_t read_u32le(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 |
         std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}

inline std::uint16_t read_u16le(const unsigned char* p) {
  return std::uint16_t(p[0]) | std::uint16_t(p[1]) << 8;
}

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return bytes;
}

}  // namespace detail

// Reads a RIFF/WAVE file. Integer PCM at 16, 24 or 32 bits and float32 are
// accepted; anything else is an unsupported-codec error.
inline RawAudio read_wav(const std::string& path) {
  using namespace detail;
  const auto bytes = read_file_bytes(path);
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw IoError("not a RIFF/WAVE file: " + path);
  }

  RawAudio out;
  std::uint16_t format = 0, bits = 0;
  bool have_fmt = false;
  std::size_t pos = 12;
  const unsigned char* data_ptr = nullptr;
  std::size_t data_len = 0;
  while (pos + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
    const std::uint32_t len = read_u32le(bytes.data() + pos + 4);
    pos += 8;
    if (pos + len > bytes.size()) throw IoError("truncated WAV chunk: " + path);
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (len < 16) throw IoError("bad fmt chunk: " + path);
      format = read_u16le(bytes.data() + pos);
      out.channels = read_u16le(bytes.data() + pos + 2);
      out.sample_rate = read_u32le(bytes.data() + pos + 4);
      bits = read_u16le(bytes.data() + pos + 14);
      if (format == 0xFFFE && len >= 40) {
        // WAVE_FORMAT_EXTENSIBLE: first two bytes of the sub-format GUID
        format = read_u16le(bytes.data() + pos + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data_ptr = bytes.data() + pos;
      data_len = len;
    }
    pos += len + (len & 1);  // chunks are word-aligned
  }
  if (!have_fmt || data_ptr == nullptr) throw IoError("missing fmt/data chunk: " + path);
  if (out.channels == 0 || out.sample_rate == 0) throw IoError("bad WAV header: " + path);

  auto push_all = [&](auto decode, std::size_t stride) {
    const std::size_t count = data_len / stride;
    out.samples.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      out.samples[i] = decode(data_ptr + i * stride);
    }
  };

  if (format == 1 && bits == 16) {
    push_all([](const unsigned char* p) {
      return static_cast<std::int16_t>(read_u16le(p)) / 32768.0;
    }, 2);
  } else if (format == 1 && bits == 24) {
    push_all([](const unsigned char* p) {
      std::int32_t v = std::int32_t(p[0]) | std::int32_t(p[1]) << 8 |
                       std::int32_t(p[2]) << 16;
      if (v & 0x800000) v |= ~0xFFFFFF;
      return v / 8388608.0;
    }, 3);
  } else if (format == 1 && bits == 32) {
    push_all([](const unsigned char* p) {
      return static_cast<std::int32_t>(read_u32le(p)) / 2147483648.0;
    }, 4);
  } else if (format == 3 && bits == 32) {
    push_all([](const unsigned char* p) {
      float f;
      std::uint32_t u = read_u32le(p);
      std::memcpy(&f, &u, 4);
      return static_cast<double>(f);
    }, 4);
  } else {
    throw IoError("unsupported WAV encoding (format=" + std::to_string(format) +
                  ", bits=" + std::to_string(bits) + "): " + path);
  }
  return out;
}

struct WavWriteStats {
  std::size_t clipped = 0;
};

// Writes mono 16-bit PCM at the given rate. Samples outside [-1, 1] are
// clipped; the count is returned and a warning goes to stderr.
inline WavWriteStats write_wav(const std::vector<double>& x, const std::string& path,
                               unsigned sample_rate = 16000) {
  WavWriteStats stats;
  std::vector<unsigned char> pcm(x.size() * 2);
  for (std::size_t i = 0; i < x.size(); ++i) {
    double v = x[i];
    if (v > 1.0) {
      v = 1.0;
      ++stats.clipped;
    } else if (v < -1.0) {
      v = -1.0;
      ++stats.clipped;
    }
    auto s = static_cast<std::int32_t>(std::lrint(v * 32768.0));
    if (s > 32767) s = 32767;
    if (s < -32768) s = -32768;
    pcm[2 * i] = static_cast<unsigned char>(s & 0xFF);
    pcm[2 * i + 1] = static_cast<unsigned char>((s >> 8) & 0xFF);
  }

  auto put_u32 = [](std::vector<unsigned char>& b, std::uint32_t v) {
    b.push_back(v & 0xFF);
    b.push_back((v >> 8) & 0xFF);
    b.push_back((v >> 16) & 0xFF);
    b.push_back((v >> 24) & 0xFF);
  };
  auto put_u16 = [](std::vector<unsigned char>& b, std::uint16_t v) {
    b.push_back(v & 0xFF);
    b.push_back((v >> 8) & 0xFF);
  };

  std::vector<unsigned char> hdr;
  hdr.insert(hdr.end(), {'R', 'I', 'F', 'F'});
  put_u32(hdr, static_cast<std::uint32_t>(36 + pcm.size()));
  hdr.insert(hdr.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(hdr, 16);
  put_u16(hdr, 1);  // PCM
  put_u16(hdr, 1);  // mono
  put_u32(hdr, sample_rate);
  put_u32(hdr, sample_rate * 2);  // byte rate
  put_u16(hdr, 2);                // block align
  put_u16(hdr, 16);               // bits
  hdr.insert(hdr.end(), {'d', 'a', 't', 'a'});
  put_u32(hdr, static_cast<std::uint32_t>(pcm.size()));

  std::ofstream outf(path, std::ios::binary);
  if (!outf) throw IoError("cannot write file: " + path);
  outf.write(reinterpret_cast<const char*>(hdr.data()), static_cast<std::streamsize>(hdr.size()));
  outf.write(reinterpret_cast<const char*>(pcm.data()), static_cast<std::streamsize>(pcm.size()));
  if (!outf) throw IoError("write failed: " + path);
  if (stats.clipped > 0) {
    std::fprintf(stderr, "[advbench] warning: %zu sample(s) clipped writing %s\n",
                 stats.clipped, path.c_str());
  }
  return stats;
}

// 16-bit quantization round trip without touching the filesystem. Attacks use
// this so that persisted adversarial audio and in-memory verdicts agree.
inline std::vector<double> quantize_int16(const std::vector<double>& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double v = std::min(1.0, std::max(-1.0, x[i]));
    auto s = static_cast<std::int32_t>(std::lrint(v * 32768.0));
    if (s > 32767) s = 32767;
    if (s < -32768) s = -32768;
    out[i] = s / 32768.0;
  }
  return out;
}

}  // namespace advbench::audio
