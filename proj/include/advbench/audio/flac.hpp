#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "advbench/audio/wav.hpp"
#include "advbench/common/errors.hpp"

namespace advbench::audio {

// Native FLAC decoder covering the streamable subset: constant, verbatim,
// fixed and LPC subframes, both Rice residual methods with escape codes,
// all four stereo channel assignments, frame CRC-8/CRC-16 verification.
// 8/16/24-bit streams, 1-2 channels.
namespace flac_detail {

class BitReader {
 public:
  BitReader(const unsigned char* data, std::size_t size) : data_(data), size_(size) {}

  std::uint64_t bits(unsigned n) {
    std::uint64_t v = 0;
    for (unsigned i = 0; i < n; ++i) {
      if (byte_ >= size_) throw IoError("FLAC: unexpected end of stream");
      v = (v << 1) | ((data_[byte_] >> (7 - bit_)) & 1);
      if (++bit_ == 8) {
        bit_ = 0;
        ++byte_;
      }
    }
    return v;
  }

  std::int64_t signed_bits(unsigned n) {
    std::uint64_t v = bits(n);
    if (n > 0 && (v & (std::uint64_t(1) << (n - 1)))) {
      v |= ~((std::uint64_t(1) << n) - 1);
    }
    return static_cast<std::int64_t>(v);
  }

  std::uint64_t unary() {
    std::uint64_t q = 0;
    while (bits(1) == 0) ++q;
    return q;
  }

  void align() {
    if (bit_ != 0) {
      bit_ = 0;
      ++byte_;
    }
  }

  std::size_t byte_pos() const { return byte_; }
  bool at_end() const { return byte_ >= size_; }
  void seek_byte(std::size_t b) {
    byte_ = b;
    bit_ = 0;
  }

 private:
  const unsigned char* data_;
  std::size_t size_;
  std::size_t byte_ = 0;
  unsigned bit_ = 0;
};

inline std::uint8_t crc8(const unsigned char* data, std::size_t len) {
  std::uint8_t crc = 0;
  for (std::size_t i = 0; i < len; ++i) {
    crc ^= data[i];
    for (int b = 0; b < 8; ++b) {
      crc = (crc & 0x80) ? static_cast<std::uint8_t>((crc << 1) ^ 0x07)
                         : static_cast<std::uint8_t>(crc << 1);
    }
  }
  return crc;
}

inline std::uint16_t crc16(const unsigned char* data, std::size_t len) {
  std::uint16_t crc = 0;
  for (std::size_t i = 0; i < len; ++i) {
    crc ^= static_cast<std::uint16_t>(data[i]) << 8;
    for (int b = 0; b < 8; ++b) {
      crc = (crc & 0x8000) ? static_cast<std::uint16_t>((crc << 1) ^ 0x8005)
                           : static_cast<std::uint16_t>(crc << 1);
    }
  }
  return crc;
}

struct StreamInfo {
  unsigned sample_rate = 0;
  unsigned channels = 0;
  unsigned bits = 0;
  std::uint64_t total_samples = 0;
};

inline void decode_residual(BitReader& br, unsigned block_size, unsigned order,
                            std::vector<std::int64_t>& out) {
  const unsigned method = static_cast<unsigned>(br.bits(2));
  if (method > 1) throw IoError("FLAC: reserved residual method");
  const unsigned param_bits = method == 0 ? 4 : 5;
  const std::uint64_t escape = method == 0 ? 0xF : 0x1F;
  const unsigned part_order = static_cast<unsigned>(br.bits(4));
  const unsigned parts = 1u << part_order;
  if (block_size % parts != 0) throw IoError("FLAC: bad partition order");
  for (unsigned p = 0; p < parts; ++p) {
    unsigned count = block_size / parts;
    if (p == 0) {
      if (count < order) throw IoError("FLAC: partition shorter than predictor order");
      count -= order;
    }
    const std::uint64_t param = br.bits(param_bits);
    if (param == escape) {
      const unsigned raw = static_cast<unsigned>(br.bits(5));
      for (unsigned i = 0; i < count; ++i) {
        out.push_back(raw == 0 ? 0 : br.signed_bits(raw));
      }
    } else {
      for (unsigned i = 0; i < count; ++i) {
        const std::uint64_t q = br.unary();
        const std::uint64_t r = br.bits(static_cast<unsigned>(param));
        const std::uint64_t z = (q << param) | r;
        out.push_back(static_cast<std::int64_t>(z >> 1) ^
                      -static_cast<std::int64_t>(z & 1));
      }
    }
  }
}

inline std::vector<std::int64_t> decode_subframe(BitReader& br, unsigned block_size,
                                                 unsigned depth) {
  if (br.bits(1) != 0) throw IoError("FLAC: bad subframe padding bit");
  const unsigned type = static_cast<unsigned>(br.bits(6));
  unsigned wasted = 0;
  if (br.bits(1) == 1) {
    wasted = 1 + static_cast<unsigned>(br.unary());
  }
  if (wasted >= depth) throw IoError("FLAC: wasted bits exceed depth");
  const unsigned eff = depth - wasted;

  std::vector<std::int64_t> x;
  x.reserve(block_size);
  if (type == 0) {  // constant
    const std::int64_t v = br.signed_bits(eff);
    x.assign(block_size, v);
  } else if (type == 1) {  // verbatim
    for (unsigned i = 0; i < block_size; ++i) x.push_back(br.signed_bits(eff));
  } else if ((type & 0x38) == 0x08 && (type & 0x07) <= 4) {  // fixed
    const unsigned order = type & 0x07;
    for (unsigned i = 0; i < order; ++i) x.push_back(br.signed_bits(eff));
    std::vector<std::int64_t> res;
    decode_residual(br, block_size, order, res);
    for (std::size_t i = 0; i < res.size(); ++i) {
      const std::size_t n = x.size();
      std::int64_t pred = 0;
      switch (order) {
        case 0: pred = 0; break;
        case 1: pred = x[n - 1]; break;
        case 2: pred = 2 * x[n - 1] - x[n - 2]; break;
        case 3: pred = 3 * x[n - 1] - 3 * x[n - 2] + x[n - 3]; break;
        case 4: pred = 4 * x[n - 1] - 6 * x[n - 2] + 4 * x[n - 3] - x[n - 4]; break;
      }
      x.push_back(res[i] + pred);
    }
  } else if (type & 0x20) {  // LPC
    const unsigned order = (type & 0x1F) + 1;
    for (unsigned i = 0; i < order; ++i) x.push_back(br.signed_bits(eff));
    const unsigned prec_code = static_cast<unsigned>(br.bits(4));
    if (prec_code == 0xF) throw IoError("FLAC: invalid LPC precision");
    const unsigned precision = prec_code + 1;
    const auto shift = static_cast<int>(br.signed_bits(5));
    if (shift < 0) throw IoError("FLAC: negative LPC shift");
    std::vector<std::int64_t> coef(order);
    for (unsigned i = 0; i < order; ++i) coef[i] = br.signed_bits(precision);
    std::vector<std::int64_t> res;
    decode_residual(br, block_size, order, res);
    for (std::size_t i = 0; i < res.size(); ++i) {
      const std::size_t n = x.size();
      std::int64_t acc = 0;
      for (unsigned j = 0; j < order; ++j) acc += coef[j] * x[n - 1 - j];
      x.push_back(res[i] + (acc >> shift));
    }
  } else {
    throw IoError("FLAC: reserved subframe type");
  }
  if (x.size() != block_size) throw IoError("FLAC: short subframe");
  if (wasted > 0) {
    for (auto& v : x) v <<= wasted;
  }
  return x;
}

}  // namespace flac_detail

inline RawAudio read_flac(const std::string& path) {
  using namespace flac_detail;
  const auto bytes = detail::read_file_bytes(path);
  if (bytes.size() < 4 + 4 + 34 || std::memcmp(bytes.data(), "fLaC", 4) != 0) {
    throw IoError("not a FLAC file: " + path);
  }

  BitReader br(bytes.data(), bytes.size());
  br.seek_byte(4);

  StreamInfo info;
  bool last = false, have_info = false;
  while (!last) {
    last = br.bits(1) != 0;
    const unsigned type = static_cast<unsigned>(br.bits(7));
    const auto len = static_cast<std::size_t>(br.bits(24));
    if (type == 0) {
      if (len != 34) throw IoError("FLAC: bad STREAMINFO length");
      br.bits(16);  // min block size
      br.bits(16);  // max block size
      br.bits(24);  // min frame size
      br.bits(24);  // max frame size
      info.sample_rate = static_cast<unsigned>(br.bits(20));
      info.channels = static_cast<unsigned>(br.bits(3)) + 1;
      info.bits = static_cast<unsigned>(br.bits(5)) + 1;
      info.total_samples = br.bits(36);
      br.seek_byte(br.byte_pos() + 16);  // md5
      have_info = true;
    } else {
      br.seek_byte(br.byte_pos() + len);
    }
  }
  if (!have_info) throw IoError("FLAC: missing STREAMINFO: " + path);
  if (info.channels > 2) {
    throw IoError("FLAC: unsupported channel count " + std::to_string(info.channels));
  }
  if (info.bits != 8 && info.bits != 16 && info.bits != 24) {
    throw IoError("FLAC: unsupported bit depth " + std::to_string(info.bits));
  }

  RawAudio out;
  out.channels = info.channels;
  out.sample_rate = info.sample_rate;
  const double scale = static_cast<double>(std::uint64_t(1) << (info.bits - 1));

  std::uint64_t decoded = 0;
  while (!br.at_end() && (info.total_samples == 0 || decoded < info.total_samples)) {
    const std::size_t frame_start = br.byte_pos();
    if (br.bits(14) != 0x3FFE) throw IoError("FLAC: lost frame sync");
    br.bits(1);  // reserved
    br.bits(1);  // blocking strategy
    const unsigned bs_code = static_cast<unsigned>(br.bits(4));
    const unsigned sr_code = static_cast<unsigned>(br.bits(4));
    const unsigned chan_code = static_cast<unsigned>(br.bits(4));
    const unsigned size_code = static_cast<unsigned>(br.bits(3));
    br.bits(1);  // reserved

    // coded frame/sample number, UTF-8 style
    const std::uint64_t first = br.bits(8);
    unsigned follow = 0;
    for (unsigned mask = 0x80; first & mask; mask >>= 1) ++follow;
    if (follow == 1 || follow > 7) throw IoError("FLAC: bad frame number coding");
    const unsigned continuation = follow == 0 ? 0 : follow - 1;
    for (unsigned i = 0; i < continuation; ++i) br.bits(8);

    unsigned block_size = 0;
    switch (bs_code) {
      case 0x1: block_size = 192; break;
      case 0x2: case 0x3: case 0x4: case 0x5:
        block_size = 576u << (bs_code - 2);
        break;
      case 0x6: block_size = static_cast<unsigned>(br.bits(8)) + 1; break;
      case 0x7: block_size = static_cast<unsigned>(br.bits(16)) + 1; break;
      default:
        if (bs_code >= 0x8) {
          block_size = 256u << (bs_code - 8);
        } else {
          throw IoError("FLAC: reserved block size code");
        }
    }
    switch (sr_code) {
      case 0x0: break;  // streaminfo
      case 0xC: br.bits(8); break;
      case 0xD: case 0xE: br.bits(16); break;
      case 0xF: throw IoError("FLAC: invalid sample rate code");
      default: break;  // fixed table values; streaminfo is authoritative here
    }

    unsigned depth = info.bits;
    switch (size_code) {
      case 0x0: break;
      case 0x1: depth = 8; break;
      case 0x2: depth = 12; break;
      case 0x4: depth = 16; break;
      case 0x5: depth = 20; break;
      case 0x6: depth = 24; break;
      case 0x7: depth = 32; break;
      default: throw IoError("FLAC: reserved sample size code");
    }

    const std::size_t header_end = br.byte_pos();
    const std::uint8_t expect8 = static_cast<std::uint8_t>(br.bits(8));
    if (crc8(bytes.data() + frame_start, header_end - frame_start) != expect8) {
      throw IoError("FLAC: frame header CRC mismatch");
    }

    unsigned nch = info.channels;
    int side_channel = -1;  // which decoded channel carries the side signal
    if (chan_code <= 0x7) {
      nch = chan_code + 1;
      if (nch != info.channels) throw IoError("FLAC: channel count mismatch");
    } else if (chan_code == 0x8 || chan_code == 0x9 || chan_code == 0xA) {
      nch = 2;
      side_channel = (chan_code == 0x9) ? 0 : 1;
      if (info.channels != 2) throw IoError("FLAC: stereo frame in non-stereo stream");
    } else {
      throw IoError("FLAC: reserved channel assignment");
    }

    std::vector<std::vector<std::int64_t>> ch;
    for (unsigned c = 0; c < nch; ++c) {
      unsigned d = depth;
      if (static_cast<int>(c) == side_channel) ++d;
      ch.push_back(decode_subframe(br, block_size, d));
    }
    br.align();
    const std::size_t frame_end = br.byte_pos();
    const auto expect16 = static_cast<std::uint16_t>(br.bits(16));
    if (crc16(bytes.data() + frame_start, frame_end - frame_start) != expect16) {
      throw IoError("FLAC: frame CRC mismatch");
    }

    if (chan_code == 0x8) {  // left/side
      for (unsigned i = 0; i < block_size; ++i) ch[1][i] = ch[0][i] - ch[1][i];
    } else if (chan_code == 0x9) {  // side/right
      for (unsigned i = 0; i < block_size; ++i) ch[0][i] = ch[1][i] + ch[0][i];
    } else if (chan_code == 0xA) {  // mid/side
      for (unsigned i = 0; i < block_size; ++i) {
        const std::int64_t side = ch[1][i];
        std::int64_t mid = (ch[0][i] << 1) | (side & 1);
        ch[0][i] = (mid + side) >> 1;
        ch[1][i] = (mid - side) >> 1;
      }
    }

    unsigned take = block_size;
    if (info.total_samples > 0 &&
        decoded + take > info.total_samples) {
      take = static_cast<unsigned>(info.total_samples - decoded);
    }
    for (unsigned i = 0; i < take; ++i) {
      for (unsigned c = 0; c < info.channels; ++c) {
        out.samples.push_back(static_cast<double>(ch[c][i]) / scale);
      }
    }
    decoded += take;
  }
  if (info.total_samples > 0 && decoded < info.total_samples) {
    throw IoError("FLAC: stream ended early: " + path);
  }
  return out;
}

}  // namespace advbench::audio
