#pragma once

// Test-support FLAC encoder. Deliberately minimal and written against the
// format layout independently of the library decoder so the two sides
// cross-check each other. Supports 16-bit streams, mono or stereo, with a
// forced subframe strategy per file.

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace testsupport {

enum class FlacMode { Verbatim, Constant, Fixed2, EscapeRaw, LeftSide };

class BitWriter {
 public:
  void put(std::uint64_t v, unsigned n) {
    for (unsigned i = 0; i < n; ++i) {
      const unsigned bit = (v >> (n - 1 - i)) & 1;
      cur_ = static_cast<unsigned char>((cur_ << 1) | bit);
      if (++nbits_ == 8) {
        bytes_.push_back(cur_);
        cur_ = 0;
        nbits_ = 0;
      }
    }
  }
  void put_signed(std::int64_t v, unsigned n) {
    put(static_cast<std::uint64_t>(v) & ((n == 64 ? ~0ull : (1ull << n) - 1)), n);
  }
  void align() {
    while (nbits_ != 0) put(0, 1);
  }
  const std::vector<unsigned char>& bytes() const { return bytes_; }
  std::vector<unsigned char>& bytes() { return bytes_; }

 private:
  std::vector<unsigned char> bytes_;
  unsigned char cur_ = 0;
  unsigned nbits_ = 0;
};

inline std::uint8_t flac_crc8(const unsigned char* d, std::size_t n) {
  std::uint8_t c = 0;
  for (std::size_t i = 0; i < n; ++i) {
    c ^= d[i];
    for (int b = 0; b < 8; ++b) c = (c & 0x80) ? ((c << 1) ^ 0x07) : (c << 1);
  }
  return c;
}

inline std::uint16_t flac_crc16(const unsigned char* d, std::size_t n) {
  std::uint16_t c = 0;
  for (std::size_t i = 0; i < n; ++i) {
    c ^= static_cast<std::uint16_t>(d[i]) << 8;
    for (int b = 0; b < 8; ++b) c = (c & 0x8000) ? ((c << 1) ^ 0x8005) : (c << 1);
  }
  return c;
}

inline void encode_subframe(BitWriter& bw, const std::vector<std::int32_t>& x,
                            FlacMode mode, unsigned depth) {
  bw.put(0, 1);  // padding bit
  switch (mode) {
    case FlacMode::Constant: {
      bw.put(0, 6);
      bw.put(0, 1);  // no wasted bits
      bw.put_signed(x[0], depth);
      break;
    }
    case FlacMode::Verbatim:
    case FlacMode::LeftSide: {  // per-channel encoding choice is verbatim
      bw.put(1, 6);
      bw.put(0, 1);
      for (auto v : x) bw.put_signed(v, depth);
      break;
    }
    case FlacMode::Fixed2: {
      bw.put(0x08 | 2, 6);  // fixed, order 2
      bw.put(0, 1);
      bw.put_signed(x[0], depth);
      bw.put_signed(x[1], depth);
      // residuals, rice method 0, partition order 0
      std::vector<std::uint64_t> zz;
      for (std::size_t i = 2; i < x.size(); ++i) {
        const std::int64_t r =
            std::int64_t(x[i]) - 2 * std::int64_t(x[i - 1]) + std::int64_t(x[i - 2]);
        zz.push_back(r >= 0 ? (std::uint64_t(r) << 1)
                            : ((std::uint64_t(-r) << 1) - 1));
      }
      unsigned best_p = 0;
      std::uint64_t best_bits = ~0ull;
      for (unsigned p = 0; p < 15; ++p) {
        std::uint64_t total = 0;
        for (auto z : zz) total += (z >> p) + 1 + p;
        if (total < best_bits) {
          best_bits = total;
          best_p = p;
        }
      }
      bw.put(0, 2);       // rice method 0
      bw.put(0, 4);       // partition order 0
      bw.put(best_p, 4);  // parameter
      for (auto z : zz) {
        const std::uint64_t q = z >> best_p;
        for (std::uint64_t i = 0; i < q; ++i) bw.put(0, 1);
        bw.put(1, 1);
        bw.put(z & ((1ull << best_p) - 1), best_p);
      }
      break;
    }
    case FlacMode::EscapeRaw: {
      bw.put(0x08 | 0, 6);  // fixed, order 0
      bw.put(0, 1);
      bw.put(0, 2);   // rice method 0
      bw.put(0, 4);   // partition order 0
      bw.put(0xF, 4); // escape
      bw.put(17, 5);  // raw width
      for (auto v : x) bw.put_signed(v, 17);
      break;
    }
  }
}

inline std::vector<unsigned char> encode_flac(
    const std::vector<std::vector<std::int32_t>>& channels, unsigned rate,
    FlacMode mode, unsigned block_size = 4096) {
  const unsigned nch = static_cast<unsigned>(channels.size());
  if (nch < 1 || nch > 2) throw std::runtime_error("encode_flac: 1-2 channels");
  if (mode == FlacMode::LeftSide && nch != 2) {
    throw std::runtime_error("encode_flac: LeftSide needs stereo");
  }
  const std::size_t total = channels[0].size();
  const unsigned depth = 16;

  BitWriter out;
  out.put('f', 8); out.put('L', 8); out.put('a', 8); out.put('C', 8);
  // STREAMINFO, last metadata block
  out.put(1, 1);
  out.put(0, 7);
  out.put(34, 24);
  out.put(block_size, 16);
  out.put(block_size, 16);
  out.put(0, 24);
  out.put(0, 24);
  out.put(rate, 20);
  out.put(nch - 1, 3);
  out.put(depth - 1, 5);
  out.put(total, 36);
  for (int i = 0; i < 16; ++i) out.put(0, 8);  // md5 unset

  std::size_t pos = 0;
  unsigned frame_no = 0;
  while (pos < total) {
    const auto bs = static_cast<unsigned>(std::min<std::size_t>(block_size, total - pos));
    BitWriter fr;
    fr.put(0x3FFE, 14);
    fr.put(0, 1);  // reserved
    fr.put(0, 1);  // fixed blocking
    fr.put(0x7, 4);  // block size: 16-bit field at header end
    fr.put(0x0, 4);  // sample rate from streaminfo
    fr.put(mode == FlacMode::LeftSide ? 0x8 : (nch - 1), 4);
    fr.put(0x4, 3);  // 16-bit samples
    fr.put(0, 1);    // reserved
    if (frame_no > 127) throw std::runtime_error("encode_flac: too many frames");
    fr.put(frame_no, 8);  // UTF-8 single byte
    fr.put(bs - 1, 16);
    fr.align();
    fr.put(flac_crc8(fr.bytes().data(), fr.bytes().size()), 8);

    if (mode == FlacMode::LeftSide) {
      std::vector<std::int32_t> left(channels[0].begin() + pos,
                                     channels[0].begin() + pos + bs);
      std::vector<std::int32_t> side(bs);
      for (unsigned i = 0; i < bs; ++i) {
        side[i] = channels[0][pos + i] - channels[1][pos + i];
      }
      encode_subframe(fr, left, FlacMode::Verbatim, depth);
      encode_subframe(fr, side, FlacMode::Verbatim, depth + 1);
    } else {
      for (unsigned c = 0; c < nch; ++c) {
        std::vector<std::int32_t> blk(channels[c].begin() + pos,
                                      channels[c].begin() + pos + bs);
        encode_subframe(fr, blk, mode, depth);
      }
    }
    fr.align();
    const std::uint16_t c16 = flac_crc16(fr.bytes().data(), fr.bytes().size());
    fr.put(c16, 16);
    out.bytes().insert(out.bytes().end(), fr.bytes().begin(), fr.bytes().end());
    pos += bs;
    ++frame_no;
  }
  return out.bytes();
}

inline void write_flac_file(const std::string& path,
                            const std::vector<std::vector<std::int32_t>>& channels,
                            unsigned rate, FlacMode mode, unsigned block_size = 4096) {
  const auto bytes = encode_flac(channels, rate, mode, block_size);
  std::ofstream f(path, std::ios::binary);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write_flac_file failed: " + path);
}

}  // namespace testsupport
