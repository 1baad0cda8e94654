#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "rawvoice/error.hpp"

namespace rawvoice::detail {

// Little-endian primitives. Multi-byte values are assembled bytewise so the
// on-disk formats do not depend on host endianness.

inline void put_bytes(std::ostream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void put_u16(std::ostream& out, std::uint16_t v) {
  const std::array<unsigned char, 2> b{static_cast<unsigned char>(v & 0xff),
                                       static_cast<unsigned char>(v >> 8)};
  put_bytes(out, b.data(), b.size());
}

inline void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<unsigned char, 4> b;
  for (int i = 0; i < 4; ++i) b[static_cast<std::size_t>(i)] = static_cast<unsigned char>(v >> (8 * i));
  put_bytes(out, b.data(), b.size());
}

inline void put_u64(std::ostream& out, std::uint64_t v) {
  std::array<unsigned char, 8> b;
  for (int i = 0; i < 8; ++i) b[static_cast<std::size_t>(i)] = static_cast<unsigned char>(v >> (8 * i));
  put_bytes(out, b.data(), b.size());
}

inline void put_f32(std::ostream& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

inline void put_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

inline void read_bytes(std::istream& in, void* p, std::size_t n,
                       const char* what) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw CorruptionError(std::string("truncated file while reading ") + what);
  }
}

inline std::uint16_t get_u16(std::istream& in, const char* what) {
  std::array<unsigned char, 2> b;
  read_bytes(in, b.data(), b.size(), what);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

inline std::uint32_t get_u32(std::istream& in, const char* what) {
  std::array<unsigned char, 4> b;
  read_bytes(in, b.data(), b.size(), what);
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
  return v;
}

inline std::uint64_t get_u64(std::istream& in, const char* what) {
  std::array<unsigned char, 8> b;
  read_bytes(in, b.data(), b.size(), what);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
  return v;
}

inline float get_f32(std::istream& in, const char* what) {
  const std::uint32_t bits = get_u32(in, what);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

inline double get_f64(std::istream& in, const char* what) {
  const std::uint64_t bits = get_u64(in, what);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

/// CRC-32 (IEEE 802.3, reflected polynomial 0xEDB88320).
class Crc32 {
 public:
  void update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint32_t c = state_;
    for (std::size_t i = 0; i < n; ++i) {
      c = table()[(c ^ p[i]) & 0xff] ^ (c >> 8);
    }
    state_ = c;
  }

  std::uint32_t value() const { return state_ ^ 0xffffffffu; }

 private:
  static const std::array<std::uint32_t, 256>& table() {
    static const std::array<std::uint32_t, 256> t = [] {
      std::array<std::uint32_t, 256> tab{};
      for (std::uint32_t i = 0; i < 256; ++i) {
        std::uint32_t c = i;
        for (int k = 0; k < 8; ++k) {
          c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
        }
        tab[i] = c;
      }
      return tab;
    }();
    return t;
  }

  std::uint32_t state_ = 0xffffffffu;
};

}  // namespace rawvoice::detail
