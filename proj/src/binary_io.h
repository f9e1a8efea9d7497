// Copyright 2026 The LEC Authors
// SPDX-License-Identifier: Apache-2.0

// Little-endian primitives shared by the binary formats. Values are encoded
// byte by byte so files are identical regardless of host byte order.

#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>

#include "lec/errors.h"
#include "lec/fileio.h"

namespace lec::detail {

template <typename UInt>
void put_le(std::string& out, UInt value) {
  for (std::size_t i = 0; i < sizeof(UInt); ++i)
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

inline void put_u8(std::string& out, std::uint8_t v) { out.push_back(static_cast<char>(v)); }
inline void put_u32(std::string& out, std::uint32_t v) { put_le(out, v); }
inline void put_u64(std::string& out, std::uint64_t v) { put_le(out, v); }
inline void put_f64(std::string& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }
inline void put_f32(std::string& out, float v) { put_le(out, std::bit_cast<std::uint32_t>(v)); }
inline void put_str(std::string& out, std::string_view s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

template <typename UInt>
UInt get_le(const unsigned char* p) {
  UInt v = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) v |= static_cast<UInt>(p[i]) << (8 * i);
  return v;
}

/// Bounds-checked cursor over an in-memory byte buffer. Reading past the end
/// throws TruncatedFileError carrying the absolute offset.
class ByteReader {
 public:
  ByteReader(std::string_view bytes, std::filesystem::path path, std::uint64_t base_offset = 0)
      : bytes_(bytes), path_(std::move(path)), base_(base_offset) {}

  std::uint64_t offset() const noexcept { return base_ + pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
  void seek(std::size_t pos) { pos_ = pos; }

  std::uint8_t u8(std::string_view what) { return take(1, what)[0]; }
  std::uint32_t u32(std::string_view what) { return get_le<std::uint32_t>(take(4, what)); }
  std::uint64_t u64(std::string_view what) { return get_le<std::uint64_t>(take(8, what)); }
  double f64(std::string_view what) { return std::bit_cast<double>(u64(what)); }
  float f32(std::string_view what) { return std::bit_cast<float>(u32(what)); }
  std::string str(std::string_view what) {
    const auto n = u32(what);
    const auto* p = take(n, what);
    return std::string(reinterpret_cast<const char*>(p), n);
  }
  void expect_magic(std::string_view magic) {
    const auto* p = take(magic.size(), "magic");
    if (std::string_view(reinterpret_cast<const char*>(p), magic.size()) != magic)
      throw FormatError(path_, "bad magic (expected '" + std::string(magic) + "')");
  }

 private:
  const unsigned char* take(std::size_t n, std::string_view what) {
    if (n > remaining())
      throw TruncatedFileError(path_, offset(),
                               "need " + std::to_string(n) + " bytes for " + std::string(what) +
                                   ", " + std::to_string(remaining()) + " left");
    const auto* p = reinterpret_cast<const unsigned char*>(bytes_.data() + pos_);
    pos_ += n;
    return p;
  }

  std::string_view bytes_;
  std::filesystem::path path_;
  std::uint64_t base_;
  std::size_t pos_ = 0;
};

}  // namespace lec::detail
