// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "swattn/errors.hpp"

namespace swattn::detail {

class ByteWriter {
 public:
  void put_bytes(const char* data, std::size_t n) { buf_.insert(buf_.end(), data, data + n); }
  void put_u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void put_u32(std::uint32_t v) { put_le(v, 4); }
  void put_u64(std::uint64_t v) { put_le(v, 8); }
  void put_f32(float v) { put_u32(std::bit_cast<std::uint32_t>(v)); }
  void put_f64(double v) { put_u64(std::bit_cast<std::uint64_t>(v)); }

  const std::vector<char>& bytes() const { return buf_; }

 private:
  void put_le(std::uint64_t v, int width) {
    for (int i = 0; i < width; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  std::vector<char> buf_;
};

// Bounds-checked little-endian reader. Running off the end throws FormatError
// with the kind given at construction, which callers switch from header to
// payload as they go.
class ByteReader {
 public:
  explicit ByteReader(std::vector<char> data) : data_(std::move(data)) {}

  void set_overrun_kind(FormatError::Kind kind) { overrun_ = kind; }
  std::size_t remaining() const { return data_.size() - pos_; }

  void get_bytes(char* out, std::size_t n) {
    need(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = data_[pos_ + i];
    pos_ += n;
  }
  std::uint8_t get_u8() { return static_cast<std::uint8_t>(get_le(1)); }
  std::uint32_t get_u32() { return static_cast<std::uint32_t>(get_le(4)); }
  std::uint64_t get_u64() { return get_le(8); }
  float get_f32() { return std::bit_cast<float>(get_u32()); }
  double get_f64() { return std::bit_cast<double>(get_u64()); }

 private:
  void need(std::size_t n) {
    if (remaining() < n) {
      throw FormatError(overrun_, overrun_ == FormatError::Kind::kTruncatedPayload
                                      ? "payload is truncated"
                                      : "header is truncated");
    }
  }
  std::uint64_t get_le(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(width);
    return v;
  }

  std::vector<char> data_;
  std::size_t pos_ = 0;
  FormatError::Kind overrun_ = FormatError::Kind::kMalformedHeader;
};

std::vector<char> read_file(const std::string& path);
// Writes to "<path>.tmp" and renames over `path`.
void write_file_atomic(const std::string& path, const std::vector<char>& bytes);

// Reads magic, rank, and extents. Returns the tag byte.
std::uint8_t read_header(ByteReader& in, std::vector<std::uint64_t>& extents);
void write_header(ByteWriter& out, const std::vector<std::uint64_t>& extents, std::uint8_t tag);

}  // namespace swattn::detail
