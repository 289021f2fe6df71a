// SPDX-License-Identifier: Apache-2.0
#include "swattn/tensor_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "core/byte_io.hpp"
#include "swattn/errors.hpp"

namespace swattn {
namespace detail {

std::vector<char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::kIo, "cannot open " + path);
  return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

void write_file_atomic(const std::string& path, const std::vector<char>& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(FormatError::Kind::kIo, "cannot write " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError(FormatError::Kind::kIo, "short write to " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw FormatError(FormatError::Kind::kIo, "cannot rename into " + path);
  }
}

std::uint8_t read_header(ByteReader& in, std::vector<std::uint64_t>& extents) {
  in.set_overrun_kind(FormatError::Kind::kMalformedHeader);
  char magic[8];
  in.get_bytes(magic, 8);
  if (!std::equal(magic, magic + 8, kFileMagic)) {
    throw FormatError(FormatError::Kind::kMalformedHeader, "bad magic bytes");
  }
  const std::uint32_t rank = in.get_u32();
  if (rank > 64) throw FormatError(FormatError::Kind::kMalformedHeader, "implausible rank");
  extents.resize(rank);
  for (auto& e : extents) e = in.get_u64();
  return in.get_u8();
}

void write_header(ByteWriter& out, const std::vector<std::uint64_t>& extents, std::uint8_t tag) {
  out.put_bytes(kFileMagic, 8);
  out.put_u32(static_cast<std::uint32_t>(extents.size()));
  for (auto e : extents) out.put_u64(e);
  out.put_u8(tag);
}

}  // namespace detail

void save_tensor(const Tensor& t, const std::string& path) {
  detail::ByteWriter out;
  std::vector<std::uint64_t> extents(t.shape().begin(), t.shape().end());
  const bool f32 = t.precision() == Precision::kF32;
  detail::write_header(out, extents, f32 ? kTagF32 : kTagF64);
  for (double v : t.values()) {
    if (f32) {
      out.put_f32(static_cast<float>(v));
    } else {
      out.put_f64(v);
    }
  }
  detail::write_file_atomic(path, out.bytes());
}

Tensor load_tensor(const std::string& path) {
  detail::ByteReader in(detail::read_file(path));
  std::vector<std::uint64_t> extents;
  const std::uint8_t tag = detail::read_header(in, extents);
  if (tag != kTagF32 && tag != kTagF64) {
    throw FormatError(FormatError::Kind::kUnknownPrecision,
                      "unknown precision tag " + std::to_string(tag));
  }
  const std::size_t width = tag == kTagF32 ? 4 : 8;
  std::uint64_t count = 1;
  for (auto e : extents) {
    if (e != 0 && count > in.remaining() / e) {
      throw FormatError(FormatError::Kind::kTruncatedPayload,
                        "payload is shorter than the declared shape");
    }
    count *= e;
  }
  in.set_overrun_kind(FormatError::Kind::kTruncatedPayload);
  if (count * width > in.remaining()) {
    throw FormatError(FormatError::Kind::kTruncatedPayload,
                      "payload is shorter than the declared shape");
  }
  std::vector<double> values(count);
  for (double& v : values) {
    v = tag == kTagF32 ? static_cast<double>(in.get_f32()) : in.get_f64();
    if (!std::isfinite(v)) {
      throw FormatError(FormatError::Kind::kNonFinite, "payload holds a non-finite value");
    }
  }
  if (in.remaining() != 0) {
    throw FormatError(FormatError::Kind::kMalformedHeader, "trailing bytes after payload");
  }
  std::vector<std::size_t> shape(extents.begin(), extents.end());
  return Tensor(std::move(shape), std::move(values),
                tag == kTagF32 ? Precision::kF32 : Precision::kF64);
}

}  // namespace swattn
