// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "swattn/tensor.hpp"

namespace swattn {

// File layout, all integers little-endian, no padding:
//
//   8 bytes  magic "SWATTNS1"
//   u32      rank
//   u64      extent, repeated rank times
//   u8       tag: 0 = f32 payload, 1 = f64 payload
//   payload  product(extents) IEEE-754 values, little-endian
//
// Other modules reuse the header with their own tag values (see
// kSelectionTag in block_selection.hpp).
inline constexpr char kFileMagic[8] = {'S', 'W', 'A', 'T', 'T', 'N', 'S', '1'};
inline constexpr std::uint8_t kTagF32 = 0;
inline constexpr std::uint8_t kTagF64 = 1;

// Writes via a temporary file in the same directory and renames it into place.
void save_tensor(const Tensor& t, const std::string& path);

// Throws FormatError: kMalformedHeader (bad magic, short header, trailing
// bytes), kUnknownPrecision, kTruncatedPayload, kNonFinite, or kIo.
Tensor load_tensor(const std::string& path);

}  // namespace swattn
