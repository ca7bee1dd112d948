#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>

#include "mxdp/errors.hpp"

namespace mxdp {

// MX block geometry: 32 elements under one 8-bit power-of-two scale.
inline constexpr int kBlockSize = 32;
inline constexpr int kScaleBias = 127;     // E8M0: value = 2^(code - 127)
inline constexpr uint8_t kScaleNan = 255;  // reserved E8M0 code

enum class ElementFormat : uint8_t {
  Int8 = 0,
  Fp8E5m2,
  Fp8E4m3,
  Fp6E3m2,
  Fp6E2m3,
  Fp4E2m1,
};

inline constexpr int kFormatCount = 6;

// Static description of one element format (ExMy fields, bias, range).
struct FormatSpec {
  ElementFormat id;
  const char* name;
  int exponent_bits;
  int mantissa_bits;
  int total_bits;
  int bias;
  int max_normal_exponent;  // unbiased exponent of the largest finite binade
  bool has_inf_nan;         // true only for E5M2
  double max_finite;        // largest finite magnitude

  int code_count() const { return 1 << total_bits; }
  uint8_t code_mask() const { return static_cast<uint8_t>((1 << total_bits) - 1); }
};

const FormatSpec& format_spec(ElementFormat fmt);
std::span<const FormatSpec, kFormatCount> all_formats();

// Case-insensitive lookup by name ("int8", "fp8_e4m3", ...). Null if unknown.
const FormatSpec* find_format(std::string_view name);

// Element unpacked for the datapath: value = sign * significand * 2^exponent.
// The fractional bits of the format are folded into the exponent, so the
// significand is a plain integer (<= 4 bits plus hidden one for FP formats,
// <= 8 bits magnitude for INT8).
struct DecodedElement {
  int sign;          // -1, 0, +1
  uint32_t significand;
  int exponent;      // weight of the significand LSB
  bool finite;       // false only for E5M2 Inf/NaN codes
};

DecodedElement unpack_element(const FormatSpec& spec, uint8_t code);

// Element value without the shared scale applied. E5M2 Inf/NaN codes decode
// to +/-inf and NaN doubles, which act as the non-finite markers.
double decode_element(const FormatSpec& spec, uint8_t code);

// Round-to-nearest-even with saturating clamp to the largest finite
// magnitude. Finite input required except for E5M2, which accepts +/-inf.
uint8_t encode_element(const FormatSpec& spec, double value);

// True if the code is neither Inf nor NaN in the given format.
bool code_is_finite(const FormatSpec& spec, uint8_t code);

struct MxBlock {
  ElementFormat format = ElementFormat::Int8;
  uint8_t shared_exponent = 0;  // E8M0 code
  std::array<uint8_t, kBlockSize> elements{};

  bool operator==(const MxBlock&) const = default;
};

// Shared scale selection: code = clamp(floor(log2 max|v|) - max_normal_exponent
// + 127, 0..254); elements are encoded against that scale. All-zero input
// yields the all-zero block with scale code 0.
MxBlock quantize_to_mx(std::span<const double, kBlockSize> values, const FormatSpec& spec);

// Element-wise decode times 2^(shared - 127). Throws InvalidBlockError for
// the reserved scale code 255.
std::array<double, kBlockSize> decode_block(const MxBlock& block);

}  // namespace mxdp
