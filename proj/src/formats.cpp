#include "mxdp/formats.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

namespace mxdp {

namespace {

// Table 1 element formats. INT8 is two's complement with 1 integer and
// 6 fraction bits (value = i / 64), so its "mantissa" is the 6 fraction bits
// and the largest finite binade is 2^0.
constexpr std::array<FormatSpec, kFormatCount> kFormats = {{
    {ElementFormat::Int8, "int8", 0, 6, 8, 0, 0, false, 2.0},  // -128/64 on the negative side
    {ElementFormat::Fp8E5m2, "fp8_e5m2", 5, 2, 8, 15, 15, true, 57344.0},
    {ElementFormat::Fp8E4m3, "fp8_e4m3", 4, 3, 8, 7, 8, false, 448.0},
    {ElementFormat::Fp6E3m2, "fp6_e3m2", 3, 2, 6, 3, 4, false, 28.0},
    {ElementFormat::Fp6E2m3, "fp6_e2m3", 2, 3, 6, 1, 2, false, 7.5},
    {ElementFormat::Fp4E2m1, "fp4_e2m1", 2, 1, 4, 1, 2, false, 6.0},
}};

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

}  // namespace

const FormatSpec& format_spec(ElementFormat fmt) {
  return kFormats[static_cast<size_t>(fmt)];
}

std::span<const FormatSpec, kFormatCount> all_formats() { return kFormats; }

const FormatSpec* find_format(std::string_view name) {
  const std::string key = to_lower(name);
  for (const FormatSpec& spec : kFormats) {
    if (key == spec.name) return &spec;
  }
  // Accept the bare ExMy spellings as well.
  if (key == "e5m2") return &kFormats[1];
  if (key == "e4m3") return &kFormats[2];
  if (key == "e3m2") return &kFormats[3];
  if (key == "e2m3") return &kFormats[4];
  if (key == "e2m1") return &kFormats[5];
  return nullptr;
}

DecodedElement unpack_element(const FormatSpec& spec, uint8_t code) {
  code &= spec.code_mask();
  if (spec.id == ElementFormat::Int8) {
    const int v = static_cast<int8_t>(code);
    if (v == 0) return {0, 0, -6, true};
    return {v < 0 ? -1 : 1, static_cast<uint32_t>(v < 0 ? -v : v), -6, true};
  }
  const int m = spec.mantissa_bits;
  const int sign_bit = (code >> (spec.total_bits - 1)) & 1;
  const int exp_field = (code >> m) & ((1 << spec.exponent_bits) - 1);
  const uint32_t mant = code & ((1u << m) - 1);
  const int sign = sign_bit ? -1 : 1;

  if (spec.has_inf_nan && exp_field == (1 << spec.exponent_bits) - 1) {
    return {sign, mant, 0, false};  // E5M2 Inf (mant==0) or NaN
  }
  if (spec.id == ElementFormat::Fp8E4m3 && exp_field == 15 && mant == 7) {
    return {sign, mant, 0, false};  // E4M3 NaN; no Inf in this format
  }
  if (exp_field == 0) {
    if (mant == 0) return {0, 0, 1 - spec.bias - m, true};
    return {sign, mant, 1 - spec.bias - m, true};  // subnormal, hidden 0
  }
  return {sign, (1u << m) | mant, exp_field - spec.bias - m, true};
}

double decode_element(const FormatSpec& spec, uint8_t code) {
  code &= spec.code_mask();
  const DecodedElement e = unpack_element(spec, code);
  if (!e.finite) {
    const int m = spec.mantissa_bits;
    const uint32_t mant = code & ((1u << m) - 1);
    if (spec.has_inf_nan && mant == 0) {
      return e.sign < 0 ? -std::numeric_limits<double>::infinity()
                        : std::numeric_limits<double>::infinity();
    }
    return std::numeric_limits<double>::quiet_NaN();
  }
  if (e.sign == 0) {
    // Preserve the sign of zero for FP formats.
    if (spec.id != ElementFormat::Int8 && (code >> (spec.total_bits - 1)) & 1) return -0.0;
    return 0.0;
  }
  return e.sign * std::ldexp(static_cast<double>(e.significand), e.exponent);
}

uint8_t encode_element(const FormatSpec& spec, double value) {
  if (spec.id == ElementFormat::Int8) {
    if (!std::isfinite(value)) throw Error("encode_element: non-finite INT8 input");
    // Symmetric saturation: -128 stays decodable but the quantizer never
    // emits it, which keeps block re-quantization idempotent.
    double q = std::nearbyint(value * 64.0);
    q = std::min(std::max(q, -127.0), 127.0);
    return static_cast<uint8_t>(static_cast<int8_t>(q));
  }

  const int m = spec.mantissa_bits;
  const uint8_t sign_bit = std::signbit(value) ? 1 : 0;
  const uint8_t sign_mask = static_cast<uint8_t>(sign_bit << (spec.total_bits - 1));

  if (std::isnan(value)) {
    if (spec.id == ElementFormat::Fp8E5m2) return 0x7f;  // s=0 e=11111 m=11
    if (spec.id == ElementFormat::Fp8E4m3) return 0x7f;
    throw Error("encode_element: NaN not representable in this format");
  }
  if (std::isinf(value)) {
    if (spec.has_inf_nan) return sign_mask | static_cast<uint8_t>(0x1f << m);
    // Saturate like any over-range magnitude.
    value = std::copysign(spec.max_finite, value);
  }

  const double a = std::fabs(value);
  if (a == 0.0) return sign_mask;
  if (a >= spec.max_finite) {
    // Largest finite code of the format.
    uint8_t code;
    if (spec.has_inf_nan) {
      code = static_cast<uint8_t>((0x1e << m) | ((1 << m) - 1));
    } else if (spec.id == ElementFormat::Fp8E4m3) {
      code = 0x7e;  // 448; 0x7f is NaN
    } else {
      code = static_cast<uint8_t>(spec.code_mask() >> 1);  // all ones below sign
    }
    return sign_mask | code;
  }

  const int min_exp = 1 - spec.bias;
  int e = std::max(std::ilogb(a), min_exp);
  // Scale to the significand grid of binade e; power-of-two scaling is exact.
  uint32_t q = static_cast<uint32_t>(std::nearbyint(std::ldexp(a, m - e)));
  if (q == (2u << m)) {  // rounded up into the next binade
    q = 1u << m;
    ++e;
  }
  uint8_t code;
  if (q < (1u << m)) {
    code = static_cast<uint8_t>(q);  // subnormal (e == min_exp here)
  } else {
    code = static_cast<uint8_t>(((e + spec.bias) << m) | (q - (1u << m)));
  }
  return sign_mask | code;
}

bool code_is_finite(const FormatSpec& spec, uint8_t code) {
  return unpack_element(spec, code).finite;
}

MxBlock quantize_to_mx(std::span<const double, kBlockSize> values, const FormatSpec& spec) {
  double max_abs = 0.0;
  for (double v : values) {
    if (!std::isfinite(v)) throw Error("quantize_to_mx: non-finite input value");
    max_abs = std::max(max_abs, std::fabs(v));
  }
  MxBlock block;
  block.format = spec.id;
  if (max_abs == 0.0) return block;

  const int sh = std::ilogb(max_abs) - spec.max_normal_exponent;
  const int code = std::clamp(sh + kScaleBias, 0, 254);
  block.shared_exponent = static_cast<uint8_t>(code);
  const double inv_scale = std::ldexp(1.0, -(code - kScaleBias));
  for (int i = 0; i < kBlockSize; ++i) {
    block.elements[i] = encode_element(spec, values[i] * inv_scale);
  }
  return block;
}

std::array<double, kBlockSize> decode_block(const MxBlock& block) {
  if (block.shared_exponent == kScaleNan) {
    throw InvalidBlockError("decode_block: shared exponent is the reserved NaN code");
  }
  const FormatSpec& spec = format_spec(block.format);
  const double scale = std::ldexp(1.0, block.shared_exponent - kScaleBias);
  std::array<double, kBlockSize> out;
  for (int i = 0; i < kBlockSize; ++i) {
    out[i] = decode_element(spec, block.elements[i]) * scale;
  }
  return out;
}

}  // namespace mxdp
