#pragma once

#include <cstdint>
#include <span>
#include <string_view>

#include "mxdp/errors.hpp"

namespace mxdp {

// One aligned product entering the reduction tree.
// Value = sign * significand * 2^exponent; the exponent is the weight of the
// significand LSB. Products from real MX elements keep the significand within
// 10 bits and the exponent span within the 6-bit hardware window.
struct ProductTerm {
  int8_t sign = 0;  // -1, 0, +1
  uint32_t significand = 0;
  int32_t exponent = 0;

  bool operator==(const ProductTerm&) const = default;
};

// Internal signed exponent range of the datapath (12-bit two's complement).
// Anything outside raises the saturation flag instead of wrapping.
inline constexpr int32_t kAccExpMax = 2047;
inline constexpr int32_t kAccExpMin = -2048;

// Stored partial result: sign * 1.mantissa * 2^exponent with an M-bit
// mantissa (M is a runtime parameter; the significand width is S = M + 1).
// There are no subnormals: the wide exponent range makes them unreachable.
struct AccumulatorValue {
  int8_t sign = 1;
  int32_t exponent = 0;  // weight of the hidden leading one
  uint32_t mantissa = 0;
  bool zero = true;
  bool saturated = false;

  bool operator==(const AccumulatorValue&) const = default;

  double to_double(int mantissa_bits) const;
  static AccumulatorValue from_double(double v, int mantissa_bits);
};

enum class TreeVariant {
  Fp32Addition,  // align, sum, normalize+round, then floating accumulate
  LongInteger,   // anchored exact sum, early accumulation with reattachment
  HybridIter1,   // early accumulation over the full extended window
  HybridIter2,   // muxed left/right extension of the product-sum
};

struct TreeConfig {
  TreeVariant variant = TreeVariant::HybridIter2;
  int acc_mantissa_bits = 16;  // 2..23
  uint8_t shared_exponent_a = 127;
  uint8_t shared_exponent_b = 127;

  bool operator==(const TreeConfig&) const = default;
};

// Structural widths of the configured tree, in bits.
struct CostReport {
  int l2_align_width = 0;   // alignment shifter output per significand
  int l2_adder_width = 0;   // product-sum
  int acc_adder_width = 0;  // accumulation adder output
  int norm_input_width = 0; // normalization input
  int mux_bits = 0;         // product-sum placement mux (iter2 only)
};

const char* tree_variant_name(TreeVariant v);
const TreeVariant* find_tree_variant(std::string_view name);

// MXFP4 level-1 reduction: the eight 4-bit products are aligned to the
// maximum exponent without bit loss and signed-summed. For genuine E2M1
// products the normalized result fits a 10-bit significand.
ProductTerm l1_reduce_fp4(std::span<const ProductTerm, 8> products);

AccumulatorValue tree_fp32_addition(std::span<const ProductTerm, 4> terms,
                                    const AccumulatorValue& acc, const TreeConfig& cfg);
AccumulatorValue tree_long_integer(std::span<const ProductTerm, 4> terms,
                                   const AccumulatorValue& acc, const TreeConfig& cfg);
AccumulatorValue tree_hybrid(std::span<const ProductTerm, 4> terms,
                             const AccumulatorValue& acc, const TreeConfig& cfg);

// Dispatch on cfg.variant.
AccumulatorValue tree_reduce(std::span<const ProductTerm, 4> terms,
                             const AccumulatorValue& acc, const TreeConfig& cfg);

CostReport cost_report(const TreeConfig& cfg);

}  // namespace mxdp
