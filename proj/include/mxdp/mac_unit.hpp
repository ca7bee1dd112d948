#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "mxdp/formats.hpp"
#include "mxdp/matrix.hpp"
#include "mxdp/reduction_tree.hpp"

namespace mxdp {

enum class PrecisionMode : uint8_t {
  MxInt8 = 0,
  MxFp8E5m2,
  MxFp8E4m3,
  MxFp6E3m2,
  MxFp6E2m3,
  MxFp4E2m1,
};

const FormatSpec& mode_format(PrecisionMode mode);
const char* mode_name(PrecisionMode mode);
const PrecisionMode* find_mode(std::string_view name);

// Products summed per cycle: 1 (INT8), 4 (FP8/FP6), 8 (FP4).
int products_per_cycle(PrecisionMode mode);
// Cycles to consume one 32-element block: 32 / 8 / 4.
int cycles_per_block(PrecisionMode mode);

// State of one MAC between cycles. Transitions are pure value functions.
struct MacState {
  PrecisionMode mode = PrecisionMode::MxInt8;
  TreeConfig tree;
  AccumulatorValue accumulator;
  uint64_t cycle = 0;

  bool operator==(const MacState&) const = default;
};

// One MAC cycle: decode the mode's element-code pairs, form products, reduce
// through the configured tree, fold into the accumulator. INT8 products enter
// the tree as a single exact term; MXFP4 products pass through the level-1
// reduction first. E5M2 Inf/NaN operands raise InvalidOperandError with the
// offending operand and element index.
MacState mac_cycle(const MacState& state, std::span<const uint8_t> a_codes,
                   std::span<const uint8_t> b_codes, uint8_t shared_a, uint8_t shared_b);

// 32-element dot product folded into the accumulator via repeated mac_cycle.
MacState mac_dot_block(const MacState& state, const MxBlock& a, const MxBlock& b);

// Group quantization over the 8x8 array output: one shared exponent is
// computed across all 64 values and written into both constituent blocks.
// Throws SaturationError if any input carries the saturation flag.
std::array<MxBlock, 2> quantize_group(std::span<const AccumulatorValue, 64> outputs,
                                      const FormatSpec& spec, int mantissa_bits);

// Same grouping rule on plain FP64 values (the reference path).
std::array<MxBlock, 2> quantize_group_values(std::span<const double, 64> values,
                                             const FormatSpec& spec);

// Unquantized GeMM result.
struct AccMatrix {
  int64_t rows = 0;
  int64_t cols = 0;
  int mantissa_bits = 23;
  std::vector<AccumulatorValue> values;

  const AccumulatorValue& at(int64_t r, int64_t c) const {
    return values[static_cast<size_t>(r * cols + c)];
  }
  AccumulatorValue& at(int64_t r, int64_t c) {
    return values[static_cast<size_t>(r * cols + c)];
  }
  RealMatrix to_real() const;
};

// GeMM over MX operands: A is M x K, B is supplied transposed (N x K), both
// blocked along K. Each output accumulates blocks in ascending K order, the
// same sequence the tensor-core schedule produces.
AccMatrix mx_gemm_raw(const MxMatrix& a, const MxMatrix& b_t, PrecisionMode mode,
                      const TreeConfig& tree);

// Tile-grouped quantized GeMM output: two blocks per 8x8 tile, tiles in
// row-major order, rows 0..3 of the tile in the first block.
struct QuantizedTiles {
  ElementFormat format = ElementFormat::Int8;
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<MxBlock> blocks;

  bool operator==(const QuantizedTiles&) const = default;
};

QuantizedTiles quantize_output_tiles(const AccMatrix& acc, const FormatSpec& spec);

}  // namespace mxdp
