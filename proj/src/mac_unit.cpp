#include "mxdp/mac_unit.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mxdp {

namespace {

const std::array<const char*, 6> kModeNames = {
    "mxint8", "mxfp8_e5m2", "mxfp8_e4m3", "mxfp6_e3m2", "mxfp6_e2m3", "mxfp4_e2m1"};

// Per-format decode tables; element codes are at most 8 bits wide.
struct DecodeTable {
  std::array<DecodedElement, 256> entry;
};

const DecodeTable& decode_table(ElementFormat fmt) {
  static const std::array<DecodeTable, kFormatCount> tables = [] {
    std::array<DecodeTable, kFormatCount> t{};
    for (int f = 0; f < kFormatCount; ++f) {
      const FormatSpec& spec = format_spec(static_cast<ElementFormat>(f));
      for (int c = 0; c < 256; ++c) {
        t[static_cast<size_t>(f)].entry[static_cast<size_t>(c)] =
            unpack_element(spec, static_cast<uint8_t>(c & spec.code_mask()));
      }
    }
    return t;
  }();
  return tables[static_cast<size_t>(fmt)];
}

ProductTerm make_product(const DecodedElement& a, const DecodedElement& b) {
  if (a.sign == 0 || b.sign == 0) return ProductTerm{};
  return ProductTerm{static_cast<int8_t>(a.sign * b.sign), a.significand * b.significand,
                     a.exponent + b.exponent};
}

void check_finite(const DecodedElement& e, char operand, int index) {
  if (!e.finite) {
    throw InvalidOperandError(operand, index,
                              std::string("mac_cycle: non-finite element in operand '") +
                                  operand + "' at index " + std::to_string(index));
  }
}

// Core of one cycle on pre-decoded elements.
AccumulatorValue reduce_cycle(PrecisionMode mode, std::span<const DecodedElement> a,
                              std::span<const DecodedElement> b,
                              const AccumulatorValue& acc, const TreeConfig& cfg) {
  std::array<ProductTerm, 4> terms{};
  if (mode == PrecisionMode::MxFp4E2m1) {
    std::array<ProductTerm, 8> products;
    for (int i = 0; i < 8; ++i) {
      products[static_cast<size_t>(i)] =
          make_product(a[static_cast<size_t>(i)], b[static_cast<size_t>(i)]);
    }
    terms[0] = l1_reduce_fp4(products);
  } else if (mode == PrecisionMode::MxInt8) {
    terms[0] = make_product(a[0], b[0]);
  } else {
    for (int i = 0; i < 4; ++i) {
      terms[static_cast<size_t>(i)] =
          make_product(a[static_cast<size_t>(i)], b[static_cast<size_t>(i)]);
    }
  }
  return tree_reduce(terms, acc, cfg);
}

}  // namespace

const FormatSpec& mode_format(PrecisionMode mode) {
  return format_spec(static_cast<ElementFormat>(mode));
}

const char* mode_name(PrecisionMode mode) { return kModeNames[static_cast<size_t>(mode)]; }

const PrecisionMode* find_mode(std::string_view name) {
  static const std::array<PrecisionMode, 6> kModes = {
      PrecisionMode::MxInt8,    PrecisionMode::MxFp8E5m2, PrecisionMode::MxFp8E4m3,
      PrecisionMode::MxFp6E3m2, PrecisionMode::MxFp6E2m3, PrecisionMode::MxFp4E2m1};
  for (size_t i = 0; i < kModes.size(); ++i) {
    if (name == kModeNames[i]) return &kModes[i];
  }
  // Element-format spellings map to the same modes.
  if (const FormatSpec* spec = find_format(name)) {
    return &kModes[static_cast<size_t>(spec->id)];
  }
  return nullptr;
}

int products_per_cycle(PrecisionMode mode) {
  switch (mode) {
    case PrecisionMode::MxInt8: return 1;
    case PrecisionMode::MxFp4E2m1: return 8;
    default: return 4;
  }
}

int cycles_per_block(PrecisionMode mode) { return kBlockSize / products_per_cycle(mode); }

MacState mac_cycle(const MacState& state, std::span<const uint8_t> a_codes,
                   std::span<const uint8_t> b_codes, uint8_t shared_a, uint8_t shared_b) {
  const int n = products_per_cycle(state.mode);
  if (static_cast<int>(a_codes.size()) != n || static_cast<int>(b_codes.size()) != n) {
    throw Error("mac_cycle: element count does not match the precision mode");
  }
  const DecodeTable& table = decode_table(static_cast<ElementFormat>(state.mode));
  std::array<DecodedElement, 8> a{}, b{};
  for (int i = 0; i < n; ++i) {
    a[static_cast<size_t>(i)] = table.entry[a_codes[static_cast<size_t>(i)]];
    b[static_cast<size_t>(i)] = table.entry[b_codes[static_cast<size_t>(i)]];
    check_finite(a[static_cast<size_t>(i)], 'a', i);
    check_finite(b[static_cast<size_t>(i)], 'b', i);
  }
  MacState next = state;
  TreeConfig cfg = state.tree;
  cfg.shared_exponent_a = shared_a;
  cfg.shared_exponent_b = shared_b;
  next.accumulator = reduce_cycle(state.mode, {a.data(), static_cast<size_t>(n)},
                                  {b.data(), static_cast<size_t>(n)}, state.accumulator, cfg);
  next.cycle += 1;
  return next;
}

MacState mac_dot_block(const MacState& state, const MxBlock& a, const MxBlock& b) {
  const FormatSpec& spec = mode_format(state.mode);
  if (a.format != spec.id || b.format != spec.id) {
    throw Error("mac_dot_block: block format does not match the precision mode");
  }
  if (a.shared_exponent == kScaleNan || b.shared_exponent == kScaleNan) {
    throw InvalidBlockError("mac_dot_block: reserved NaN scale code");
  }
  const int n = products_per_cycle(state.mode);
  MacState s = state;
  for (int off = 0; off < kBlockSize; off += n) {
    s = mac_cycle(s, {a.elements.data() + off, static_cast<size_t>(n)},
                  {b.elements.data() + off, static_cast<size_t>(n)}, a.shared_exponent,
                  b.shared_exponent);
  }
  return s;
}

std::array<MxBlock, 2> quantize_group_values(std::span<const double, 64> values,
                                             const FormatSpec& spec) {
  double max_abs = 0.0;
  for (double v : values) {
    if (!std::isfinite(v)) throw Error("quantize_group: non-finite value");
    max_abs = std::max(max_abs, std::fabs(v));
  }
  std::array<MxBlock, 2> blocks;
  blocks[0].format = spec.id;
  blocks[1].format = spec.id;
  if (max_abs == 0.0) return blocks;

  const int code = std::clamp(std::ilogb(max_abs) - spec.max_normal_exponent + kScaleBias,
                              0, 254);
  const double inv_scale = std::ldexp(1.0, -(code - kScaleBias));
  for (int half = 0; half < 2; ++half) {
    blocks[static_cast<size_t>(half)].shared_exponent = static_cast<uint8_t>(code);
    for (int i = 0; i < kBlockSize; ++i) {
      blocks[static_cast<size_t>(half)].elements[static_cast<size_t>(i)] =
          encode_element(spec, values[static_cast<size_t>(half * kBlockSize + i)] * inv_scale);
    }
  }
  return blocks;
}

std::array<MxBlock, 2> quantize_group(std::span<const AccumulatorValue, 64> outputs,
                                      const FormatSpec& spec, int mantissa_bits) {
  std::array<double, 64> vals;
  for (int i = 0; i < 64; ++i) {
    const AccumulatorValue& v = outputs[static_cast<size_t>(i)];
    if (v.saturated) {
      throw SaturationError("quantize_group: saturated accumulator at index " +
                            std::to_string(i));
    }
    vals[static_cast<size_t>(i)] = v.to_double(mantissa_bits);
  }
  return quantize_group_values(vals, spec);
}

RealMatrix AccMatrix::to_real() const {
  RealMatrix out(rows, cols);
  for (size_t i = 0; i < values.size(); ++i) out.data[i] = values[i].to_double(mantissa_bits);
  return out;
}

AccMatrix mx_gemm_raw(const MxMatrix& a, const MxMatrix& b_t, PrecisionMode mode,
                      const TreeConfig& tree) {
  const FormatSpec& spec = mode_format(mode);
  if (a.format != spec.id || b_t.format != spec.id) {
    throw Error("mx_gemm_raw: operand format does not match the precision mode");
  }
  if (a.cols != b_t.cols || a.blocks_per_row != b_t.blocks_per_row) {
    throw DimensionError("mx_gemm_raw: inner dimensions disagree");
  }

  // Pre-decode both operands once; the dot loops then run on plain integers.
  const DecodeTable& table = decode_table(spec.id);
  struct DecodedBlock {
    uint8_t shared;
    std::array<DecodedElement, kBlockSize> el;
  };
  auto predecode = [&](const MxMatrix& m, char operand) {
    std::vector<DecodedBlock> out(m.blocks.size());
    for (size_t i = 0; i < m.blocks.size(); ++i) {
      const MxBlock& blk = m.blocks[i];
      if (blk.shared_exponent == kScaleNan) {
        throw InvalidBlockError("mx_gemm_raw: reserved NaN scale code");
      }
      out[i].shared = blk.shared_exponent;
      for (int k = 0; k < kBlockSize; ++k) {
        out[i].el[static_cast<size_t>(k)] = table.entry[blk.elements[static_cast<size_t>(k)]];
        check_finite(out[i].el[static_cast<size_t>(k)], operand,
                     static_cast<int>(i) * kBlockSize + k);
      }
    }
    return out;
  };
  const std::vector<DecodedBlock> da = predecode(a, 'a');
  const std::vector<DecodedBlock> db = predecode(b_t, 'b');

  AccMatrix out;
  out.rows = a.rows;
  out.cols = b_t.rows;
  out.mantissa_bits = tree.acc_mantissa_bits;
  out.values.resize(static_cast<size_t>(out.rows * out.cols));

  const int n = products_per_cycle(mode);
  TreeConfig cfg = tree;
  for (int64_t i = 0; i < a.rows; ++i) {
    for (int64_t j = 0; j < b_t.rows; ++j) {
      AccumulatorValue acc;
      for (int64_t kb = 0; kb < a.blocks_per_row; ++kb) {
        const DecodedBlock& ba = da[static_cast<size_t>(i * a.blocks_per_row + kb)];
        const DecodedBlock& bb = db[static_cast<size_t>(j * b_t.blocks_per_row + kb)];
        cfg.shared_exponent_a = ba.shared;
        cfg.shared_exponent_b = bb.shared;
        for (int off = 0; off < kBlockSize; off += n) {
          acc = reduce_cycle(mode, {ba.el.data() + off, static_cast<size_t>(n)},
                             {bb.el.data() + off, static_cast<size_t>(n)}, acc, cfg);
        }
      }
      out.at(i, j) = acc;
    }
  }
  return out;
}

QuantizedTiles quantize_output_tiles(const AccMatrix& acc, const FormatSpec& spec) {
  if (acc.rows % 8 != 0 || acc.cols % 8 != 0) {
    throw DimensionError("quantize_output_tiles: dimensions must be multiples of 8");
  }
  QuantizedTiles out;
  out.format = spec.id;
  out.rows = acc.rows;
  out.cols = acc.cols;
  out.blocks.reserve(static_cast<size_t>(acc.rows / 8 * acc.cols / 8 * 2));
  std::array<AccumulatorValue, 64> group;
  for (int64_t ti = 0; ti < acc.rows / 8; ++ti) {
    for (int64_t tj = 0; tj < acc.cols / 8; ++tj) {
      for (int r = 0; r < 8; ++r) {
        for (int c = 0; c < 8; ++c) {
          group[static_cast<size_t>(r * 8 + c)] = acc.at(ti * 8 + r, tj * 8 + c);
        }
      }
      const std::array<MxBlock, 2> blocks = quantize_group(group, spec, acc.mantissa_bits);
      out.blocks.push_back(blocks[0]);
      out.blocks.push_back(blocks[1]);
    }
  }
  return out;
}

}  // namespace mxdp
