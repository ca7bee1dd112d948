#pragma once

#include <cstdint>
#include <vector>

#include "mxdp/formats.hpp"

namespace mxdp {

// Dense FP64 matrix, row major. Carrier for reference data.
struct RealMatrix {
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<double> data;

  RealMatrix() = default;
  RealMatrix(int64_t r, int64_t c) : rows(r), cols(c), data(static_cast<size_t>(r * c), 0.0) {}

  double& at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * cols + c)]; }
  double at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * cols + c)]; }
};

// Plain FP64 product with strictly left-to-right accumulation, so the
// reference result is deterministic.
RealMatrix gemm_fp64(const RealMatrix& a, const RealMatrix& b);

// MX-quantized matrix. Blocks run along the inner (column) dimension; the
// trailing block of each row is zero padded when cols is not a multiple of 32.
struct MxMatrix {
  ElementFormat format = ElementFormat::Int8;
  int64_t rows = 0;
  int64_t cols = 0;            // logical column count
  int64_t blocks_per_row = 0;  // ceil(cols / 32)
  std::vector<MxBlock> blocks;

  const MxBlock& block(int64_t row, int64_t b) const {
    return blocks[static_cast<size_t>(row * blocks_per_row + b)];
  }
  MxBlock& block(int64_t row, int64_t b) {
    return blocks[static_cast<size_t>(row * blocks_per_row + b)];
  }
};

// Per-row 32-element block quantization of an FP64 matrix.
MxMatrix quantize_matrix(const RealMatrix& m, const FormatSpec& spec);

// Decode back to FP64 at the logical shape.
RealMatrix decode_matrix(const MxMatrix& m);

}  // namespace mxdp
