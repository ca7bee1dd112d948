#include "mxdp/matrix.hpp"

#include <array>

namespace mxdp {

RealMatrix gemm_fp64(const RealMatrix& a, const RealMatrix& b) {
  if (a.cols != b.rows) throw DimensionError("gemm_fp64: inner dimensions disagree");
  RealMatrix c(a.rows, b.cols);
  for (int64_t i = 0; i < a.rows; ++i) {
    for (int64_t j = 0; j < b.cols; ++j) {
      double acc = 0.0;
      for (int64_t k = 0; k < a.cols; ++k) {
        acc += a.at(i, k) * b.at(k, j);
      }
      c.at(i, j) = acc;
    }
  }
  return c;
}

MxMatrix quantize_matrix(const RealMatrix& m, const FormatSpec& spec) {
  MxMatrix out;
  out.format = spec.id;
  out.rows = m.rows;
  out.cols = m.cols;
  out.blocks_per_row = (m.cols + kBlockSize - 1) / kBlockSize;
  out.blocks.resize(static_cast<size_t>(m.rows * out.blocks_per_row));
  std::array<double, kBlockSize> chunk;
  for (int64_t r = 0; r < m.rows; ++r) {
    for (int64_t b = 0; b < out.blocks_per_row; ++b) {
      chunk.fill(0.0);
      const int64_t base = b * kBlockSize;
      const int64_t n = std::min<int64_t>(kBlockSize, m.cols - base);
      for (int64_t k = 0; k < n; ++k) chunk[static_cast<size_t>(k)] = m.at(r, base + k);
      out.block(r, b) = quantize_to_mx(chunk, spec);
    }
  }
  return out;
}

RealMatrix decode_matrix(const MxMatrix& m) {
  RealMatrix out(m.rows, m.cols);
  for (int64_t r = 0; r < m.rows; ++r) {
    for (int64_t b = 0; b < m.blocks_per_row; ++b) {
      const std::array<double, kBlockSize> vals = decode_block(m.block(r, b));
      const int64_t base = b * kBlockSize;
      const int64_t n = std::min<int64_t>(kBlockSize, m.cols - base);
      for (int64_t k = 0; k < n; ++k) out.at(r, base + k) = vals[static_cast<size_t>(k)];
    }
  }
  return out;
}

}  // namespace mxdp
