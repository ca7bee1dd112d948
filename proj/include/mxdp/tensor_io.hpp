#pragma once

#include <iosfwd>
#include <string>

#include "mxdp/matrix.hpp"

namespace mxdp {

// Binary tensor files, little endian throughout:
//   bytes 0..3   magic "MXT0"
//   bytes 4..7   format id: 0 = raw FP64, 1 + ElementFormat for MX payloads
//   bytes 8..15  rows (u64)
//   bytes 16..23 cols (u64)
// FP64 payload: rows*cols doubles, row major.
// MX payload: blocks in row-major order (ceil(cols/32) per row), each block
// one shared-exponent byte followed by the 32 element codes packed LSB first
// (32/32/24/16 bytes for 8/8/6/4-bit elements).

enum class TensorKind { Real64, Mx };

TensorKind peek_tensor_kind(const std::string& path);

void write_real_matrix(std::ostream& os, const RealMatrix& m);
void write_real_matrix(const std::string& path, const RealMatrix& m);
RealMatrix read_real_matrix(std::istream& is);
RealMatrix read_real_matrix(const std::string& path);

void write_mx_matrix(std::ostream& os, const MxMatrix& m);
void write_mx_matrix(const std::string& path, const MxMatrix& m);
MxMatrix read_mx_matrix(std::istream& is);
MxMatrix read_mx_matrix(const std::string& path);

}  // namespace mxdp
