#include "mxdp/tensor_io.hpp"

#include <cstring>
#include <fstream>
#include <vector>

namespace mxdp {

namespace {

constexpr char kMagic[4] = {'M', 'X', 'T', '0'};

void put_u32(std::ostream& os, uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

void put_u64(std::ostream& os, uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 8);
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw IoError("tensor file truncated");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw IoError("tensor file truncated");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

struct Header {
  uint32_t format_id;
  uint64_t rows, cols;
};

void write_header(std::ostream& os, uint32_t format_id, uint64_t rows, uint64_t cols) {
  os.write(kMagic, 4);
  put_u32(os, format_id);
  put_u64(os, rows);
  put_u64(os, cols);
}

Header read_header(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError("not a tensor file (bad magic)");
  }
  Header h;
  h.format_id = get_u32(is);
  h.rows = get_u64(is);
  h.cols = get_u64(is);
  if (h.format_id > kFormatCount) throw IoError("tensor file: unknown format id");
  return h;
}

int block_code_bytes(const FormatSpec& spec) { return kBlockSize * spec.total_bits / 8; }

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot create file: " + path);
  return out;
}

}  // namespace

TensorKind peek_tensor_kind(const std::string& path) {
  std::ifstream in = open_in(path);
  const Header h = read_header(in);
  return h.format_id == 0 ? TensorKind::Real64 : TensorKind::Mx;
}

void write_real_matrix(std::ostream& os, const RealMatrix& m) {
  write_header(os, 0, static_cast<uint64_t>(m.rows), static_cast<uint64_t>(m.cols));
  for (double v : m.data) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(os, bits);
  }
  if (!os) throw IoError("write failed");
}

void write_real_matrix(const std::string& path, const RealMatrix& m) {
  std::ofstream out = open_out(path);
  write_real_matrix(out, m);
}

RealMatrix read_real_matrix(std::istream& is) {
  const Header h = read_header(is);
  if (h.format_id != 0) throw IoError("expected an FP64 tensor file");
  RealMatrix m(static_cast<int64_t>(h.rows), static_cast<int64_t>(h.cols));
  for (double& v : m.data) {
    const uint64_t bits = get_u64(is);
    std::memcpy(&v, &bits, 8);
  }
  return m;
}

RealMatrix read_real_matrix(const std::string& path) {
  std::ifstream in = open_in(path);
  return read_real_matrix(in);
}

void write_mx_matrix(std::ostream& os, const MxMatrix& m) {
  const FormatSpec& spec = format_spec(m.format);
  write_header(os, 1 + static_cast<uint32_t>(m.format), static_cast<uint64_t>(m.rows),
               static_cast<uint64_t>(m.cols));
  const int nbytes = block_code_bytes(spec);
  std::vector<unsigned char> buf(static_cast<size_t>(nbytes));
  for (const MxBlock& blk : m.blocks) {
    os.put(static_cast<char>(blk.shared_exponent));
    std::fill(buf.begin(), buf.end(), 0);
    for (int i = 0; i < kBlockSize; ++i) {
      const uint32_t code = blk.elements[static_cast<size_t>(i)] & spec.code_mask();
      const int bit = i * spec.total_bits;
      buf[static_cast<size_t>(bit / 8)] |= static_cast<unsigned char>(code << (bit % 8));
      if (bit % 8 + spec.total_bits > 8) {
        buf[static_cast<size_t>(bit / 8 + 1)] |=
            static_cast<unsigned char>(code >> (8 - bit % 8));
      }
    }
    os.write(reinterpret_cast<const char*>(buf.data()), nbytes);
  }
  if (!os) throw IoError("write failed");
}

void write_mx_matrix(const std::string& path, const MxMatrix& m) {
  std::ofstream out = open_out(path);
  write_mx_matrix(out, m);
}

MxMatrix read_mx_matrix(std::istream& is) {
  const Header h = read_header(is);
  if (h.format_id == 0) throw IoError("expected an MX tensor file, found FP64");
  MxMatrix m;
  m.format = static_cast<ElementFormat>(h.format_id - 1);
  m.rows = static_cast<int64_t>(h.rows);
  m.cols = static_cast<int64_t>(h.cols);
  m.blocks_per_row = (m.cols + kBlockSize - 1) / kBlockSize;
  m.blocks.resize(static_cast<size_t>(m.rows * m.blocks_per_row));
  const FormatSpec& spec = format_spec(m.format);
  const int nbytes = block_code_bytes(spec);
  std::vector<unsigned char> buf(static_cast<size_t>(nbytes));
  for (MxBlock& blk : m.blocks) {
    blk.format = m.format;
    const int shared = is.get();
    is.read(reinterpret_cast<char*>(buf.data()), nbytes);
    if (!is || shared < 0) throw IoError("tensor file truncated");
    blk.shared_exponent = static_cast<uint8_t>(shared);
    for (int i = 0; i < kBlockSize; ++i) {
      const int bit = i * spec.total_bits;
      uint32_t code = buf[static_cast<size_t>(bit / 8)] >> (bit % 8);
      if (bit % 8 + spec.total_bits > 8) {
        code |= static_cast<uint32_t>(buf[static_cast<size_t>(bit / 8 + 1)]) << (8 - bit % 8);
      }
      blk.elements[static_cast<size_t>(i)] = static_cast<uint8_t>(code & spec.code_mask());
    }
  }
  return m;
}

MxMatrix read_mx_matrix(const std::string& path) {
  std::ifstream in = open_in(path);
  return read_mx_matrix(in);
}

}  // namespace mxdp
