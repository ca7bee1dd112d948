#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "mxdp/mac_unit.hpp"
#include "oracle.hpp"

using namespace mxdp;

namespace {

MxBlock random_block(const FormatSpec& spec, std::mt19937_64& rng, int shared_lo = 120,
                     int shared_hi = 134) {
  MxBlock b;
  b.format = spec.id;
  b.shared_exponent =
      static_cast<uint8_t>(shared_lo + static_cast<int>(rng() % static_cast<uint64_t>(shared_hi - shared_lo + 1)));
  for (uint8_t& e : b.elements) {
    do {
      e = static_cast<uint8_t>(rng() & spec.code_mask());
    } while (!code_is_finite(spec, e));
  }
  return b;
}

// Per-cycle exact reference: every cycle's products plus the running value
// are summed exactly and rounded once, mirroring the stored S-bit register.
AccumulatorValue dot_block_oracle(const MxBlock& a, const MxBlock& b, PrecisionMode mode,
                                  int m) {
  const FormatSpec& spec = mode_format(mode);
  const int n = products_per_cycle(mode);
  AccumulatorValue acc;
  for (int off = 0; off < kBlockSize; off += n) {
    oracle::Exact sum{0, 0};
    for (int i = 0; i < n; ++i) {
      const DecodedElement ea = unpack_element(spec, a.elements[static_cast<size_t>(off + i)]);
      const DecodedElement eb = unpack_element(spec, b.elements[static_cast<size_t>(off + i)]);
      if (ea.sign == 0 || eb.sign == 0) continue;
      oracle::Exact p{oracle::cpp_int(ea.sign * eb.sign) * ea.significand * eb.significand,
                      ea.exponent + eb.exponent};
      sum = oracle::add(sum, p);
    }
    const int off2 = (a.shared_exponent - 127) + (b.shared_exponent - 127);
    const oracle::Exact total =
        oracle::add(oracle::scale_pow2(sum, off2), oracle::acc_value(acc, m));
    acc = oracle::round_rne(total, m);
  }
  return acc;
}

}  // namespace

TEST_CASE("mode geometry") {
  CHECK(products_per_cycle(PrecisionMode::MxInt8) == 1);
  CHECK(products_per_cycle(PrecisionMode::MxFp8E5m2) == 4);
  CHECK(products_per_cycle(PrecisionMode::MxFp8E4m3) == 4);
  CHECK(products_per_cycle(PrecisionMode::MxFp6E3m2) == 4);
  CHECK(products_per_cycle(PrecisionMode::MxFp6E2m3) == 4);
  CHECK(products_per_cycle(PrecisionMode::MxFp4E2m1) == 8);
  CHECK(cycles_per_block(PrecisionMode::MxInt8) == 32);
  CHECK(cycles_per_block(PrecisionMode::MxFp8E4m3) == 8);
  CHECK(cycles_per_block(PrecisionMode::MxFp4E2m1) == 4);
  CHECK(*find_mode("mxfp4_e2m1") == PrecisionMode::MxFp4E2m1);
  CHECK(find_mode("nope") == nullptr);
}

TEST_CASE("mac_cycle basics") {
  SUBCASE("all-zero operands leave a zero accumulator zero") {
    for (PrecisionMode mode : {PrecisionMode::MxInt8, PrecisionMode::MxFp8E4m3,
                               PrecisionMode::MxFp4E2m1}) {
      MacState s;
      s.mode = mode;
      s.tree = {TreeVariant::HybridIter2, 16, 127, 127};
      const int n = products_per_cycle(mode);
      std::vector<uint8_t> zeros(static_cast<size_t>(n), 0);
      const MacState next = mac_cycle(s, zeros, zeros, 127, 127);
      CHECK(next.accumulator.zero);
      CHECK(next.cycle == 1);
    }
  }
  SUBCASE("INT8 identity: 64 * 64 = 1.0") {
    MacState s;
    s.mode = PrecisionMode::MxInt8;
    s.tree = {TreeVariant::HybridIter2, 16, 127, 127};
    const uint8_t a = 64, b = 64;
    const MacState next = mac_cycle(s, {&a, 1}, {&b, 1}, 127, 127);
    CHECK(next.accumulator.to_double(16) == 1.0);
  }
  SUBCASE("MXFP4: eight unit pairs accumulate to 8.0") {
    MacState s;
    s.mode = PrecisionMode::MxFp4E2m1;
    s.tree = {TreeVariant::HybridIter2, 16, 127, 127};
    const FormatSpec& spec = format_spec(ElementFormat::Fp4E2m1);
    const uint8_t one = encode_element(spec, 1.0);
    std::vector<uint8_t> a(8, one), b(8, one);
    const MacState next = mac_cycle(s, a, b, 127, 127);
    CHECK(next.accumulator.to_double(16) == 8.0);
  }
  SUBCASE("element count must match the mode") {
    MacState s;
    s.mode = PrecisionMode::MxFp8E4m3;
    std::vector<uint8_t> three(3, 0);
    CHECK_THROWS_AS(mac_cycle(s, three, three, 127, 127), Error);
  }
  SUBCASE("E5M2 Inf/NaN is rejected with the element position") {
    MacState s;
    s.mode = PrecisionMode::MxFp8E5m2;
    s.tree = {TreeVariant::HybridIter2, 16, 127, 127};
    std::vector<uint8_t> a(4, 0x3c), b(4, 0x3c);
    b[2] = 0x7c;  // +inf
    try {
      mac_cycle(s, a, b, 127, 127);
      FAIL("expected InvalidOperandError");
    } catch (const InvalidOperandError& e) {
      CHECK(e.operand() == 'b');
      CHECK(e.index() == 2);
    }
  }
}

TEST_CASE("mode arithmetic identity: one pair rounds to the product") {
  std::mt19937_64 rng(42);
  for (const FormatSpec& spec : all_formats()) {
    const PrecisionMode mode = static_cast<PrecisionMode>(spec.id);
    const int n = products_per_cycle(mode);
    for (int trial = 0; trial < 2000; ++trial) {
      const int m = 2 + static_cast<int>(rng() % 22);
      uint8_t ca, cb;
      do {
        ca = static_cast<uint8_t>(rng() & spec.code_mask());
      } while (!code_is_finite(spec, ca));
      do {
        cb = static_cast<uint8_t>(rng() & spec.code_mask());
      } while (!code_is_finite(spec, cb));
      const uint8_t sa = static_cast<uint8_t>(107 + rng() % 40);
      const uint8_t sb = static_cast<uint8_t>(107 + rng() % 40);

      MacState s;
      s.mode = mode;
      s.tree = {TreeVariant::HybridIter2, m, 127, 127};
      std::vector<uint8_t> a(static_cast<size_t>(n), 0), b(static_cast<size_t>(n), 0);
      a[0] = ca;
      b[0] = cb;
      const MacState next = mac_cycle(s, a, b, sa, sb);

      const double x = decode_element(spec, ca), y = decode_element(spec, cb);
      const double want = x * y * std::ldexp(1.0, (sa - 127) + (sb - 127));
      CHECK(next.accumulator.to_double(m) ==
            AccumulatorValue::from_double(want, m).to_double(m));
    }
  }
}

TEST_CASE("mac_dot_block") {
  std::mt19937_64 rng(7);
  SUBCASE("orthogonal one-hot blocks give zero") {
    const FormatSpec& spec = format_spec(ElementFormat::Fp8E4m3);
    MxBlock a, b;
    a.format = b.format = spec.id;
    a.shared_exponent = b.shared_exponent = 127;
    a.elements[3] = encode_element(spec, 1.5);
    b.elements[17] = encode_element(spec, 2.0);
    MacState s;
    s.mode = PrecisionMode::MxFp8E4m3;
    s.tree = {TreeVariant::HybridIter2, 16, 127, 127};
    const MacState next = mac_dot_block(s, a, b);
    CHECK(next.accumulator.zero);
    CHECK(next.cycle == 8);
  }
  SUBCASE("all-ones blocks accumulate 32 at the shared scales") {
    for (const FormatSpec& spec : all_formats()) {
      MxBlock a, b;
      a.format = b.format = spec.id;
      a.shared_exponent = 129;  // 2^2
      b.shared_exponent = 126;  // 2^-1
      for (int i = 0; i < kBlockSize; ++i) {
        a.elements[static_cast<size_t>(i)] = encode_element(spec, 1.0);
        b.elements[static_cast<size_t>(i)] = encode_element(spec, 1.0);
      }
      MacState s;
      s.mode = static_cast<PrecisionMode>(spec.id);
      s.tree = {TreeVariant::HybridIter2, 16, 127, 127};
      const MacState next = mac_dot_block(s, a, b);
      CHECK(next.accumulator.to_double(16) == 32.0 * 4.0 * 0.5);
    }
  }
  SUBCASE("single blocks match the per-cycle round-once oracle in every mode") {
    for (const FormatSpec& spec : all_formats()) {
      const PrecisionMode mode = static_cast<PrecisionMode>(spec.id);
      for (int trial = 0; trial < 500; ++trial) {
        const MxBlock a = random_block(spec, rng);
        const MxBlock b = random_block(spec, rng);
        MacState s;
        s.mode = mode;
        s.tree = {TreeVariant::LongInteger, 23, 127, 127};
        const MacState next = mac_dot_block(s, a, b);
        const AccumulatorValue want = dot_block_oracle(a, b, mode, 23);
        CHECK(next.accumulator == want);
      }
    }
  }
  SUBCASE("bounded-spread modes also match the whole-dot round-once oracle") {
    // INT8, FP6 and FP4 product exponents span so little that every
    // intermediate 24-bit value stays exact; the whole block then rounds once.
    for (ElementFormat fmt : {ElementFormat::Int8, ElementFormat::Fp6E3m2,
                              ElementFormat::Fp6E2m3, ElementFormat::Fp4E2m1}) {
      const FormatSpec& spec = format_spec(fmt);
      const PrecisionMode mode = static_cast<PrecisionMode>(fmt);
      for (int trial = 0; trial < 500; ++trial) {
        const MxBlock a = random_block(spec, rng);
        const MxBlock b = random_block(spec, rng);
        MacState s;
        s.mode = mode;
        s.tree = {TreeVariant::LongInteger, 23, 127, 127};
        const MacState next = mac_dot_block(s, a, b);

        oracle::Exact total{0, 0};
        for (int i = 0; i < kBlockSize; ++i) {
          const DecodedElement ea = unpack_element(spec, a.elements[static_cast<size_t>(i)]);
          const DecodedElement eb = unpack_element(spec, b.elements[static_cast<size_t>(i)]);
          if (ea.sign == 0 || eb.sign == 0) continue;
          total = oracle::add(total, {oracle::cpp_int(ea.sign * eb.sign) * ea.significand *
                                          eb.significand,
                                      ea.exponent + eb.exponent});
        }
        const int off = (a.shared_exponent - 127) + (b.shared_exponent - 127);
        const AccumulatorValue want = oracle::round_rne(oracle::scale_pow2(total, off), 23);
        CHECK(next.accumulator == want);
      }
    }
  }
}

TEST_CASE("determinism of repeated call sequences") {
  std::mt19937_64 rng(77);
  const FormatSpec& spec = format_spec(ElementFormat::Fp8E5m2);
  std::vector<MxBlock> as, bs;
  for (int i = 0; i < 10; ++i) {
    as.push_back(random_block(spec, rng));
    bs.push_back(random_block(spec, rng));
  }
  auto run = [&] {
    MacState s;
    s.mode = PrecisionMode::MxFp8E5m2;
    s.tree = {TreeVariant::HybridIter2, 11, 127, 127};
    for (int i = 0; i < 10; ++i) s = mac_dot_block(s, as[static_cast<size_t>(i)], bs[static_cast<size_t>(i)]);
    return s;
  };
  CHECK(run() == run());
}

TEST_CASE("cross-variant consistency at full width") {
  std::mt19937_64 rng(555);
  const FormatSpec& spec = format_spec(ElementFormat::Fp8E4m3);
  const int trials = 3000;
  int lossless = 0;
  for (int trial = 0; trial < trials; ++trial) {
    const MxBlock a = random_block(spec, rng);
    const MxBlock b = random_block(spec, rng);
    MacState sl, sh;
    sl.mode = sh.mode = PrecisionMode::MxFp8E4m3;
    sl.tree = {TreeVariant::LongInteger, 23, 127, 127};
    sh.tree = {TreeVariant::HybridIter2, 23, 127, 127};
    // One cycle only: four element pairs.
    std::vector<uint8_t> a4(a.elements.begin(), a.elements.begin() + 4);
    std::vector<uint8_t> b4(b.elements.begin(), b.elements.begin() + 4);
    const AccumulatorValue vl = mac_cycle(sl, a4, b4, a.shared_exponent, b.shared_exponent).accumulator;
    const AccumulatorValue vh = mac_cycle(sh, a4, b4, a.shared_exponent, b.shared_exponent).accumulator;

    // Product exponent span decides whether the 26-bit alignment drops bits.
    int e_min = 1000, e_max = -1000;
    for (int i = 0; i < 4; ++i) {
      const DecodedElement ea = unpack_element(spec, a4[static_cast<size_t>(i)]);
      const DecodedElement eb = unpack_element(spec, b4[static_cast<size_t>(i)]);
      if (ea.sign == 0 || eb.sign == 0) continue;
      e_min = std::min(e_min, ea.exponent + eb.exponent);
      e_max = std::max(e_max, ea.exponent + eb.exponent);
    }
    if (e_max - e_min <= 16) {
      // No alignment loss: both variants round the exact sum once.
      CHECK(vl == vh);
      ++lossless;
    } else {
      // Lossy alignment stays within one accumulator-format ULP taken at the
      // product-sum anchor, plus the final rounding grain.
      const double dl = vl.to_double(23), dh = vh.to_double(23);
      const int off = (a.shared_exponent - 127) + (b.shared_exponent - 127);
      const double anchor_ulp = std::ldexp(1.0, e_max + 10 + off - 23);
      const double res_ulp = std::ldexp(1.0, (vl.zero ? 0 : vl.exponent) - 23);
      CHECK(std::fabs(dl - dh) <= anchor_ulp + res_ulp);
    }
  }
  CHECK(lossless > trials / 2);  // the generator covers both regimes
}

TEST_CASE("quantize_group") {
  const FormatSpec& spec = format_spec(ElementFormat::Fp8E4m3);
  SUBCASE("64 zeros give two all-zero blocks") {
    std::array<AccumulatorValue, 64> outs{};
    const auto blocks = quantize_group(outs, spec, 16);
    for (const MxBlock& b : blocks) {
      CHECK(b.shared_exponent == 0);
      for (uint8_t e : b.elements) CHECK(e == 0);
    }
  }
  SUBCASE("64 copies of 1024 share scale 2^2") {
    std::array<AccumulatorValue, 64> outs;
    outs.fill(AccumulatorValue::from_double(1024.0, 16));
    const auto blocks = quantize_group(outs, spec, 16);
    for (const MxBlock& b : blocks) {
      CHECK(b.shared_exponent == kScaleBias + 2);
      CHECK(decode_element(spec, b.elements[0]) == 256.0);
    }
  }
  SUBCASE("the maximum fixes the group scale for everyone") {
    std::array<AccumulatorValue, 64> outs;
    outs.fill(AccumulatorValue::from_double(1.0, 16));
    outs[0] = AccumulatorValue::from_double(4096.0, 16);  // 2^12
    const auto blocks = quantize_group(outs, spec, 16);
    CHECK(blocks[0].shared_exponent == kScaleBias + 4);  // floor(log2 4096) - 8
    CHECK(blocks[1].shared_exponent == blocks[0].shared_exponent);
    // 1.0 / 2^4 = 0.0625 encodes exactly in E4M3.
    CHECK(decode_element(spec, blocks[0].elements[1]) * std::ldexp(1.0, 4) == 1.0);
  }
  SUBCASE("saturated inputs are refused") {
    std::array<AccumulatorValue, 64> outs{};
    outs[13].zero = false;
    outs[13].saturated = true;
    CHECK_THROWS_AS(quantize_group(outs, spec, 16), SaturationError);
  }
}

TEST_CASE("mx_gemm_raw against the FP64 oracle at full width") {
  std::mt19937_64 rng(2025);
  const FormatSpec& spec = format_spec(ElementFormat::Fp8E4m3);
  RealMatrix a(16, 32), bt(8, 32);
  std::normal_distribution<double> dist(0.0, 4.0);
  for (double& v : a.data) v = dist(rng);
  for (double& v : bt.data) v = dist(rng);
  const MxMatrix qa = quantize_matrix(a, spec);
  const MxMatrix qbt = quantize_matrix(bt, spec);
  const RealMatrix da = decode_matrix(qa);
  const RealMatrix dbt = decode_matrix(qbt);

  const AccMatrix out = mx_gemm_raw(qa, qbt, PrecisionMode::MxFp8E4m3,
                                    {TreeVariant::LongInteger, 23, 127, 127});
  CHECK(out.rows == 16);
  CHECK(out.cols == 8);
  for (int64_t i = 0; i < 16; ++i) {
    for (int64_t j = 0; j < 8; ++j) {
      double ref = 0.0;
      for (int64_t k = 0; k < 32; ++k) ref += da.at(i, k) * dbt.at(j, k);
      const double got = out.at(i, j).to_double(23);
      const double tol = std::fabs(ref) * 1e-6 + 1e-30;
      CHECK(std::fabs(got - ref) <= std::max(tol, std::fabs(ref) * 2e-7));
    }
  }
}

TEST_CASE("quantize_output_tiles groups 8x8 tiles into block pairs") {
  std::mt19937_64 rng(31);
  AccMatrix acc;
  acc.rows = 16;
  acc.cols = 8;
  acc.mantissa_bits = 16;
  acc.values.resize(16 * 8);
  std::normal_distribution<double> dist(0.0, 100.0);
  for (AccumulatorValue& v : acc.values) v = AccumulatorValue::from_double(dist(rng), 16);
  const FormatSpec& spec = format_spec(ElementFormat::Fp6E2m3);
  const QuantizedTiles tiles = quantize_output_tiles(acc, spec);
  CHECK(tiles.blocks.size() == 4);  // two 8x8 tiles, two blocks each
  // Recompute the first tile by hand.
  std::array<AccumulatorValue, 64> group;
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 8; ++c) group[static_cast<size_t>(r * 8 + c)] = acc.at(r, c);
  }
  const auto blocks = quantize_group(group, spec, 16);
  CHECK(tiles.blocks[0] == blocks[0]);
  CHECK(tiles.blocks[1] == blocks[1]);
}
