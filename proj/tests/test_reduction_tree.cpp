#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "mxdp/reduction_tree.hpp"
#include "oracle.hpp"

using namespace mxdp;

namespace {

struct TermGen {
  std::mt19937_64 rng;
  explicit TermGen(uint64_t seed) : rng(seed) {}

  // Terms with a bounded exponent span (lossless in the L2 window at S=24).
  std::array<ProductTerm, 4> in_window(int span, int base_lo = -40, int base_hi = 20) {
    std::uniform_int_distribution<int> base(base_lo, base_hi);
    const int e0 = base(rng);
    std::uniform_int_distribution<int> de(0, span);
    std::uniform_int_distribution<uint32_t> sig(0, 1023);
    std::array<ProductTerm, 4> t{};
    for (ProductTerm& x : t) {
      const uint32_t s = sig(rng);
      x = ProductTerm{static_cast<int8_t>(s == 0 ? 0 : (rng() & 1 ? 1 : -1)), s,
                      e0 + de(rng)};
    }
    return t;
  }

  AccumulatorValue acc(int m, int exp_lo, int exp_hi) {
    AccumulatorValue a;
    a.zero = false;
    a.sign = rng() & 1 ? 1 : -1;
    a.mantissa = static_cast<uint32_t>(rng() & ((1u << m) - 1));
    a.exponent = static_cast<int32_t>(exp_lo + static_cast<int>(rng() % static_cast<uint64_t>(exp_hi - exp_lo + 1)));
    return a;
  }
};

ProductTerm make_term(int sign, uint32_t sig, int exp) {
  return ProductTerm{static_cast<int8_t>(sign), sig, exp};
}

bool same_value(const AccumulatorValue& a, const AccumulatorValue& b) {
  return a.zero == b.zero && a.sign == b.sign && a.exponent == b.exponent &&
         a.mantissa == b.mantissa;
}

}  // namespace

TEST_CASE("cost report width anchors") {
  // At S = 24: L2 extension 26, product-sum 28, iter2 normalizer 53,
  // iter1 normalizer 77.
  const CostReport h2 = cost_report({TreeVariant::HybridIter2, 23, 127, 127});
  CHECK(h2.l2_align_width == 26);
  CHECK(h2.l2_adder_width == 28);
  CHECK(h2.acc_adder_width == 53);
  CHECK(h2.norm_input_width == 53);
  const CostReport h1 = cost_report({TreeVariant::HybridIter1, 23, 127, 127});
  CHECK(h1.norm_input_width == 77);
  CHECK(h1.acc_adder_width == 53);
  CHECK(h1.l2_align_width == 26);
  // Long-integer variant reports the fixed 67-bit integers and the 95-bit
  // accumulation window of the design it models.
  const CostReport li = cost_report({TreeVariant::LongInteger, 23, 127, 127});
  CHECK(li.l2_align_width == 67);
  CHECK(li.acc_adder_width == 95);
  CHECK(li.norm_input_width == 95);
  // At M = 16 the iter2 normalizer shrinks two bits per removed mantissa bit.
  CHECK(cost_report({TreeVariant::HybridIter2, 16, 127, 127}).norm_input_width == 39);
  CHECK(cost_report({TreeVariant::HybridIter2, 16, 127, 127}).l2_align_width == 19);
}

TEST_CASE("mantissa width bounds are enforced") {
  std::array<ProductTerm, 4> t{};
  AccumulatorValue acc;
  CHECK_THROWS_AS(tree_hybrid(t, acc, {TreeVariant::HybridIter2, 1, 127, 127}), Error);
  CHECK_THROWS_AS(tree_hybrid(t, acc, {TreeVariant::HybridIter2, 24, 127, 127}), Error);
}

TEST_CASE("l1_reduce_fp4") {
  SUBCASE("eight zero products") {
    std::array<ProductTerm, 8> zeros{};
    const ProductTerm r = l1_reduce_fp4(zeros);
    CHECK(r.sign == 0);
    CHECK(r.significand == 0);
  }
  SUBCASE("single product passes through") {
    std::array<ProductTerm, 8> p{};
    p[3] = make_term(1, 3, -1);  // 1.1 * 2^0 as integer 3 * 2^-1
    const ProductTerm r = l1_reduce_fp4(p);
    CHECK(r.sign == 1);
    CHECK(r.significand == 0b11);
    CHECK(r.exponent == -1);
  }
  SUBCASE("eight copies of 1.0 * 2^7 sum exactly") {
    std::array<ProductTerm, 8> p;
    p.fill(make_term(1, 4, 5));  // 1.00 * 2^7 = 4 * 2^5
    const ProductTerm r = l1_reduce_fp4(p);
    // 8 * 2^7 = 2^10 exactly.
    CHECK(r.sign == 1);
    CHECK(r.significand == 1);
    CHECK(r.exponent == 10);
  }
  SUBCASE("random sums match the big-integer oracle and fit ten bits") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 20000; ++trial) {
      std::array<ProductTerm, 8> p{};
      oracle::cpp_int exact = 0;
      for (ProductTerm& x : p) {
        // Significands reachable from 2-bit by 2-bit multiplies.
        static constexpr uint32_t kSigs[] = {0, 1, 2, 3, 4, 6, 9};
        const uint32_t s = kSigs[rng() % 7];
        const int e = static_cast<int>(rng() % 5);  // genuine E2M1 span
        x = make_term(s == 0 ? 0 : (rng() & 1 ? 1 : -1), s, e);
        exact += oracle::cpp_int(static_cast<int>(x.sign)) * s * (oracle::cpp_int(1) << e);
      }
      const ProductTerm r = l1_reduce_fp4(p);
      oracle::cpp_int got = oracle::cpp_int(static_cast<int>(r.sign)) * r.significand;
      got <<= std::max(0, r.exponent);
      if (r.exponent < 0) {
        // Negative exponents only arise from sub-integer grids; rescale.
        exact <<= -r.exponent;
      }
      CHECK(got == exact);
      CHECK(r.significand < 1024);
    }
  }
}

TEST_CASE("fp32-addition tree") {
  const TreeConfig cfg{TreeVariant::Fp32Addition, 23, 127, 127};
  SUBCASE("all zero") {
    std::array<ProductTerm, 4> t{};
    const AccumulatorValue r = tree_fp32_addition(t, AccumulatorValue{}, cfg);
    CHECK(r.zero);
  }
  SUBCASE("identity: one unit term, unit scales, zero accumulator") {
    std::array<ProductTerm, 4> t{};
    t[0] = make_term(1, 1, 0);
    const AccumulatorValue r = tree_fp32_addition(t, AccumulatorValue{}, cfg);
    CHECK_FALSE(r.zero);
    CHECK(r.sign == 1);
    CHECK(r.exponent == 0);
    CHECK(r.mantissa == 0);
    CHECK(r.to_double(23) == 1.0);
  }
  SUBCASE("random in-window terms match the staged-rounding oracle") {
    TermGen gen(1234);
    for (int trial = 0; trial < 50000; ++trial) {
      const auto terms = gen.in_window(16);
      AccumulatorValue acc;
      if (trial % 3 != 0) acc = gen.acc(23, -60, 60);
      TreeConfig c = cfg;
      c.shared_exponent_a = static_cast<uint8_t>(107 + gen.rng() % 40);
      c.shared_exponent_b = static_cast<uint8_t>(107 + gen.rng() % 40);
      const AccumulatorValue got = tree_fp32_addition(terms, acc, c);
      const AccumulatorValue want = oracle::round_staged(terms, acc, c);
      CHECK(same_value(got, want));
      if (!same_value(got, want)) return;
    }
  }
}

TEST_CASE("long-integer tree") {
  const TreeConfig cfg{TreeVariant::LongInteger, 23, 127, 127};
  SUBCASE("exact cancellation is lossless") {
    std::array<ProductTerm, 4> t = {make_term(1, 513, 3), make_term(1, 513, 3),
                                    make_term(-1, 513, 3), make_term(-1, 513, 3)};
    const AccumulatorValue acc = AccumulatorValue::from_double(5.0, 23);
    const AccumulatorValue r = tree_long_integer(t, acc, cfg);
    CHECK(r.to_double(23) == 5.0);
    CHECK(same_value(r, acc));
  }
  SUBCASE("random in-window cases equal round-once of the exact sum") {
    TermGen gen(777);
    for (int trial = 0; trial < 50000; ++trial) {
      const auto terms = gen.in_window(40);
      AccumulatorValue acc;
      if (trial % 4 != 0) acc = gen.acc(23, -80, 80);
      TreeConfig c = cfg;
      c.shared_exponent_a = static_cast<uint8_t>(97 + gen.rng() % 60);
      c.shared_exponent_b = static_cast<uint8_t>(97 + gen.rng() % 60);
      const AccumulatorValue got = tree_long_integer(terms, acc, c);
      const AccumulatorValue want = oracle::round_once(terms, acc, c);
      CHECK(same_value(got, want));
      if (!same_value(got, want)) return;
    }
  }
  SUBCASE("reduced mantissa widths also round once") {
    TermGen gen(778);
    for (int trial = 0; trial < 20000; ++trial) {
      const int m = 2 + static_cast<int>(gen.rng() % 22);
      const auto terms = gen.in_window(30);
      AccumulatorValue acc;
      if (trial % 4 != 0) acc = gen.acc(m, -60, 60);
      const TreeConfig c{TreeVariant::LongInteger, m, 127, 127};
      const AccumulatorValue got = tree_long_integer(terms, acc, c);
      const AccumulatorValue want = oracle::round_once(terms, acc, c);
      CHECK(same_value(got, want));
      if (!same_value(got, want)) return;
    }
  }
}

TEST_CASE("hybrid tree") {
  SUBCASE("all zero") {
    std::array<ProductTerm, 4> t{};
    const AccumulatorValue r =
        tree_hybrid(t, AccumulatorValue{}, {TreeVariant::HybridIter2, 23, 127, 127});
    CHECK(r.zero);
  }
  SUBCASE("large stored value dominates a unit product-sum") {
    std::array<ProductTerm, 4> t{};
    t[0] = make_term(1, 1, 0);
    AccumulatorValue acc;
    acc.zero = false;
    acc.sign = 1;
    acc.exponent = 40;
    acc.mantissa = 0;
    for (TreeVariant v : {TreeVariant::HybridIter1, TreeVariant::HybridIter2}) {
      const AccumulatorValue r = tree_hybrid(t, acc, {v, 23, 127, 127});
      // 2^40 + 1 rounds back to 2^40 with a 24-bit significand.
      CHECK(r.to_double(23) == std::ldexp(1.0, 40));
    }
  }
  SUBCASE("in-window cases equal round-once of the exact sum") {
    TermGen gen(555);
    for (int trial = 0; trial < 50000; ++trial) {
      const int m = 23;
      const auto terms = gen.in_window(10);
      AccumulatorValue acc;
      if (trial % 4 != 0) acc = gen.acc(m, -50, 10);
      const TreeConfig c{TreeVariant::HybridIter2, m, 127, 127};
      const AccumulatorValue got = tree_hybrid(terms, acc, c);
      const AccumulatorValue want = oracle::round_once(terms, acc, c);
      CHECK(same_value(got, want));
      if (!same_value(got, want)) return;
    }
  }
}

TEST_CASE("hybrid iteration equivalence under stress") {
  // Unconstrained fuzz: wide exponents, saturating scales, degenerate inputs.
  TermGen gen(31337);
  std::uniform_int_distribution<int> wild_exp(-300, 300);
  for (int trial = 0; trial < 200000; ++trial) {
    const int m = 2 + static_cast<int>(gen.rng() % 22);
    std::array<ProductTerm, 4> terms{};
    for (ProductTerm& t : terms) {
      const uint32_t s = static_cast<uint32_t>(gen.rng() % 1024);
      t = make_term(s == 0 ? 0 : (gen.rng() & 1 ? 1 : -1), s,
                    wild_exp(gen.rng) / (trial % 2 ? 5 : 1));
    }
    AccumulatorValue acc;
    if (trial % 5 != 0) acc = gen.acc(m, -2000, 2000);
    TreeConfig c1{TreeVariant::HybridIter1, m,
                  static_cast<uint8_t>(gen.rng() % 255),
                  static_cast<uint8_t>(gen.rng() % 255)};
    TreeConfig c2 = c1;
    c2.variant = TreeVariant::HybridIter2;
    const AccumulatorValue r1 = tree_hybrid(terms, acc, c1);
    const AccumulatorValue r2 = tree_hybrid(terms, acc, c2);
    CHECK(r1 == r2);
    if (!(r1 == r2)) {
      MESSAGE("m=", m, " acc.exp=", acc.exponent);
      return;
    }
  }
}

TEST_CASE("permutation invariance of the four input terms") {
  TermGen gen(4242);
  for (int trial = 0; trial < 2000; ++trial) {
    const int m = 2 + static_cast<int>(gen.rng() % 22);
    auto terms = gen.in_window(20);
    AccumulatorValue acc = gen.acc(m, -40, 40);
    for (TreeVariant v : {TreeVariant::Fp32Addition, TreeVariant::LongInteger,
                          TreeVariant::HybridIter1, TreeVariant::HybridIter2}) {
      const TreeConfig c{v, m, 130, 120};
      const AccumulatorValue base = tree_reduce(terms, acc, c);
      auto shuffled = terms;
      std::shuffle(shuffled.begin(), shuffled.end(), gen.rng);
      CHECK(tree_reduce(shuffled, acc, c) == base);
    }
  }
}

TEST_CASE("power-of-two scale equivariance") {
  TermGen gen(911);
  for (int trial = 0; trial < 2000; ++trial) {
    const int m = 2 + static_cast<int>(gen.rng() % 22);
    const auto terms = gen.in_window(12);
    const TreeConfig base{TreeVariant::HybridIter2, m, 127, 127};
    const AccumulatorValue r0 = tree_hybrid(terms, AccumulatorValue{}, base);
    for (int k : {-5, -1, 1, 9}) {
      // One scale code moved by k multiplies the result by 2^k...
      TreeConfig c = base;
      c.shared_exponent_a = static_cast<uint8_t>(127 + k);
      const AccumulatorValue r1 = tree_hybrid(terms, AccumulatorValue{}, c);
      if (r0.zero) {
        CHECK(r1.zero);
        continue;
      }
      CHECK(r1.mantissa == r0.mantissa);
      CHECK(r1.exponent == r0.exponent + k);
      // ...and both moved by k multiply it by 2^(2k).
      c.shared_exponent_b = static_cast<uint8_t>(127 + k);
      const AccumulatorValue r2 = tree_hybrid(terms, AccumulatorValue{}, c);
      CHECK(r2.mantissa == r0.mantissa);
      CHECK(r2.exponent == r0.exponent + 2 * k);
    }
  }
}

TEST_CASE("accuracy ordering across the variants") {
  // The long-integer tree rounds once over the widest window, the hybrid
  // rounds once over its bounded window, the FP32-addition tree rounds twice.
  TermGen gen(2024);
  double err_long = 0, err_hybrid = 0, err_fp32 = 0;
  double ulp_sum = 0;
  const int m = 7;  // narrow accumulator makes the ordering visible
  const int trials = 100000;
  for (int trial = 0; trial < trials; ++trial) {
    const auto terms = gen.in_window(14);
    const AccumulatorValue acc = gen.acc(m, -20, 20);
    // Exact big-integer sum as the reference value.
    const oracle::Exact ex = oracle::add(oracle::sum_terms(terms), oracle::acc_value(acc, m));
    const double ref = ex.is_zero() ? 0.0 : static_cast<double>(ex.num) * std::ldexp(1.0, ex.exp);
    TreeConfig c{TreeVariant::LongInteger, m, 127, 127};
    err_long += std::fabs(tree_long_integer(terms, acc, c).to_double(m) - ref);
    c.variant = TreeVariant::HybridIter2;
    err_hybrid += std::fabs(tree_hybrid(terms, acc, c).to_double(m) - ref);
    c.variant = TreeVariant::Fp32Addition;
    const AccumulatorValue f = tree_fp32_addition(terms, acc, c);
    err_fp32 += std::fabs(f.to_double(m) - ref);
    // One ULP of the accumulator format at the result's scale.
    ulp_sum += std::ldexp(1.0, (f.zero ? 0 : f.exponent) - m);
  }
  CHECK(err_long <= err_hybrid + 1e-12);
  CHECK(err_hybrid <= err_fp32 + ulp_sum);
}

TEST_CASE("exponent saturation raises the flag instead of wrapping") {
  std::array<ProductTerm, 4> t{};
  t[0] = make_term(1, 512, 40);
  AccumulatorValue acc;
  SUBCASE("overflow past the exponent ceiling") {
    std::array<ProductTerm, 4> wide{};
    wide[0] = make_term(1, 1023, 2040);  // msb lands at 2049 > 2047
    for (TreeVariant v : {TreeVariant::Fp32Addition, TreeVariant::LongInteger,
                          TreeVariant::HybridIter1, TreeVariant::HybridIter2}) {
      const AccumulatorValue r = tree_reduce(wide, acc, {v, 23, 127, 127});
      CHECK(r.saturated);
      CHECK(r.exponent == kAccExpMax);
    }
  }
  SUBCASE("underflow past the exponent floor flushes to zero with the flag") {
    std::array<ProductTerm, 4> tiny{};
    tiny[0] = make_term(1, 1, -2200);
    const AccumulatorValue r =
        tree_hybrid(tiny, acc, {TreeVariant::HybridIter2, 23, 127, 127});
    CHECK(r.saturated);
    CHECK(r.zero);
  }
  SUBCASE("saturation flag propagates through later cycles") {
    AccumulatorValue sat;
    sat.zero = false;
    sat.sign = 1;
    sat.exponent = 10;
    sat.mantissa = 0;
    sat.saturated = true;
    for (TreeVariant v : {TreeVariant::Fp32Addition, TreeVariant::LongInteger,
                          TreeVariant::HybridIter1, TreeVariant::HybridIter2}) {
      const AccumulatorValue r = tree_reduce(t, sat, {v, 23, 127, 127});
      CHECK(r.saturated);
    }
  }
}
