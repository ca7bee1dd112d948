#pragma once

// Exact-arithmetic reference for the reduction trees, independent of the
// implementation path: values are carried as arbitrary-precision integers
// times a power of two and rounded once (or in explicit stages) with a
// straightforward round-to-nearest-even.

#include <boost/multiprecision/cpp_int.hpp>

#include "mxdp/reduction_tree.hpp"

namespace oracle {

using boost::multiprecision::cpp_int;

struct Exact {
  cpp_int num;  // value = num * 2^exp
  int exp = 0;

  bool is_zero() const { return num == 0; }
};

inline Exact term_value(const mxdp::ProductTerm& t) {
  return {cpp_int(static_cast<int>(t.sign)) * t.significand, t.exponent};
}

inline Exact acc_value(const mxdp::AccumulatorValue& a, int m) {
  if (a.zero) return {0, 0};
  const cpp_int sig = (cpp_int(1) << m) | a.mantissa;
  return {cpp_int(static_cast<int>(a.sign)) * sig, a.exponent - m};
}

inline Exact add(const Exact& a, const Exact& b) {
  if (a.is_zero()) return b;
  if (b.is_zero()) return a;
  const int e = std::min(a.exp, b.exp);
  return {(a.num << (a.exp - e)) + (b.num << (b.exp - e)), e};
}

inline Exact scale_pow2(const Exact& a, int k) { return {a.num, a.exp + k}; }

inline Exact sum_terms(std::span<const mxdp::ProductTerm, 4> terms) {
  Exact s{0, 0};
  for (const mxdp::ProductTerm& t : terms) s = add(s, term_value(t));
  return s;
}

// Round-to-nearest-even to an (m+1)-bit significand.
inline mxdp::AccumulatorValue round_rne(const Exact& v, int m) {
  mxdp::AccumulatorValue r;
  if (v.is_zero()) return r;
  cpp_int mag = v.num < 0 ? cpp_int(-v.num) : v.num;
  const int sign = v.num < 0 ? -1 : 1;
  const int bits = static_cast<int>(boost::multiprecision::msb(mag)) + 1;
  const int drop = bits - 1 - m;
  int exp = v.exp + bits - 1;
  cpp_int kept;
  if (drop <= 0) {
    kept = mag << (-drop);
  } else {
    kept = mag >> drop;
    const bool guard = boost::multiprecision::bit_test(mag, static_cast<unsigned>(drop - 1));
    const cpp_int below = mag & ((cpp_int(1) << (drop - 1)) - 1);
    if (guard && (below != 0 || boost::multiprecision::bit_test(kept, 0))) {
      ++kept;
      if (kept == (cpp_int(1) << (m + 1))) {
        kept >>= 1;
        ++exp;
      }
    }
  }
  r.zero = false;
  r.sign = static_cast<int8_t>(sign);
  r.exponent = exp;
  r.mantissa = static_cast<uint32_t>(kept - (cpp_int(1) << m));
  return r;
}

// Single rounding of the exact product-plus-accumulator sum.
inline mxdp::AccumulatorValue round_once(std::span<const mxdp::ProductTerm, 4> terms,
                                         const mxdp::AccumulatorValue& acc,
                                         const mxdp::TreeConfig& cfg) {
  const int off = (cfg.shared_exponent_a - 127) + (cfg.shared_exponent_b - 127);
  const Exact total = add(scale_pow2(sum_terms(terms), off),
                          acc_value(acc, cfg.acc_mantissa_bits));
  return round_rne(total, cfg.acc_mantissa_bits);
}

// Staged reference for the FP32-addition variant: round the product-sum,
// apply the shared exponents, then round the accumulate.
inline mxdp::AccumulatorValue round_staged(std::span<const mxdp::ProductTerm, 4> terms,
                                           const mxdp::AccumulatorValue& acc,
                                           const mxdp::TreeConfig& cfg) {
  const int m = cfg.acc_mantissa_bits;
  const int off = (cfg.shared_exponent_a - 127) + (cfg.shared_exponent_b - 127);
  const mxdp::AccumulatorValue ps = round_rne(sum_terms(terms), m);
  const Exact total = add(scale_pow2(acc_value(ps, m), off), acc_value(acc, m));
  return round_rne(total, m);
}

}  // namespace oracle
