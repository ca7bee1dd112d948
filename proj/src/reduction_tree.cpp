#include "mxdp/reduction_tree.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>

// =============================================================================
// Bit-accurate models of the three reduction-tree microarchitectures.
//
// Shared conventions (the paper leaves rounding unstated; see README):
//  * Every normalization rounds to nearest, ties to even, with a sticky bit.
//  * Alignment shifts discard bits into the sticky; a discarded tail from a
//    single signed operand is applied directionally (a tail opposing the sum
//    lowers the pre-round magnitude by one grid unit), which keeps the final
//    rounding identical to rounding the exact sum whenever only one operand
//    sheds bits.
//  * Zero-significand products are gated out of the exponent comparison.
//  * A window sum that cancels to exactly zero flushes to zero even when the
//    sticky is set; the normalizer has no bits left to work with.
// =============================================================================

namespace mxdp {

namespace {

using u128 = unsigned __int128;
using i128 = __int128;

constexpr int kTermSigBits = 10;  // nominal significand field entering L2

int bitlen(u128 x) {
  if (x == 0) return 0;
  const uint64_t hi = static_cast<uint64_t>(x >> 64);
  if (hi != 0) return 128 - __builtin_clzll(hi);
  return 64 - __builtin_clzll(static_cast<uint64_t>(x));
}

// Right shift collecting dropped bits.
u128 shr_sticky(u128 v, int n, bool* lost) {
  if (n <= 0) return v;
  if (n >= 128) {
    *lost |= v != 0;
    return 0;
  }
  *lost |= (v & ((u128(1) << n) - 1)) != 0;
  return v >> n;
}

int significand_width(const TreeConfig& cfg) {
  if (cfg.acc_mantissa_bits < 2 || cfg.acc_mantissa_bits > 23) {
    throw Error("tree: accumulator mantissa width must be in 2..23");
  }
  return cfg.acc_mantissa_bits + 1;
}

int shared_offset(const TreeConfig& cfg) {
  return (cfg.shared_exponent_a - 127) + (cfg.shared_exponent_b - 127);
}

AccumulatorValue make_zero() { return AccumulatorValue{}; }

AccumulatorValue saturate(int sign, bool high, int m) {
  AccumulatorValue r;
  r.zero = false;
  r.saturated = true;
  r.sign = static_cast<int8_t>(sign < 0 ? -1 : 1);
  if (high) {
    r.exponent = kAccExpMax;
    r.mantissa = (1u << m) - 1;
  } else {
    // Underflow past the exponent floor flushes to zero, flag kept.
    r.zero = true;
    r.sign = 1;
    r.exponent = 0;
    r.mantissa = 0;
  }
  return r;
}

// Normalize + round a window magnitude into the accumulator format.
// grid is the weight of the magnitude LSB. tail_sign, when nonzero, is the
// sign of a discarded sub-grid tail from one operand; sign is the sign of the
// window sum itself. exact_tail selects reattachment semantics (the tail is
// re-gridded below the rounding point, so the result equals rounding the
// exact sum); otherwise the window truncates and only the sticky survives,
// as the adder never saw the dropped bits.
AccumulatorValue round_mag(int sign, u128 mag, int grid, bool sticky, int tail_sign,
                           bool exact_tail, int m) {
  if (mag == 0) return make_zero();
  if (tail_sign != 0) {
    const int msb0 = bitlen(mag) - 1;
    if (msb0 > m || exact_tail) {
      // Re-grid far enough that the one-unit correction lands strictly below
      // the rounding point; the guard/sticky logic then reabsorbs it.
      const int ext = msb0 > m ? 3 : (m - msb0) + 3;
      mag <<= ext;
      grid -= ext;
      if (tail_sign != sign) mag -= 1;
    }
    sticky = true;
  }
  const int msb = bitlen(mag) - 1;
  const int drop = msb - m;
  int exp = grid + msb;
  uint64_t kept;
  if (drop <= 0) {
    kept = static_cast<uint64_t>(mag) << (-drop);
    // No guard bit exists; RNE keeps the truncated value regardless of sticky.
  } else {
    kept = static_cast<uint64_t>(mag >> drop);
    const bool guard = ((mag >> (drop - 1)) & 1) != 0;
    bool low = sticky;
    if (drop >= 2) low = low || (mag & ((u128(1) << (drop - 1)) - 1)) != 0;
    if (guard && (low || (kept & 1))) {
      ++kept;
      if (kept == (2ull << m)) {
        kept >>= 1;
        ++exp;
      }
    }
  }
  if (exp > kAccExpMax) return saturate(sign, true, m);
  if (exp < kAccExpMin) return saturate(sign, false, m);
  AccumulatorValue r;
  r.zero = false;
  r.sign = static_cast<int8_t>(sign < 0 ? -1 : 1);
  r.exponent = exp;
  r.mantissa = static_cast<uint32_t>(kept - (1ull << m));
  return r;
}

struct WindowSum {
  i128 value = 0;
  int grid = 0;      // weight of bit 0
  bool sticky = false;
  int nonzero = 0;
};

// L2 alignment and addition: terms are right-shifted relative to the largest
// exponent into a W-bit field (the top significand occupies the upper
// kTermSigBits bits). Bits shifted below the field collect in the sticky.
// A lone nonzero term bypasses the window; the INT8 and MXFP4 single-term
// paths are exact by construction.
WindowSum l2_align_sum(std::span<const ProductTerm, 4> terms, int w) {
  WindowSum s;
  int e_max = std::numeric_limits<int>::min();
  const ProductTerm* single = nullptr;
  for (const ProductTerm& t : terms) {
    if (t.sign == 0 || t.significand == 0) continue;
    ++s.nonzero;
    single = &t;
    e_max = std::max(e_max, t.exponent);
  }
  if (s.nonzero == 0) return s;
  if (s.nonzero == 1) {
    s.value = static_cast<i128>(single->sign) * single->significand;
    s.grid = single->exponent;
    return s;
  }
  const int up = w - kTermSigBits;
  for (const ProductTerm& t : terms) {
    if (t.sign == 0 || t.significand == 0) continue;
    const int net = up - (e_max - t.exponent);
    if (net >= 0) {
      s.value += static_cast<i128>(t.sign) * (static_cast<i128>(t.significand) << net);
    } else {
      const int sh = -net;
      uint64_t kept = 0;
      if (sh < 64) {
        kept = t.significand >> sh;
        s.sticky |= (t.significand & ((1ull << sh) - 1)) != 0;
      } else {
        s.sticky |= t.significand != 0;
      }
      s.value += static_cast<i128>(t.sign) * static_cast<i128>(kept);
    }
  }
  s.grid = e_max - up;
  return s;
}

int sgn(i128 v) { return v > 0 ? 1 : (v < 0 ? -1 : 0); }
u128 mag_of(i128 v) { return v < 0 ? static_cast<u128>(-v) : static_cast<u128>(v); }

// Two-operand floating add at S = m+1 significand bits, exact RNE.
AccumulatorValue fp_add(const AccumulatorValue& x, const AccumulatorValue& y, int m) {
  const AccumulatorValue& big = (x.exponent >= y.exponent) ? x : y;
  const AccumulatorValue& small = (x.exponent >= y.exponent) ? y : x;
  const int gap = big.exponent - small.exponent;
  constexpr int kExt = 3;
  const uint64_t sig_big = ((1ull << m) | big.mantissa) << kExt;
  const uint64_t sig_small_full = ((1ull << m) | small.mantissa) << kExt;
  uint64_t sig_small = 0;
  bool lost = false;
  if (gap < 64) {
    sig_small = sig_small_full >> gap;
    if (gap > 0) lost = (sig_small_full & ((1ull << gap) - 1)) != 0;
  } else {
    lost = true;
  }
  const i128 sum = static_cast<i128>(big.sign) * static_cast<i128>(sig_big) +
                   static_cast<i128>(small.sign) * static_cast<i128>(sig_small);
  if (sum == 0) {
    // Exact cancellation; a lost tail here is impossible (it would require
    // the shifted small operand to still match the big one).
    return make_zero();
  }
  AccumulatorValue r = round_mag(sgn(sum), mag_of(sum), big.exponent - m - kExt,
                                 false, lost ? small.sign : 0, true, m);
  r.saturated = r.saturated || x.saturated || y.saturated;
  return r;
}

}  // namespace

double AccumulatorValue::to_double(int mantissa_bits) const {
  if (zero) return 0.0;
  const double sig = static_cast<double>((1u << mantissa_bits) | mantissa);
  return sign * std::ldexp(sig, exponent - mantissa_bits);
}

AccumulatorValue AccumulatorValue::from_double(double v, int mantissa_bits) {
  if (v == 0.0) return AccumulatorValue{};
  if (!std::isfinite(v)) throw Error("AccumulatorValue: non-finite input");
  const int m = mantissa_bits;
  int e = std::ilogb(std::fabs(v));
  uint64_t q = static_cast<uint64_t>(std::nearbyint(std::ldexp(std::fabs(v), m - e)));
  if (q == (2ull << m)) {
    q >>= 1;
    ++e;
  }
  AccumulatorValue r;
  r.zero = false;
  r.sign = static_cast<int8_t>(std::signbit(v) ? -1 : 1);
  if (e > kAccExpMax || e < kAccExpMin) return saturate(r.sign, e > kAccExpMax, m);
  r.exponent = e;
  r.mantissa = static_cast<uint32_t>(q - (1ull << m));
  return r;
}

const char* tree_variant_name(TreeVariant v) {
  switch (v) {
    case TreeVariant::Fp32Addition: return "fp32_addition";
    case TreeVariant::LongInteger: return "long_integer";
    case TreeVariant::HybridIter1: return "hybrid_iter1";
    case TreeVariant::HybridIter2: return "hybrid_iter2";
  }
  return "?";
}

const TreeVariant* find_tree_variant(std::string_view name) {
  static constexpr TreeVariant kVariants[] = {
      TreeVariant::Fp32Addition, TreeVariant::LongInteger,
      TreeVariant::HybridIter1, TreeVariant::HybridIter2};
  for (const TreeVariant& v : kVariants) {
    if (name == tree_variant_name(v)) return &v;
  }
  return nullptr;
}

ProductTerm l1_reduce_fp4(std::span<const ProductTerm, 8> products) {
  int e_min = std::numeric_limits<int>::max();
  for (const ProductTerm& p : products) {
    if (p.sign == 0 || p.significand == 0) continue;
    e_min = std::min(e_min, p.exponent);
  }
  if (e_min == std::numeric_limits<int>::max()) return ProductTerm{};
  int64_t sum = 0;
  for (const ProductTerm& p : products) {
    if (p.sign == 0 || p.significand == 0) continue;
    const int sh = p.exponent - e_min;
    if (sh > 20) throw Error("l1_reduce_fp4: exponent span exceeds the 3-bit window");
    sum += static_cast<int64_t>(p.sign) * (static_cast<int64_t>(p.significand) << sh);
  }
  if (sum == 0) return ProductTerm{};
  const uint64_t mag = static_cast<uint64_t>(sum < 0 ? -sum : sum);
  const int tz = __builtin_ctzll(mag);
  return ProductTerm{static_cast<int8_t>(sum < 0 ? -1 : 1),
                     static_cast<uint32_t>(mag >> tz), e_min + tz};
}

// -----------------------------------------------------------------------------
// FP32-addition tree: normalize + round the product-sum to the accumulator
// format, apply the shared exponents, then a conventional floating accumulate.
// Two roundings per invocation.
// -----------------------------------------------------------------------------
AccumulatorValue tree_fp32_addition(std::span<const ProductTerm, 4> terms,
                                    const AccumulatorValue& acc, const TreeConfig& cfg) {
  const int m = cfg.acc_mantissa_bits;
  const int s = significand_width(cfg);
  const WindowSum ps = l2_align_sum(terms, s + 2);

  AccumulatorValue p;
  if (ps.value != 0) {
    p = round_mag(sgn(ps.value), mag_of(ps.value), ps.grid, ps.sticky, 0, false, m);
    if (!p.zero && !p.saturated) {
      const int e = p.exponent + shared_offset(cfg);
      if (e > kAccExpMax || e < kAccExpMin) {
        p = saturate(p.sign, e > kAccExpMax, m);
      } else {
        p.exponent = e;
      }
    }
  }
  if (p.zero) {
    AccumulatorValue r = acc;
    r.saturated = r.saturated || p.saturated;
    return r;
  }
  if (acc.zero) {
    AccumulatorValue r = p;
    r.saturated = r.saturated || acc.saturated;
    return r;
  }
  return fp_add(p, acc, m);
}

// -----------------------------------------------------------------------------
// Early-accumulation window machinery shared by the hybrid iterations.
// The product-sum is NOT normalized; the stored value is aligned against the
// un-normalized P-bit window and everything is rounded once at the end.
// -----------------------------------------------------------------------------
namespace {

struct EarlyAccIn {
  i128 ps;        // signed product-sum
  int grid;       // ps LSB weight, shared exponents applied
  bool sticky;    // L2 alignment sticky
  int p_width;    // P = S + 4
};

AccumulatorValue finish_window(i128 x, int bottom, bool sticky, int tail_sign,
                               bool exact_tail, int m, bool in_saturated) {
  AccumulatorValue r;
  if (x == 0) {
    // Cancelled to nothing inside the window; any tail is below resolution.
    r = make_zero();
  } else {
    r = round_mag(sgn(x), mag_of(x), bottom, sticky, tail_sign, exact_tail, m);
  }
  r.saturated = r.saturated || in_saturated;
  return r;
}

// Iteration 1: the P-bit product-sum sits inside a (P + 2S + 1)-bit window
// with S bits of extension on both sides; the stored significand is shifted
// into place and the whole window is normalized.
AccumulatorValue hybrid_iter1(const EarlyAccIn& in, const AccumulatorValue& acc, int m) {
  const int s = m + 1;
  const int top = in.grid + in.p_width - 1;
  const int a_lsb = acc.exponent - m;
  const int d = std::max(0, acc.exponent - (top + s));
  const int bottom = in.grid - s + d;

  bool lost_ps = false;
  i128 psv;
  const int ps_sh = in.grid - bottom;  // = s - d
  if (ps_sh >= 0) {
    psv = static_cast<i128>(sgn(in.ps)) * static_cast<i128>(mag_of(in.ps) << ps_sh);
  } else {
    const u128 kept = shr_sticky(mag_of(in.ps), -ps_sh, &lost_ps);
    psv = static_cast<i128>(sgn(in.ps)) * static_cast<i128>(kept);
  }

  bool lost_acc = false;
  i128 av;
  const uint64_t sig_a = (1ull << m) | acc.mantissa;
  const int acc_sh = a_lsb - bottom;
  if (acc_sh >= 0) {
    av = static_cast<i128>(acc.sign) * (static_cast<i128>(sig_a) << acc_sh);
  } else {
    const u128 kept = shr_sticky(static_cast<u128>(sig_a), -acc_sh, &lost_acc);
    av = static_cast<i128>(acc.sign) * static_cast<i128>(kept);
  }
  assert(!(lost_ps && lost_acc));

  const i128 x = psv + av;
  const int tail = lost_ps ? sgn(in.ps) : (lost_acc ? acc.sign : 0);
  return finish_window(x, bottom, in.sticky, tail, false, m, acc.saturated);
}

// Iteration 2: a selector compares the stored exponent against the window
// anchor and extends the P-bit product-sum by S bits on one side only.
AccumulatorValue hybrid_iter2(const EarlyAccIn& in, const AccumulatorValue& acc, int m) {
  const int s = m + 1;
  const int top = in.grid + in.p_width - 1;
  const int a_lsb = acc.exponent - m;
  const uint64_t sig_a = (1ull << m) | acc.mantissa;

  i128 x;
  bool lost = false;
  int tail = 0;
  int bottom;
  if (acc.exponent > top) {
    // Stored value larger: extend on the left; the product-sum drops low bits
    // once the gap exceeds the S-bit headroom.
    const int d = std::max(0, acc.exponent - (top + s));
    bottom = in.grid + d;
    const u128 kept = shr_sticky(mag_of(in.ps), d, &lost);
    x = static_cast<i128>(sgn(in.ps)) * static_cast<i128>(kept) +
        static_cast<i128>(acc.sign) * (static_cast<i128>(sig_a) << (a_lsb - bottom));
    if (lost) tail = sgn(in.ps);
  } else {
    // Stored value smaller or equal: extend on the right; stored bits below
    // the S-bit extension fold into the sticky.
    bottom = in.grid - s;
    i128 av;
    if (a_lsb >= bottom) {
      av = static_cast<i128>(acc.sign) * (static_cast<i128>(sig_a) << (a_lsb - bottom));
    } else {
      const u128 kept = shr_sticky(static_cast<u128>(sig_a), bottom - a_lsb, &lost);
      av = static_cast<i128>(acc.sign) * static_cast<i128>(kept);
      if (lost) tail = acc.sign;
    }
    x = static_cast<i128>(sgn(in.ps)) * static_cast<i128>(mag_of(in.ps) << s) + av;
  }
  return finish_window(x, bottom, in.sticky, tail, false, m, acc.saturated);
}

}  // namespace

AccumulatorValue tree_hybrid(std::span<const ProductTerm, 4> terms,
                             const AccumulatorValue& acc, const TreeConfig& cfg) {
  if (cfg.variant != TreeVariant::HybridIter1 && cfg.variant != TreeVariant::HybridIter2) {
    throw Error("tree_hybrid: config selects a non-hybrid variant");
  }
  const int m = cfg.acc_mantissa_bits;
  const int s = significand_width(cfg);
  const WindowSum ps = l2_align_sum(terms, s + 2);

  if (acc.zero) {
    AccumulatorValue r = make_zero();
    if (ps.value != 0) {
      r = round_mag(sgn(ps.value), mag_of(ps.value), ps.grid + shared_offset(cfg),
                    ps.sticky, 0, false, m);
    }
    r.saturated = r.saturated || acc.saturated;
    return r;
  }
  if (ps.value == 0 && !ps.sticky) {
    return acc;  // normalizing the stored value alone is the identity
  }

  EarlyAccIn in{ps.value, ps.grid + shared_offset(cfg), ps.sticky, s + 4};
  if (cfg.variant == TreeVariant::HybridIter1) return hybrid_iter1(in, acc, m);
  return hybrid_iter2(in, acc, m);
}

// -----------------------------------------------------------------------------
// Long-integer tree: the four terms land in an anchored wide integer with no
// bit loss, the stored significand is aligned against the product-sum (low
// extension plus reattachment of shifted-out bits), one rounding at the end.
// The emulation window is provably lossless for any operand gap up to
// kReattachSpan bits; beyond that the smaller operand folds into the sticky.
// -----------------------------------------------------------------------------
AccumulatorValue tree_long_integer(std::span<const ProductTerm, 4> terms,
                                   const AccumulatorValue& acc, const TreeConfig& cfg) {
  if (cfg.variant != TreeVariant::LongInteger) {
    throw Error("tree_long_integer: config selects a different variant");
  }
  constexpr int kReattachSpan = 110;
  const int m = cfg.acc_mantissa_bits;

  int e_min = std::numeric_limits<int>::max();
  for (const ProductTerm& t : terms) {
    if (t.sign == 0 || t.significand == 0) continue;
    e_min = std::min(e_min, t.exponent);
  }
  i128 v = 0;
  if (e_min != std::numeric_limits<int>::max()) {
    for (const ProductTerm& t : terms) {
      if (t.sign == 0 || t.significand == 0) continue;
      const int sh = t.exponent - e_min;
      if (sh > 100) throw Error("tree_long_integer: exponent span exceeds the anchor window");
      v += static_cast<i128>(t.sign) * (static_cast<i128>(t.significand) << sh);
    }
  }
  const int grid = e_min + shared_offset(cfg);

  if (acc.zero) {
    AccumulatorValue r = make_zero();
    if (v != 0) r = round_mag(sgn(v), mag_of(v), grid, false, 0, false, m);
    r.saturated = r.saturated || acc.saturated;
    return r;
  }
  if (v == 0) return acc;

  const int a_lsb = acc.exponent - m;
  const uint64_t sig_a = (1ull << m) | acc.mantissa;
  const int ps_msb = grid + bitlen(mag_of(v)) - 1;
  const int lo = std::min(grid, a_lsb);
  const int hi = std::max(ps_msb, acc.exponent);

  if (hi - lo <= kReattachSpan) {
    // Fully exact: both operands fit the reattachment window.
    const i128 x = static_cast<i128>(sgn(v)) * static_cast<i128>(mag_of(v) << (grid - lo)) +
                   static_cast<i128>(acc.sign) * (static_cast<i128>(sig_a) << (a_lsb - lo));
    return finish_window(x, lo, false, 0, true, m, acc.saturated);
  }
  if (acc.exponent > ps_msb) {
    // Product-sum entirely below the stored value's window.
    return finish_window(static_cast<i128>(acc.sign) * static_cast<i128>(sig_a), a_lsb,
                         false, sgn(v), true, m, acc.saturated);
  }
  // Stored value entirely below the product-sum.
  return finish_window(static_cast<i128>(sgn(v)) * static_cast<i128>(mag_of(v)), grid,
                       false, acc.sign, true, m, acc.saturated);
}

AccumulatorValue tree_reduce(std::span<const ProductTerm, 4> terms,
                             const AccumulatorValue& acc, const TreeConfig& cfg) {
  switch (cfg.variant) {
    case TreeVariant::Fp32Addition: return tree_fp32_addition(terms, acc, cfg);
    case TreeVariant::LongInteger: return tree_long_integer(terms, acc, cfg);
    case TreeVariant::HybridIter1:
    case TreeVariant::HybridIter2: return tree_hybrid(terms, acc, cfg);
  }
  throw Error("tree_reduce: unknown variant");
}

CostReport cost_report(const TreeConfig& cfg) {
  const int s = significand_width(cfg);
  CostReport r;
  switch (cfg.variant) {
    case TreeVariant::Fp32Addition:
      r.l2_align_width = s + 2;
      r.l2_adder_width = s + 4;
      r.acc_adder_width = s + 4;      // S-bit operands plus guard/round/sticky
      r.norm_input_width = s + 4;     // product-sum normalizer dominates
      r.mux_bits = 0;
      break;
    case TreeVariant::LongInteger:
      // Reported per the fixed 8-bit-significand design this variant models:
      // 67-bit anchored integers, a 69-bit product-sum, and an accumulation
      // window extended by S + 2 zero bits (95 at S = 24).
      r.l2_align_width = 67;
      r.l2_adder_width = 69;
      r.acc_adder_width = 71 + s;
      r.norm_input_width = 71 + s;
      r.mux_bits = 0;
      break;
    case TreeVariant::HybridIter1:
      r.l2_align_width = s + 2;
      r.l2_adder_width = s + 4;
      r.acc_adder_width = 2 * s + 5;  // (S+4)-bit sum plus S extension plus carry
      r.norm_input_width = 3 * s + 5;
      r.mux_bits = 0;
      break;
    case TreeVariant::HybridIter2:
      r.l2_align_width = s + 2;
      r.l2_adder_width = s + 4;
      r.acc_adder_width = 2 * s + 5;
      r.norm_input_width = 2 * s + 5;
      r.mux_bits = 2 * s + 4;         // left/right placement of the product-sum
      break;
  }
  return r;
}

}  // namespace mxdp
