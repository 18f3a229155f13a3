#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>

#include "sinfer/errors.hpp"

namespace sinfer {

// Arithmetic in Z_2^bits on uint64_t words.  Values are always kept reduced
// (high bits zero for bits < 64).
struct Ring {
  int bits;
  uint64_t mask;

  explicit constexpr Ring(int b)
      : bits(b), mask(b == 64 ? ~0ull : (1ull << b) - 1) {}

  constexpr uint64_t reduce(uint64_t v) const { return v & mask; }
  constexpr uint64_t add(uint64_t a, uint64_t b) const { return (a + b) & mask; }
  constexpr uint64_t sub(uint64_t a, uint64_t b) const { return (a - b) & mask; }
  constexpr uint64_t mul(uint64_t a, uint64_t b) const { return (a * b) & mask; }
  constexpr uint64_t neg(uint64_t a) const { return (0 - a) & mask; }

  constexpr uint64_t half() const { return 1ull << (bits - 1); }

  constexpr int64_t to_signed(uint64_t v) const {
    if (bits == 64) return static_cast<int64_t>(v);
    return v >= half() ? static_cast<int64_t>(v) - (1ll << bits)
                       : static_cast<int64_t>(v);
  }

  constexpr uint64_t from_signed(int64_t v) const {
    return static_cast<uint64_t>(v) & mask;
  }

  constexpr bool is_negative(uint64_t v) const { return (v & half()) != 0; }
};

constexpr uint64_t pow10_u64(int p) {
  uint64_t v = 1;
  for (int i = 0; i < p; ++i) v *= 10;
  return v;
}

// Offset added before a masked scale-down so the opened value is always
// shifted into [0, 2^(bits-1)); it is the largest multiple of the divisor
// not above 2^(bits-2), and bounds the magnitude a truncation input may
// take.
constexpr uint64_t trunc_offset(const Ring& ring, uint64_t divisor) {
  uint64_t quarter = 1ull << (ring.bits - 2);
  return quarter / divisor * divisor;
}

// Fixed-point encoding m = round(x * 10^precision) embedded in Z_2^bits by
// two's complement.  Rounding is half away from zero; the representable
// range is [-2^(bits-1) / 10^p, (2^(bits-1) - 1) / 10^p].
struct FixedCodec {
  Ring ring;
  int precision;
  uint64_t scale;

  FixedCodec(int bits, int p) : ring(bits), precision(p), scale(pow10_u64(p)) {
    if (bits != 32 && bits != 64)
      throw OverflowError("word size must be 32 or 64 bits");
    if (p < 1 || p > 16)
      throw OverflowError("precision must be between 1 and 16");
  }

  uint64_t encode(double x) const {
    if (!std::isfinite(x)) throw OverflowError("cannot encode non-finite value");
    long double scaled = static_cast<long double>(x) * static_cast<long double>(scale);
    long double m = scaled >= 0 ? std::floor(scaled + 0.5L) : std::ceil(scaled - 0.5L);
    long double lo = -std::ldexp(1.0L, ring.bits - 1);
    long double hi = std::ldexp(1.0L, ring.bits - 1) - 1.0L;
    if (m < lo || m > hi)
      throw OverflowError("value " + std::to_string(x) + " exceeds fixed-point range at precision " +
                          std::to_string(precision));
    return ring.from_signed(static_cast<int64_t>(m));
  }

  double decode(uint64_t v) const {
    return static_cast<double>(ring.to_signed(ring.reduce(v))) /
           static_cast<double>(scale);
  }

  // Widest encodable interval as doubles (the edges round outward slightly
  // when cast, so compare against the exact integer bounds when it matters).
  std::pair<double, double> representable_range() const {
    long double lo = -std::ldexp(1.0L, ring.bits - 1);
    long double hi = std::ldexp(1.0L, ring.bits - 1) - 1.0L;
    long double s = static_cast<long double>(scale);
    return {static_cast<double>(lo / s), static_cast<double>(hi / s)};
  }

  // Rescales a double-precision product encoding (scale 10^2p) back to scale
  // 10^p: floor division of the signed value by 10^p.
  uint64_t truncate_plain(uint64_t v) const {
    int64_t sv = ring.to_signed(ring.reduce(v));
    int64_t d = static_cast<int64_t>(scale);
    int64_t q = sv / d;
    if (sv % d != 0 && sv < 0) --q;
    return ring.from_signed(q);
  }
};

}  // namespace sinfer
