#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "mpcnn/common.hpp"

namespace mpcnn {

// Two's-complement fixed point over Z_{2^l}: value x is stored as
// round(x * 2^f) mod 2^l. All share arithmetic is mod-2^l via mask().
struct FixedPointConfig {
  int l = 64;  // ring bit width, 8..64
  int f = 16;  // fractional bits, 0 <= f < l

  u64 mask() const { return l == 64 ? ~0ULL : ((1ULL << l) - 1); }
  u64 sign_bit() const { return 1ULL << (l - 1); }
  double ulp() const { return std::ldexp(1.0, -f); }
  // largest encodable magnitude, |x| < 2^(l-1-f)
  double range() const { return std::ldexp(1.0, l - 1 - f); }

  void validate() const {
    if (l < 8 || l > 64) throw ConfigError("ring width l must be in [8,64]");
    if (f < 0 || f >= l) throw ConfigError("fractional bits f must satisfy 0 <= f < l");
  }
};

inline u64 ring_add(u64 a, u64 b, const FixedPointConfig& fp) {
  return (a + b) & fp.mask();
}
inline u64 ring_sub(u64 a, u64 b, const FixedPointConfig& fp) {
  return (a - b) & fp.mask();
}
inline u64 ring_neg(u64 a, const FixedPointConfig& fp) {
  return (0 - a) & fp.mask();
}
inline u64 ring_mul(u64 a, u64 b, const FixedPointConfig& fp) {
  return (a * b) & fp.mask();
}

// signed interpretation of a ring element
inline i64 to_signed(u64 v, const FixedPointConfig& fp) {
  v &= fp.mask();
  if (fp.l < 64 && (v & fp.sign_bit())) return i64(v) - (i64(1) << fp.l);
  return i64(v);
}

u64 encode(double x, const FixedPointConfig& fp);   // throws NumericError out of range
double decode(u64 v, const FixedPointConfig& fp);

// additive two-party split: returns (share0, share1), share0 uniform
std::pair<u64, u64> make_shares(u64 value, Prg& rng, const FixedPointConfig& fp);
u64 reconstruct(u64 s0, u64 s1, const FixedPointConfig& fp);

// Share-local probabilistic truncation by k bits (SecureML style): party 0
// shifts its share; party 1 negates, shifts, negates. The reconstructed
// result is floor(x / 2^k) + e with e in {-1, 0, +1} except for a wrap
// event of probability ~ |x| / 2^(l-1).
u64 truncate_share(u64 share, int k, PartyId who, const FixedPointConfig& fp);

// plaintext ring truncation used by oracles: arithmetic shift of the signed value
u64 truncate_plain(u64 v, int k, const FixedPointConfig& fp);

// dense row-major matrix product over the ring (local compute helper)
void ring_matmul(const u64* a, const u64* b, u64* out, std::size_t n, std::size_t k,
                 std::size_t m, const FixedPointConfig& fp);

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t numel() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
};

// One party's side of an additively shared row-major matrix.
struct SharedTensor {
  Shape shape;
  std::vector<u64> v;
  PartyId owner = PartyId::p0;

  SharedTensor() = default;
  SharedTensor(Shape s, PartyId o) : shape(s), v(s.numel(), 0), owner(o) {}
  std::size_t numel() const { return shape.numel(); }
};

}  // namespace mpcnn
