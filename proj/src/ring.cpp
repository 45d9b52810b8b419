#include "mpcnn/ring.hpp"

#include <cmath>

namespace mpcnn {

u64 encode(double x, const FixedPointConfig& fp) {
  if (!std::isfinite(x)) throw NumericError("encode: non-finite value");
  // |x| must stay below 2^(l-1-f) so the signed interpretation survives
  if (std::abs(x) >= fp.range())
    throw NumericError("encode: value " + std::to_string(x) + " out of fixed-point range");
  i64 q = i64(std::round(x * std::ldexp(1.0, fp.f)));  // half away from zero
  return u64(q) & fp.mask();
}

double decode(u64 v, const FixedPointConfig& fp) {
  return double(to_signed(v, fp)) * fp.ulp();
}

std::pair<u64, u64> make_shares(u64 value, Prg& rng, const FixedPointConfig& fp) {
  u64 s0 = rng.next() & fp.mask();
  u64 s1 = ring_sub(value & fp.mask(), s0, fp);
  return {s0, s1};
}

u64 reconstruct(u64 s0, u64 s1, const FixedPointConfig& fp) {
  return ring_add(s0, s1, fp);
}

u64 truncate_share(u64 share, int k, PartyId who, const FixedPointConfig& fp) {
  share &= fp.mask();
  if (k == 0) return share;
  if (who == PartyId::p0) return share >> k;
  u64 neg = ring_neg(share, fp);
  return ring_neg(neg >> k, fp);
}

u64 truncate_plain(u64 v, int k, const FixedPointConfig& fp) {
  if (k == 0) return v & fp.mask();
  i64 s = to_signed(v, fp);
  // arithmetic shift: floor division by 2^k for both signs
  i64 t = s >> k;
  return u64(t) & fp.mask();
}

void ring_matmul(const u64* a, const u64* b, u64* out, std::size_t n, std::size_t k,
                 std::size_t m, const FixedPointConfig& fp) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = 0;
    for (std::size_t t = 0; t < k; ++t) {
      u64 av = a[i * k + t];
      if (av == 0) continue;
      const u64* brow = b + t * m;
      u64* orow = out + i * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] &= fp.mask();
  }
}

}  // namespace mpcnn
