#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mpcnn {

using u8 = std::uint8_t;
using u16 = std::uint16_t;
using u32 = std::uint32_t;
using u64 = std::uint64_t;
using i64 = std::int64_t;

// Error taxonomy. The CLI maps these onto exit codes: config 2, transport 3,
// numeric 4. Everything else is a plain runtime_error (internal bug).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TransportError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ProtocolError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class PartyId : u8 { p0 = 0, p1 = 1 };

inline PartyId other(PartyId p) {
  return p == PartyId::p0 ? PartyId::p1 : PartyId::p0;
}

// splitmix64: seed expander used for stream derivation and as the base PRG.
// Chosen over mt19937_64 because streams must be cheaply splittable by tag
// and the state must be trivially copyable for the mirror oracle to replay.
struct Prg {
  u64 state = 0;

  explicit Prg(u64 seed = 0) : state(seed) {}

  u64 next() {
    u64 z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in [0, bound), bound > 0; rejection-free modulo bias is fine for
  // power-of-two bounds, which is all callers use on secrecy-relevant paths
  u64 next_below(u64 bound) { return next() % bound; }

  double next_unit() { return double(next() >> 11) * 0x1.0p-53; }
};

// Derives an independent stream from (seed, tag). FNV-1a over the tag keeps
// distinct tags from colliding in practice; this is not a cryptographic
// separation, which the trusted-dealer model does not require.
inline Prg derive_stream(u64 seed, const std::string& tag) {
  u64 h = 0xcbf29ce484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  Prg p(seed ^ h);
  p.next();
  return p;
}

}  // namespace mpcnn
