#include "mpcnn/garble.hpp"

#include <cstring>

#if defined(MPCNN_HAVE_AESNI) && defined(__AES__)
#include <smmintrin.h>
#include <wmmintrin.h>
#define MPCNN_AESNI 1
#endif

namespace mpcnn {

namespace {

const u8 kSbox[256] = {
    0x63, 0x7c, 0x77, 0x7b, 0xf2, 0x6b, 0x6f, 0xc5, 0x30, 0x01, 0x67, 0x2b, 0xfe, 0xd7, 0xab,
    0x76, 0xca, 0x82, 0xc9, 0x7d, 0xfa, 0x59, 0x47, 0xf0, 0xad, 0xd4, 0xa2, 0xaf, 0x9c, 0xa4,
    0x72, 0xc0, 0xb7, 0xfd, 0x93, 0x26, 0x36, 0x3f, 0xf7, 0xcc, 0x34, 0xa5, 0xe5, 0xf1, 0x71,
    0xd8, 0x31, 0x15, 0x04, 0xc7, 0x23, 0xc3, 0x18, 0x96, 0x05, 0x9a, 0x07, 0x12, 0x80, 0xe2,
    0xeb, 0x27, 0xb2, 0x75, 0x09, 0x83, 0x2c, 0x1a, 0x1b, 0x6e, 0x5a, 0xa0, 0x52, 0x3b, 0xd6,
    0xb3, 0x29, 0xe3, 0x2f, 0x84, 0x53, 0xd1, 0x00, 0xed, 0x20, 0xfc, 0xb1, 0x5b, 0x6a, 0xcb,
    0xbe, 0x39, 0x4a, 0x4c, 0x58, 0xcf, 0xd0, 0xef, 0xaa, 0xfb, 0x43, 0x4d, 0x33, 0x85, 0x45,
    0xf9, 0x02, 0x7f, 0x50, 0x3c, 0x9f, 0xa8, 0x51, 0xa3, 0x40, 0x8f, 0x92, 0x9d, 0x38, 0xf5,
    0xbc, 0xb6, 0xda, 0x21, 0x10, 0xff, 0xf3, 0xd2, 0xcd, 0x0c, 0x13, 0xec, 0x5f, 0x97, 0x44,
    0x17, 0xc4, 0xa7, 0x7e, 0x3d, 0x64, 0x5d, 0x19, 0x73, 0x60, 0x81, 0x4f, 0xdc, 0x22, 0x2a,
    0x90, 0x88, 0x46, 0xee, 0xb8, 0x14, 0xde, 0x5e, 0x0b, 0xdb, 0xe0, 0x32, 0x3a, 0x0a, 0x49,
    0x06, 0x24, 0x5c, 0xc2, 0xd3, 0xac, 0x62, 0x91, 0x95, 0xe4, 0x79, 0xe7, 0xc8, 0x37, 0x6d,
    0x8d, 0xd5, 0x4e, 0xa9, 0x6c, 0x56, 0xf4, 0xea, 0x65, 0x7a, 0xae, 0x08, 0xba, 0x78, 0x25,
    0x2e, 0x1c, 0xa6, 0xb4, 0xc6, 0xe8, 0xdd, 0x74, 0x1f, 0x4b, 0xbd, 0x8b, 0x8a, 0x70, 0x3e,
    0xb5, 0x66, 0x48, 0x03, 0xf6, 0x0e, 0x61, 0x35, 0x57, 0xb9, 0x86, 0xc1, 0x1d, 0x9e, 0xe1,
    0xf8, 0x98, 0x11, 0x69, 0xd9, 0x8e, 0x94, 0x9b, 0x1e, 0x87, 0xe9, 0xce, 0x55, 0x28, 0xdf,
    0x8c, 0xa1, 0x89, 0x0d, 0xbf, 0xe6, 0x42, 0x68, 0x41, 0x99, 0x2d, 0x0f, 0xb0, 0x54, 0xbb,
    0x16};

inline u8 xt(u8 x) { return static_cast<u8>((x << 1) ^ ((x >> 7) * 0x1b)); }

struct SwAes {
  u8 rk[176];

  explicit SwAes(const u8 key[16]) {
    std::memcpy(rk, key, 16);
    u8 rcon = 1;
    for (int i = 16; i < 176; i += 4) {
      u8 t[4] = {rk[i - 4], rk[i - 3], rk[i - 2], rk[i - 1]};
      if (i % 16 == 0) {
        u8 first = t[0];
        t[0] = static_cast<u8>(kSbox[t[1]] ^ rcon);
        t[1] = kSbox[t[2]];
        t[2] = kSbox[t[3]];
        t[3] = kSbox[first];
        rcon = xt(rcon);
      }
      for (int j = 0; j < 4; ++j) rk[i + j] = static_cast<u8>(rk[i - 16 + j] ^ t[j]);
    }
  }

  void encrypt(const u8 in[16], u8 out[16]) const {
    u8 s[16];
    for (int i = 0; i < 16; ++i) s[i] = static_cast<u8>(in[i] ^ rk[i]);
    for (int round = 1; round <= 10; ++round) {
      u8 t[16];
      // SubBytes and ShiftRows in one pass over the column-major state
      for (int c = 0; c < 4; ++c)
        for (int r = 0; r < 4; ++r) t[4 * c + r] = kSbox[s[4 * ((c + r) & 3) + r]];
      if (round < 10) {
        for (int c = 0; c < 4; ++c) {
          u8 a0 = t[4 * c], a1 = t[4 * c + 1], a2 = t[4 * c + 2], a3 = t[4 * c + 3];
          u8 e = static_cast<u8>(a0 ^ a1 ^ a2 ^ a3);
          s[4 * c + 0] = static_cast<u8>(a0 ^ e ^ xt(static_cast<u8>(a0 ^ a1)));
          s[4 * c + 1] = static_cast<u8>(a1 ^ e ^ xt(static_cast<u8>(a1 ^ a2)));
          s[4 * c + 2] = static_cast<u8>(a2 ^ e ^ xt(static_cast<u8>(a2 ^ a3)));
          s[4 * c + 3] = static_cast<u8>(a3 ^ e ^ xt(static_cast<u8>(a3 ^ a0)));
        }
      } else {
        std::memcpy(s, t, 16);
      }
      for (int i = 0; i < 16; ++i) s[i] = static_cast<u8>(s[i] ^ rk[16 * round + i]);
    }
    std::memcpy(out, s, 16);
  }
};

// fixed hashing key; value is arbitrary but must never change once
// transcripts are relied on for determinism checks
const u8 kFixedKey[16] = {0x24, 0x7b, 0x1f, 0x5a, 0x09, 0xc3, 0x88, 0x6e,
                          0x31, 0xd2, 0x75, 0xee, 0x40, 0x9a, 0x5c, 0x07};

const SwAes& sw_aes() {
  static const SwAes a(kFixedKey);
  return a;
}

#ifdef MPCNN_AESNI
inline __m128i expand_step(__m128i key, __m128i assist) {
  assist = _mm_shuffle_epi32(assist, _MM_SHUFFLE(3, 3, 3, 3));
  key = _mm_xor_si128(key, _mm_slli_si128(key, 4));
  key = _mm_xor_si128(key, _mm_slli_si128(key, 4));
  key = _mm_xor_si128(key, _mm_slli_si128(key, 4));
  return _mm_xor_si128(key, assist);
}

struct HwAes {
  __m128i rk[11];

  explicit HwAes(const u8 key[16]) {
    rk[0] = _mm_loadu_si128(reinterpret_cast<const __m128i*>(key));
    rk[1] = expand_step(rk[0], _mm_aeskeygenassist_si128(rk[0], 0x01));
    rk[2] = expand_step(rk[1], _mm_aeskeygenassist_si128(rk[1], 0x02));
    rk[3] = expand_step(rk[2], _mm_aeskeygenassist_si128(rk[2], 0x04));
    rk[4] = expand_step(rk[3], _mm_aeskeygenassist_si128(rk[3], 0x08));
    rk[5] = expand_step(rk[4], _mm_aeskeygenassist_si128(rk[4], 0x10));
    rk[6] = expand_step(rk[5], _mm_aeskeygenassist_si128(rk[5], 0x20));
    rk[7] = expand_step(rk[6], _mm_aeskeygenassist_si128(rk[6], 0x40));
    rk[8] = expand_step(rk[7], _mm_aeskeygenassist_si128(rk[7], 0x80));
    rk[9] = expand_step(rk[8], _mm_aeskeygenassist_si128(rk[8], 0x1b));
    rk[10] = expand_step(rk[9], _mm_aeskeygenassist_si128(rk[9], 0x36));
  }

  void encrypt(const u8 in[16], u8 out[16]) const {
    __m128i s = _mm_loadu_si128(reinterpret_cast<const __m128i*>(in));
    s = _mm_xor_si128(s, rk[0]);
    for (int r = 1; r < 10; ++r) s = _mm_aesenc_si128(s, rk[r]);
    s = _mm_aesenclast_si128(s, rk[10]);
    _mm_storeu_si128(reinterpret_cast<__m128i*>(out), s);
  }
};

const HwAes& hw_aes() {
  static const HwAes a(kFixedKey);
  return a;
}
#endif

bool runtime_aesni() {
#ifdef MPCNN_AESNI
  static const bool ok = __builtin_cpu_supports("aes");
  return ok;
#else
  return false;
#endif
}

inline u64 rotl(u64 x, int k) { return (x << k) | (x >> (64 - k)); }

void aes_fixed(const u8 in[16], u8 out[16]) {
#ifdef MPCNN_AESNI
  if (runtime_aesni()) {
    hw_aes().encrypt(in, out);
    return;
  }
#endif
  sw_aes().encrypt(in, out);
}

}  // namespace

void aes128_encrypt_portable(const u8 key[16], const u8 in[16], u8 out[16]) {
  SwAes(key).encrypt(in, out);
}

bool gc_hash_accelerated() { return runtime_aesni(); }

Block random_block(Prg& rng) {
  Block b;
  b.lo = rng.next();
  b.hi = rng.next();
  return b;
}

Block gc_hash(Block a, Block b, u64 gid, u64 slot) {
  // linear pre-mix separates (a, b) and the tweak; AES provides the diffusion
  Block m;
  m.lo = rotl(a.lo, 1) ^ rotl(b.hi, 3) ^ (gid * 0x9e3779b97f4a7c15ull);
  m.hi = rotl(a.hi, 2) ^ rotl(b.lo, 5) ^ (slot * 0xbf58476d1ce4e5b9ull) ^ 0x94d049bb133111ebull;
  u8 buf[16], enc[16];
  std::memcpy(buf, &m.lo, 8);
  std::memcpy(buf + 8, &m.hi, 8);
  aes_fixed(buf, enc);
  Block c;
  std::memcpy(&c.lo, enc, 8);
  std::memcpy(&c.hi, enc + 8, 8);
  return c ^ m;
}

Garbling garble_circuit(const CircuitDescription& c, Prg& label_rng) {
  Garbling g;
  g.offset = random_block(label_rng);
  g.offset.lo |= 1;  // colors of a label pair must differ
  g.wire0.resize(c.num_wires);
  for (u32 i = 0; i < c.input_count(); ++i) g.wire0[i] = random_block(label_rng);
  g.tables.reserve(static_cast<std::size_t>(c.and_count()) * 4 * kRowBytes);

  u64 gid = 0;
  for (const auto& gate : c.gates) {
    switch (gate.op) {
      case GateOp::xor_gate:
        g.wire0[gate.out] = g.wire0[gate.a] ^ g.wire0[gate.b];
        break;
      case GateOp::not_gate:
        // evaluator copies the label; only the meaning flips
        g.wire0[gate.out] = g.wire0[gate.a] ^ g.offset;
        break;
      case GateOp::and_gate: {
        Block a0 = g.wire0[gate.a];
        Block b0 = g.wire0[gate.b];
        Block c0 = random_block(label_rng);
        g.wire0[gate.out] = c0;
        std::size_t base = g.tables.size();
        g.tables.resize(base + 4 * kRowBytes);
        for (u8 va = 0; va < 2; ++va) {
          for (u8 vb = 0; vb < 2; ++vb) {
            Block al = va ? a0 ^ g.offset : a0;
            Block bl = vb ? b0 ^ g.offset : b0;
            Block ct = ((va & vb) ? c0 ^ g.offset : c0) ^ gc_hash(al, bl, gid, 0);
            u64 tag = gc_hash(al, bl, gid, 1).lo;
            u8* row = g.tables.data() + base +
                      static_cast<std::size_t>(2 * al.color() + bl.color()) * kRowBytes;
            std::memcpy(row, &ct.lo, 8);
            std::memcpy(row + 8, &ct.hi, 8);
            std::memcpy(row + 16, &tag, 8);
          }
        }
        ++gid;
        break;
      }
    }
  }

  g.decode.reserve(c.outputs.size());
  for (u32 o : c.outputs) {
    Block l0 = g.wire0[o];
    Block l1 = l0 ^ g.offset;
    Block pin{o, 0};
    g.decode.push_back({gc_hash(l0, pin, ~0ull, 2).lo, gc_hash(l1, pin, ~0ull, 2).lo});
  }
  return g;
}

std::vector<Block> evaluate_garbled(const CircuitDescription& c, const std::vector<u8>& tables,
                                    const std::vector<Block>& active_inputs) {
  if (active_inputs.size() != c.input_count())
    throw ProtocolError("garbled evaluation: input label count mismatch");
  if (tables.size() != static_cast<std::size_t>(c.and_count()) * 4 * kRowBytes)
    throw ProtocolError("garbled evaluation: table size mismatch");

  std::vector<Block> w(c.num_wires);
  for (std::size_t i = 0; i < active_inputs.size(); ++i) w[i] = active_inputs[i];

  u64 gid = 0;
  std::size_t off = 0;
  for (const auto& gate : c.gates) {
    switch (gate.op) {
      case GateOp::xor_gate:
        w[gate.out] = w[gate.a] ^ w[gate.b];
        break;
      case GateOp::not_gate:
        w[gate.out] = w[gate.a];
        break;
      case GateOp::and_gate: {
        const u8* row = tables.data() + off +
                        static_cast<std::size_t>(2 * w[gate.a].color() + w[gate.b].color()) *
                            kRowBytes;
        u64 tag;
        std::memcpy(&tag, row + 16, 8);
        if (tag != gc_hash(w[gate.a], w[gate.b], gid, 1).lo)
          throw ProtocolError("garbled row failed authenticity check");
        Block ct;
        std::memcpy(&ct.lo, row, 8);
        std::memcpy(&ct.hi, row + 8, 8);
        w[gate.out] = ct ^ gc_hash(w[gate.a], w[gate.b], gid, 0);
        off += 4 * kRowBytes;
        ++gid;
        break;
      }
    }
  }

  std::vector<Block> out(c.outputs.size());
  for (std::size_t i = 0; i < c.outputs.size(); ++i) out[i] = w[c.outputs[i]];
  return out;
}

std::vector<u8> decode_outputs(const CircuitDescription& c,
                               const std::vector<std::array<u64, 2>>& decode,
                               const std::vector<Block>& active_outputs) {
  if (decode.size() != c.outputs.size() || active_outputs.size() != c.outputs.size())
    throw ProtocolError("garbled decode: output count mismatch");
  std::vector<u8> bits(c.outputs.size());
  for (std::size_t i = 0; i < c.outputs.size(); ++i) {
    Block pin{c.outputs[i], 0};
    u64 h = gc_hash(active_outputs[i], pin, ~0ull, 2).lo;
    if (h == decode[i][0])
      bits[i] = 0;
    else if (h == decode[i][1])
      bits[i] = 1;
    else
      throw ProtocolError("garbled decode: output label matches no commitment");
  }
  return bits;
}

}  // namespace mpcnn
