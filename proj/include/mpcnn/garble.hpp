#pragma once

#include <array>
#include <vector>

#include "mpcnn/circuit.hpp"
#include "mpcnn/common.hpp"

namespace mpcnn {

// 128-bit wire label; the low bit of lo doubles as the permute color
struct Block {
  u64 lo = 0;
  u64 hi = 0;

  friend Block operator^(Block a, Block b) { return {a.lo ^ b.lo, a.hi ^ b.hi}; }
  Block& operator^=(Block o) {
    lo ^= o.lo;
    hi ^= o.hi;
    return *this;
  }
  friend bool operator==(Block a, Block b) { return a.lo == b.lo && a.hi == b.hi; }
  u8 color() const { return static_cast<u8>(lo & 1); }
};

Block random_block(Prg& rng);

// fixed-key AES in Matyas-Meyer-Oseas mode, tweaked by gate id and slot;
// uses AES-NI when compiled in, otherwise a portable table implementation
Block gc_hash(Block a, Block b, u64 gid, u64 slot);
bool gc_hash_accelerated();

// portable AES core, exposed so tests can pin it to the published reference vector
void aes128_encrypt_portable(const u8 key[16], const u8 in[16], u8 out[16]);

inline constexpr std::size_t kRowBytes = 24;  // 16-byte ciphertext + 8-byte check tag

struct Garbling {
  Block offset;               // global free-XOR delta, low bit forced to 1
  std::vector<Block> wire0;   // label meaning 0 for every wire
  std::vector<u8> tables;     // 4 rows of kRowBytes per AND gate, gate order
  std::vector<std::array<u64, 2>> decode;  // per output: commitments to 0/1 labels

  Block label(u32 wire, u8 value) const {
    return value ? wire0[wire] ^ offset : wire0[wire];
  }
};

Garbling garble_circuit(const CircuitDescription& c, Prg& label_rng);

// walks the circuit with active labels; throws ProtocolError when a selected
// row fails its authenticity check
std::vector<Block> evaluate_garbled(const CircuitDescription& c, const std::vector<u8>& tables,
                                    const std::vector<Block>& active_inputs);

// maps active output labels to cleartext bits via the decode commitments;
// a label matching neither commitment raises ProtocolError
std::vector<u8> decode_outputs(const CircuitDescription& c,
                               const std::vector<std::array<u64, 2>>& decode,
                               const std::vector<Block>& active_outputs);

}  // namespace mpcnn
