#pragma once

#include <span>
#include <vector>

#include "mpcnn/ot.hpp"
#include "mpcnn/session.hpp"

namespace mpcnn {

inline constexpr u8 kTagOpen = 1;     // Beaver masked openings
inline constexpr u8 kTagBundle = 2;   // garbled tables + labels + decode info
inline constexpr u8 kTagReveal = 4;   // audited reconstructions
inline constexpr u8 kTagReshare = 5;  // bounded-window re-sharing offsets
inline constexpr u8 kTagPairBit = 6;  // pair-max comparison bit broadcast

// elementwise Beaver product; result shares are NOT rescaled
std::vector<u64> mul_shares(Session& s, std::span<const u64> x, std::span<const u64> y);

// share-local probabilistic rescale by k bits (default: the session's f)
void truncate_vec(Session& s, std::span<u64> x, int k);

// fixed-point product: Beaver then rescale by f
std::vector<u64> mul_fixed(Session& s, std::span<const u64> x, std::span<const u64> y);

// (n x k) @ (k x m) with one matrix triple and a single open round;
// rescales by f unless rescale is false
std::vector<u64> matmul_shares(Session& s, std::span<const u64> x, std::span<const u64> y,
                               std::size_t n, std::size_t k, std::size_t m, bool rescale = true);

struct ReluArtifacts {
  std::vector<u64> output;      // shares of max(x, 0)
  std::vector<u64> derivative;  // shares of the indicator, 1{x > 0}
};

// Garbled ReLU, batched: one bundle message and one OT exchange per call.
// Party 0 garbles and keeps its input share as its output share; party 1
// decodes masked outputs. The derivative mask r_b is drawn from party 0's
// mask stream, one draw per element, in element order.
ReluArtifacts secure_relu(Session& s, std::span<const u64> x, OtMode mode = OtMode::dealer);

// ReLU then clamp to [0, xmax]; derivative is the strict window indicator
// 1{0 < x < xmax} the hat-exp backward pass needs
ReluArtifacts secure_relu_clip(Session& s, std::span<const u64> x, double xmax,
                               OtMode mode = OtMode::dealer);

// one Beaver product with the integer indicator; no rescale needed
std::vector<u64> relu_backward(Session& s, std::span<const u64> g, const ReluArtifacts& art);

struct MaxArtifacts {
  std::vector<u64> max;  // winners' original shares; no re-sharing
  std::vector<u8> bits;  // public: 1 iff first argument strictly larger
};

// Single-bit circuit on the share differences; the evaluator decodes the
// bit and broadcasts it, then both parties keep the winner's shares.
// Ties (x = y) pick the second argument.
MaxArtifacts secure_pair_max(Session& s, std::span<const u64> x, std::span<const u64> y,
                             OtMode mode = OtMode::dealer);

struct MaxPoolArtifacts {
  std::vector<u64> out;   // (rows/2) x (cols/2)
  std::vector<u8> bits;   // 3 per window: a-vs-b, c-vs-d, semifinal
};

// 2x2 stride-2 tournament; two batched pair-max rounds
MaxPoolArtifacts secure_maxpool(Session& s, std::span<const u64> x, std::size_t rows,
                                std::size_t cols, OtMode mode = OtMode::dealer);

// local routing of gradients to the winning positions via the public bits
std::vector<u64> maxpool_backward(std::span<const u64> g, const std::vector<u8>& bits,
                                  std::size_t rows, std::size_t cols);

// --- shared plumbing for the GC-based protocols (also used by softmax) ---

std::vector<u8> bits_of(u64 v, int w);
u64 word_from_bits(const u8* bits, int w);

// Garbler half of one batched circuit execution: garble per element with the
// session label stream, ship tables + own active labels + decode info in one
// bundle, then answer the OT for the evaluator's input bits.
void gc_garble_batch(Session& s, const CircuitDescription& c,
                     const std::vector<std::vector<u8>>& garbler_bits, OtMode mode);

// Evaluator half: returns decoded output bits per element.
std::vector<std::vector<u8>> gc_evaluate_batch(Session& s, const CircuitDescription& c,
                                               const std::vector<std::vector<u8>>& eval_bits,
                                               OtMode mode);

}  // namespace mpcnn
