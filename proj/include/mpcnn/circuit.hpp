#pragma once

#include <vector>

#include "mpcnn/common.hpp"

namespace mpcnn {

enum class GateOp : u8 { and_gate = 0, xor_gate = 1, not_gate = 2 };

struct Gate {
  GateOp op;
  u32 a = 0;
  u32 b = 0;  // ignored for NOT
  u32 out = 0;
};

// Boolean circuit over AND/XOR/NOT in topological order. Wires
// [0, garbler_inputs) belong to the garbler, the next evaluator_inputs
// wires to the evaluator; gate outputs are fresh wires after that.
struct CircuitDescription {
  u32 garbler_inputs = 0;
  u32 evaluator_inputs = 0;
  u32 num_wires = 0;
  std::vector<Gate> gates;
  std::vector<u32> outputs;

  u32 input_count() const { return garbler_inputs + evaluator_inputs; }
  u32 and_count() const;
};

// plaintext reference evaluation, the oracle the garbled path is tested against
std::vector<u8> eval_circuit_plain(const CircuitDescription& c, const std::vector<u8>& inputs);

std::vector<u8> serialize_circuit(const CircuitDescription& c);
CircuitDescription parse_circuit(const u8* data, std::size_t len);

// w-bit adder mod 2^w: out = x + y. Garbler holds x, evaluator y.
CircuitDescription build_add_circuit(int w);
// single-bit output: 1 iff x > y (strict); two's-complement compare if signed_cmp
CircuitDescription build_cmp_circuit(int w, bool signed_cmp);
// out = b ? y : x, bitwise select; garbler holds x and y, evaluator b
CircuitDescription build_mux_circuit(int w);

// ReLU on additively shared input: garbler feeds r, -r and -r_b; evaluator
// feeds its share x1. Outputs: [0..w) = max(x,0) - r, [w..2w) = 1{x>0} - r_b,
// both mod 2^w, decoded by the evaluator only.
CircuitDescription build_relu_circuit(int w);

// ReLU then clamp against a ceiling the garbler feeds as input bits (a
// public constant in practice). Outputs: [0..w) = min(max(x,0), xmax) - r,
// [w..2w) = 1{0 < x < xmax} - r_b. Garbler inputs: r, -r, -r_b, xmax;
// evaluator input: x1.
CircuitDescription build_relu_clip_circuit(int w);

// Pair-max comparison on shared difference: garbler feeds d0 = x0 - y0,
// evaluator d1 = y1 - x1. Single output bit = 1 iff x > y (ties pick the
// second argument). Computed as the sign of (d1 - d0) mod 2^w, which is
// exact whenever x - y is in signed range.
CircuitDescription build_pair_gt_circuit(int w);

// Normalization for the shared logarithm: reconstructs S = d0 + d1 (a
// positive fixed-point value), locates its top set bit e and shifts it to
// a mantissa m in [1, 2) at f fractional bits. Outputs m - r_m and
// e * 2^f - r_e, both w bits, masks fed by the garbler; the logarithm
// protocol folds its -f * 2^f rebase into the r_e mask.
// Garbler inputs: d0, -r_m, -r_e; evaluator input: d1.
CircuitDescription build_normalize_circuit(int w, int f);

}  // namespace mpcnn
