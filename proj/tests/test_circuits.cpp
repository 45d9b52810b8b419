#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "mpcnn/circuit.hpp"
#include "mpcnn/protocols.hpp"

using namespace mpcnn;

namespace {

std::vector<u8> concat_bits(std::initializer_list<std::pair<u64, int>> words) {
  std::vector<u8> out;
  for (auto [v, w] : words) {
    std::vector<u8> b = bits_of(v, w);
    out.insert(out.end(), b.begin(), b.end());
  }
  return out;
}

u64 out_word(const std::vector<u8>& bits, int from, int w) {
  return word_from_bits(bits.data() + from, w);
}

i64 as_signed(u64 v, int w) {
  u64 mask = w == 64 ? ~0ULL : (1ULL << w) - 1;
  v &= mask;
  if (w < 64 && (v >> (w - 1))) return i64(v) - (i64(1) << w);
  return i64(v);
}

}  // namespace

TEST_CASE("adder matches mod-2^w addition") {
  for (int w : {4, 8, 16}) {
    CircuitDescription c = build_add_circuit(w);
    CHECK(c.garbler_inputs == u32(w));
    CHECK(c.evaluator_inputs == u32(w));
    u64 mask = (1ULL << w) - 1;
    Prg rng(3);
    for (int i = 0; i < 200; ++i) {
      u64 x = rng.next() & mask, y = rng.next() & mask;
      auto out = eval_circuit_plain(c, concat_bits({{x, w}, {y, w}}));
      CHECK(out_word(out, 0, w) == ((x + y) & mask));
    }
  }
}

TEST_CASE("comparator is strict and respects signedness") {
  int w = 8;
  CircuitDescription cu = build_cmp_circuit(w, false);
  CircuitDescription cs = build_cmp_circuit(w, true);
  for (int x = 0; x < 256; x += 3)
    for (int y = 0; y < 256; y += 5) {
      auto eu = eval_circuit_plain(cu, concat_bits({{u64(x), w}, {u64(y), w}}));
      CHECK(eu[0] == u8(x > y));
      auto es = eval_circuit_plain(cs, concat_bits({{u64(x), w}, {u64(y), w}}));
      CHECK(es[0] == u8(as_signed(u64(x), w) > as_signed(u64(y), w)));
    }
  // equality is not greater
  auto eq = eval_circuit_plain(cu, concat_bits({{42, w}, {42, w}}));
  CHECK(eq[0] == 0);
}

TEST_CASE("mux selects by the evaluator bit") {
  int w = 8;
  CircuitDescription c = build_mux_circuit(w);
  CHECK(c.garbler_inputs == u32(2 * w));
  CHECK(c.evaluator_inputs == 1);
  Prg rng(4);
  for (int i = 0; i < 100; ++i) {
    u64 x = rng.next() & 0xff, y = rng.next() & 0xff;
    for (u64 b : {0ULL, 1ULL}) {
      auto out = eval_circuit_plain(c, concat_bits({{x, w}, {y, w}, {b, 1}}));
      CHECK(out_word(out, 0, w) == (b ? y : x));
    }
  }
}

TEST_CASE("relu circuit reconstructs max(x,0) and its indicator under masks") {
  int w = 8;
  CircuitDescription c = build_relu_circuit(w);
  CHECK(c.garbler_inputs == u32(3 * w));
  CHECK(c.evaluator_inputs == u32(w));
  u64 mask = (1ULL << w) - 1;
  Prg rng(5);
  for (int v = -128; v < 128; v += 7) {
    u64 x = u64(v) & mask;
    u64 r = rng.next() & mask;
    u64 rb = rng.next() & 1;
    u64 x1 = (x - r) & mask;  // garbler keeps r as its share
    auto out = eval_circuit_plain(
        c, concat_bits({{r, w}, {(0 - r) & mask, w}, {(0 - rb) & mask, w}, {x1, w}}));
    u64 relu = u64(std::max(v, 0)) & mask;
    CHECK(((out_word(out, 0, w) + r) & mask) == relu);
    CHECK(((out_word(out, w, w) + rb) & mask) == u64(v > 0 ? 1 : 0));
  }
}

TEST_CASE("clipped relu also caps at the ceiling and windows the indicator") {
  int w = 8;
  CircuitDescription c = build_relu_clip_circuit(w);
  CHECK(c.garbler_inputs == u32(4 * w));
  u64 mask = (1ULL << w) - 1;
  u64 xmax = 40;
  Prg rng(6);
  for (int v = -128; v < 128; ++v) {
    u64 x = u64(v) & mask;
    u64 r = rng.next() & mask;
    u64 rb = rng.next() & 1;
    u64 x1 = (x - r) & mask;
    auto out = eval_circuit_plain(
        c, concat_bits(
               {{r, w}, {(0 - r) & mask, w}, {(0 - rb) & mask, w}, {xmax, w}, {x1, w}}));
    u64 want = u64(std::clamp<i64>(v, 0, i64(xmax))) & mask;
    CHECK(((out_word(out, 0, w) + r) & mask) == want);
    u64 ind = (v > 0 && u64(v) < xmax) ? 1 : 0;
    CHECK(((out_word(out, w, w) + rb) & mask) == ind);
  }
}

TEST_CASE("pair-gt bit is the sign of the recombined difference") {
  int w = 8;
  CircuitDescription c = build_pair_gt_circuit(w);
  CHECK(c.outputs.size() == 1);
  u64 mask = (1ULL << w) - 1;
  Prg rng(7);
  for (int x = -40; x <= 40; x += 4)
    for (int y = -40; y <= 40; y += 4) {
      // shares of x and y; garbler holds x0,y0 and feeds d0 = x0 - y0
      u64 x0 = rng.next() & mask, y0 = rng.next() & mask;
      u64 x1 = (u64(x) - x0) & mask, y1 = (u64(y) - y0) & mask;
      u64 d0 = (x0 - y0) & mask;
      u64 d1 = (y1 - x1) & mask;
      auto out = eval_circuit_plain(c, concat_bits({{d0, w}, {d1, w}}));
      CHECK(out[0] == u8(x > y));  // ties pick the second argument
    }
}

TEST_CASE("normalizer extracts mantissa and exponent of a positive value") {
  int w = 16, f = 6;
  CircuitDescription c = build_normalize_circuit(w, f);
  u64 mask = (1ULL << w) - 1;
  Prg rng(8);
  for (u64 s : {1ULL, 2ULL, 3ULL, 63ULL, 64ULL, 65ULL, 255ULL, 4096ULL, 32767ULL}) {
    u64 rm = rng.next() & mask, re = rng.next() & mask;
    u64 d0 = rng.next() & mask;
    u64 d1 = (s - d0) & mask;
    auto out = eval_circuit_plain(
        c, concat_bits({{d0, w}, {(0 - rm) & mask, w}, {(0 - re) & mask, w}, {d1, w}}));
    u64 m = (out_word(out, 0, w) + rm) & mask;
    i64 e_scaled = as_signed((out_word(out, w, w) + re) & mask, w);
    int top = 63 - std::countl_zero(s);
    // the circuit reports e * 2^f; callers rebase by -f * 2^f via the mask
    CHECK(e_scaled == i64(top) * (1 << f));
    // mantissa holds the top bits of s shifted so its leading 1 sits at f
    CHECK(m >= (1ULL << f));
    CHECK(m < (2ULL << f));
    if (top <= f) {
      CHECK(m == (s << (f - top)));
    } else {
      CHECK(m == (s >> (top - f)));
    }
  }
}

TEST_CASE("xor gates are free of and-gate tables") {
  CircuitDescription add = build_add_circuit(8);
  u32 ands = add.and_count();
  CHECK(ands > 0);
  u32 counted = 0;
  for (const Gate& g : add.gates)
    if (g.op == GateOp::and_gate) ++counted;
  CHECK(ands == counted);
  CHECK(ands < add.gates.size());
}

TEST_CASE("serialization round-trips every builder") {
  for (const CircuitDescription& c :
       {build_add_circuit(8), build_cmp_circuit(8, true), build_mux_circuit(8),
        build_relu_circuit(8), build_relu_clip_circuit(8), build_pair_gt_circuit(8),
        build_normalize_circuit(16, 6)}) {
    std::vector<u8> blob = serialize_circuit(c);
    CircuitDescription back = parse_circuit(blob.data(), blob.size());
    CHECK(back.garbler_inputs == c.garbler_inputs);
    CHECK(back.evaluator_inputs == c.evaluator_inputs);
    CHECK(back.num_wires == c.num_wires);
    CHECK(back.outputs == c.outputs);
    REQUIRE(back.gates.size() == c.gates.size());
    for (std::size_t i = 0; i < c.gates.size(); ++i) {
      CHECK(back.gates[i].op == c.gates[i].op);
      CHECK(back.gates[i].a == c.gates[i].a);
      CHECK(back.gates[i].b == c.gates[i].b);
      CHECK(back.gates[i].out == c.gates[i].out);
    }
  }
}

TEST_CASE("parser rejects malformed blobs") {
  std::vector<u8> blob = serialize_circuit(build_add_circuit(8));

  SUBCASE("truncated") {
    CHECK_THROWS_AS(parse_circuit(blob.data(), blob.size() - 3), FormatError);
    CHECK_THROWS_AS(parse_circuit(blob.data(), 2), FormatError);
  }
  SUBCASE("trailing bytes") {
    blob.push_back(0);
    CHECK_THROWS_AS(parse_circuit(blob.data(), blob.size()), FormatError);
  }
  SUBCASE("bad opcode") {
    // gates start after the u32 counts; opcode is the first gate byte
    CircuitDescription tiny;
    tiny.garbler_inputs = 1;
    tiny.evaluator_inputs = 1;
    tiny.num_wires = 3;
    tiny.gates = {{GateOp::and_gate, 0, 1, 2}};
    tiny.outputs = {2};
    std::vector<u8> tb = serialize_circuit(tiny);
    bool corrupted = false;
    for (std::size_t i = 0; i + 1 < tb.size(); ++i) {
      if (tb[i] == u8(GateOp::and_gate)) {
        std::vector<u8> bad = tb;
        bad[i] = 9;
        try {
          parse_circuit(bad.data(), bad.size());
        } catch (const FormatError&) {
          corrupted = true;
          break;
        }
      }
    }
    CHECK(corrupted);
  }
  SUBCASE("non-topological wiring") {
    CircuitDescription loop;
    loop.garbler_inputs = 1;
    loop.evaluator_inputs = 1;
    loop.num_wires = 4;
    loop.gates = {{GateOp::and_gate, 0, 3, 2},  // reads wire 3 before it exists
                  {GateOp::xor_gate, 0, 1, 3}};
    loop.outputs = {3};
    std::vector<u8> blob2 = serialize_circuit(loop);
    CHECK_THROWS_AS(parse_circuit(blob2.data(), blob2.size()), FormatError);
  }
}

TEST_CASE("bit packing helpers are lsb-first inverses") {
  std::vector<u8> b = bits_of(0b1011, 6);
  CHECK(b == std::vector<u8>{1, 1, 0, 1, 0, 0});
  CHECK(word_from_bits(b.data(), 6) == 0b1011);
  for (u64 v : {0ULL, 1ULL, 0x8000000000000000ULL, ~0ULL}) {
    std::vector<u8> bits = bits_of(v, 64);
    CHECK(word_from_bits(bits.data(), 64) == v);
  }
}

TEST_CASE("normalizer width must be a power of two") {
  CHECK_THROWS(build_normalize_circuit(24, 6));
  CHECK_THROWS(build_normalize_circuit(16, 0));
  CHECK_THROWS(build_normalize_circuit(16, 15));
  CHECK_NOTHROW(build_normalize_circuit(32, 12));
}
