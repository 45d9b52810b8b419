#include "mpcnn/circuit.hpp"

#include <stdexcept>

#include "mpcnn/transport.hpp"

namespace mpcnn {

u32 CircuitDescription::and_count() const {
  u32 n = 0;
  for (const auto& g : gates)
    if (g.op == GateOp::and_gate) ++n;
  return n;
}

namespace {

// incremental construction helper; every method returns the fresh output wire
struct Builder {
  CircuitDescription c;

  explicit Builder(u32 garbler_bits, u32 evaluator_bits) {
    c.garbler_inputs = garbler_bits;
    c.evaluator_inputs = evaluator_bits;
    c.num_wires = garbler_bits + evaluator_bits;
  }

  u32 gate(GateOp op, u32 a, u32 b) {
    u32 out = c.num_wires++;
    c.gates.push_back(Gate{op, a, b, out});
    return out;
  }
  u32 band(u32 a, u32 b) { return gate(GateOp::and_gate, a, b); }
  u32 bxor(u32 a, u32 b) { return gate(GateOp::xor_gate, a, b); }
  u32 bnot(u32 a) { return gate(GateOp::not_gate, a, a); }
  u32 bor(u32 a, u32 b) { return bnot(band(bnot(a), bnot(b))); }

  // sum mod 2^w, ripple carry: one AND per carry bit
  std::vector<u32> add(const std::vector<u32>& x, const std::vector<u32>& y) {
    const std::size_t w = x.size();
    std::vector<u32> s(w);
    u32 carry = 0;
    for (std::size_t i = 0; i < w; ++i) {
      if (i == 0) {
        s[0] = bxor(x[0], y[0]);
        if (w > 1) carry = band(x[0], y[0]);
      } else {
        u32 xc = bxor(x[i], carry);
        s[i] = bxor(xc, y[i]);
        if (i + 1 < w) carry = bxor(band(xc, bxor(y[i], carry)), carry);
      }
    }
    return s;
  }

  // word plus single bit (bit enters at position 0)
  std::vector<u32> add_bit(const std::vector<u32>& x, u32 bit) {
    const std::size_t w = x.size();
    std::vector<u32> s(w);
    u32 carry = bit;
    for (std::size_t i = 0; i < w; ++i) {
      s[i] = bxor(x[i], carry);
      if (i + 1 < w) carry = band(x[i], carry);
    }
    return s;
  }

  // x - y mod 2^w via x + ~y + 1
  std::vector<u32> sub(const std::vector<u32>& x, const std::vector<u32>& y) {
    const std::size_t w = x.size();
    std::vector<u32> s(w);
    u32 carry = 0;  // carry-in 1 folded into the first bit
    for (std::size_t i = 0; i < w; ++i) {
      u32 ny = bnot(y[i]);
      if (i == 0) {
        s[0] = bxor(x[0], y[0]);
        // maj(x0, ~y0, 1) = x0 | ~y0
        if (w > 1) carry = bor(x[0], ny);
      } else {
        u32 xc = bxor(x[i], carry);
        s[i] = bxor(xc, ny);
        if (i + 1 < w) carry = bxor(band(xc, bxor(ny, carry)), carry);
      }
    }
    return s;
  }

  // carry-out of x + ~y + 1, i.e. 1 iff x >= y (unsigned)
  u32 geq(const std::vector<u32>& x, const std::vector<u32>& y) {
    const std::size_t w = x.size();
    u32 carry = 0;
    for (std::size_t i = 0; i < w; ++i) {
      u32 ny = bnot(y[i]);
      if (i == 0) {
        carry = bor(x[0], ny);
      } else {
        u32 xc = bxor(x[i], carry);
        carry = bxor(band(xc, bxor(ny, carry)), carry);
      }
    }
    return carry;
  }

  std::vector<u32> input_range(u32 first, u32 count) {
    std::vector<u32> r(count);
    for (u32 i = 0; i < count; ++i) r[i] = first + i;
    return r;
  }
};

}  // namespace

std::vector<u8> eval_circuit_plain(const CircuitDescription& c, const std::vector<u8>& inputs) {
  if (inputs.size() != c.input_count())
    throw std::invalid_argument("circuit input width mismatch");
  std::vector<u8> w(c.num_wires, 0);
  for (std::size_t i = 0; i < inputs.size(); ++i) w[i] = inputs[i] & 1;
  for (const auto& g : c.gates) {
    switch (g.op) {
      case GateOp::and_gate: w[g.out] = w[g.a] & w[g.b]; break;
      case GateOp::xor_gate: w[g.out] = w[g.a] ^ w[g.b]; break;
      case GateOp::not_gate: w[g.out] = w[g.a] ^ 1; break;
    }
  }
  std::vector<u8> out(c.outputs.size());
  for (std::size_t i = 0; i < c.outputs.size(); ++i) out[i] = w[c.outputs[i]];
  return out;
}

std::vector<u8> serialize_circuit(const CircuitDescription& c) {
  std::vector<u8> buf;
  put_u32(buf, c.garbler_inputs);
  put_u32(buf, c.evaluator_inputs);
  put_u32(buf, c.num_wires);
  put_u32(buf, static_cast<u32>(c.gates.size()));
  put_u32(buf, static_cast<u32>(c.outputs.size()));
  for (const auto& g : c.gates) {
    buf.push_back(static_cast<u8>(g.op));
    put_u32(buf, g.a);
    put_u32(buf, g.b);
    put_u32(buf, g.out);
  }
  for (u32 o : c.outputs) put_u32(buf, o);
  return buf;
}

CircuitDescription parse_circuit(const u8* data, std::size_t len) {
  std::size_t off = 0;
  auto need = [&](std::size_t n) {
    if (off + n > len) throw FormatError("circuit blob truncated");
  };
  auto rd32 = [&]() {
    need(4);
    u32 v = get_u32(data + off);
    off += 4;
    return v;
  };
  CircuitDescription c;
  c.garbler_inputs = rd32();
  c.evaluator_inputs = rd32();
  c.num_wires = rd32();
  u32 ngates = rd32();
  u32 nout = rd32();
  if (c.num_wires < c.input_count() || c.num_wires != c.input_count() + ngates)
    throw FormatError("circuit wire count inconsistent");
  c.gates.reserve(ngates);
  for (u32 i = 0; i < ngates; ++i) {
    need(1);
    u8 op = data[off++];
    if (op > 2) throw FormatError("unknown gate opcode");
    Gate g;
    g.op = static_cast<GateOp>(op);
    g.a = rd32();
    g.b = rd32();
    g.out = rd32();
    u32 expected = c.input_count() + i;
    if (g.out != expected || g.a >= expected || g.b >= expected)
      throw FormatError("gate wiring not topological");
    c.gates.push_back(g);
  }
  c.outputs.reserve(nout);
  for (u32 i = 0; i < nout; ++i) {
    u32 o = rd32();
    if (o >= c.num_wires) throw FormatError("output wire out of range");
    c.outputs.push_back(o);
  }
  if (off != len) throw FormatError("trailing bytes after circuit blob");
  return c;
}

CircuitDescription build_add_circuit(int w) {
  Builder b(static_cast<u32>(w), static_cast<u32>(w));
  auto x = b.input_range(0, static_cast<u32>(w));
  auto y = b.input_range(static_cast<u32>(w), static_cast<u32>(w));
  b.c.outputs = b.add(x, y);
  return std::move(b.c);
}

CircuitDescription build_cmp_circuit(int w, bool signed_cmp) {
  Builder b(static_cast<u32>(w), static_cast<u32>(w));
  auto x = b.input_range(0, static_cast<u32>(w));
  auto y = b.input_range(static_cast<u32>(w), static_cast<u32>(w));
  if (signed_cmp) {
    // flipping both sign bits maps signed order onto unsigned order
    x[w - 1] = b.bnot(x[w - 1]);
    y[w - 1] = b.bnot(y[w - 1]);
  }
  // x > y  <=>  not (y >= x)
  b.c.outputs = {b.bnot(b.geq(y, x))};
  return std::move(b.c);
}

CircuitDescription build_mux_circuit(int w) {
  Builder b(static_cast<u32>(2 * w), 1);
  auto x = b.input_range(0, static_cast<u32>(w));
  auto y = b.input_range(static_cast<u32>(w), static_cast<u32>(w));
  u32 sel = static_cast<u32>(2 * w);
  std::vector<u32> out(w);
  for (int i = 0; i < w; ++i) out[i] = b.bxor(x[i], b.band(sel, b.bxor(x[i], y[i])));
  b.c.outputs = out;
  return std::move(b.c);
}

CircuitDescription build_relu_circuit(int w) {
  const u32 uw = static_cast<u32>(w);
  Builder b(3 * uw, uw);
  auto r = b.input_range(0, uw);
  auto neg_r = b.input_range(uw, uw);
  auto neg_rb = b.input_range(2 * uw, uw);
  auto x1 = b.input_range(3 * uw, uw);

  // reconstruct x = r + x1 inside the circuit
  auto s = b.add(r, x1);
  u32 sign = s[w - 1];
  u32 pos = b.bnot(sign);

  // max(x, 0): keep bits only when the sign is clear
  std::vector<u32> m(w);
  for (int i = 0; i < w; ++i) m[i] = b.band(pos, s[i]);
  auto relu_masked = b.add(m, neg_r);

  // derivative 1{x > 0}: positive sign and not zero
  u32 any = s[0];
  for (int i = 1; i < w; ++i) any = b.bor(any, s[i]);
  u32 ind = b.band(pos, any);
  auto ind_masked = b.add_bit(neg_rb, ind);

  b.c.outputs = relu_masked;
  b.c.outputs.insert(b.c.outputs.end(), ind_masked.begin(), ind_masked.end());
  return std::move(b.c);
}

CircuitDescription build_relu_clip_circuit(int w) {
  const u32 uw = static_cast<u32>(w);
  Builder b(4 * uw, uw);
  auto r = b.input_range(0, uw);
  auto neg_r = b.input_range(uw, uw);
  auto neg_rb = b.input_range(2 * uw, uw);
  auto xmax = b.input_range(3 * uw, uw);
  auto x1 = b.input_range(4 * uw, uw);

  auto s = b.add(r, x1);
  u32 sign = s[w - 1];
  u32 pos = b.bnot(sign);
  std::vector<u32> m(w);
  for (int i = 0; i < w; ++i) m[i] = b.band(pos, s[i]);

  // one unsigned comparison serves both the clamp and the indicator;
  // at m = xmax selecting either operand yields the same output
  u32 ge = b.geq(m, xmax);
  std::vector<u32> clipped(w);
  for (int i = 0; i < w; ++i) clipped[i] = b.bxor(m[i], b.band(ge, b.bxor(m[i], xmax[i])));
  auto out_masked = b.add(clipped, neg_r);

  u32 any = s[0];
  for (int i = 1; i < w; ++i) any = b.bor(any, s[i]);
  u32 ind = b.band(b.band(pos, any), b.bnot(ge));
  auto ind_masked = b.add_bit(neg_rb, ind);

  b.c.outputs = out_masked;
  b.c.outputs.insert(b.c.outputs.end(), ind_masked.begin(), ind_masked.end());
  return std::move(b.c);
}

CircuitDescription build_pair_gt_circuit(int w) {
  const u32 uw = static_cast<u32>(w);
  Builder b(uw, uw);
  auto d0 = b.input_range(0, uw);
  auto d1 = b.input_range(uw, uw);
  // d1 - d0 = (y1 - x1) - (x0 - y0) = y - x; its sign bit is 1 iff x > y
  auto diff = b.sub(d1, d0);
  b.c.outputs = {diff[w - 1]};
  return std::move(b.c);
}

CircuitDescription build_normalize_circuit(int w, int f) {
  if (f <= 0 || f >= w - 1) throw std::invalid_argument("normalize: bad fractional width");
  const u32 uw = static_cast<u32>(w);
  Builder b(3 * uw, uw);
  auto d0 = b.input_range(0, uw);
  auto neg_rm = b.input_range(uw, uw);
  auto neg_re = b.input_range(2 * uw, uw);
  auto d1 = b.input_range(3 * uw, uw);

  auto s = b.add(d0, d1);

  // locate the highest set bit: prefix-OR from the top, then isolate
  std::vector<u32> pref(w), found(w);
  pref[w - 1] = s[w - 1];
  for (int i = w - 2; i >= 0; --i) pref[i] = b.bor(pref[i + 1], s[i]);
  found[w - 1] = s[w - 1];
  for (int i = 0; i < w - 1; ++i) found[i] = b.band(s[i], b.bnot(pref[i + 1]));

  // exponent bits are XORs of disjoint indicators
  int ebits = 0;
  while ((1 << ebits) < w) ++ebits;
  std::vector<u32> e(ebits, 0);
  std::vector<bool> e_set(ebits, false);
  for (int i = 0; i < w; ++i)
    for (int j = 0; j < ebits; ++j)
      if ((i >> j) & 1) {
        e[j] = e_set[j] ? b.bxor(e[j], found[i]) : found[i];
        e_set[j] = true;
      }

  // shift S left by (w-1) - e so the leading bit lands at position w-1;
  // with w a power of two the shift amount is just the bitwise NOT of e
  std::vector<u32> k(ebits);
  bool pow2 = (w & (w - 1)) == 0;
  if (!pow2) throw std::invalid_argument("normalize: width must be a power of two");
  for (int j = 0; j < ebits; ++j) k[j] = b.bnot(e[j]);

  std::vector<u32> m = s;
  for (int j = ebits - 1; j >= 0; --j) {
    int sh = 1 << j;
    std::vector<u32> nxt(w);
    for (int i = w - 1; i >= 0; --i) {
      if (i >= sh)
        nxt[i] = b.bxor(m[i], b.band(k[j], b.bxor(m[i], m[i - sh])));
      else
        nxt[i] = b.band(m[i], b.bnot(k[j]));
    }
    m = nxt;
  }

  // mantissa in [1,2) at f fractional bits: take the top f+1 bits of m.
  // Positions above f stay zero, so masking just skips those adds.
  std::vector<u32> carry_m(uw, 0);
  {
    u32 carry = 0;
    bool have_carry = false;
    for (int i = 0; i < w; ++i) {
      u32 mb = 0;
      bool have_mb = false;
      if (i <= f) {
        mb = m[w - 1 - (f - i)];
        have_mb = true;
      }
      if (!have_mb) {
        // operand bit is 0: sum = other + carry
        if (!have_carry) {
          carry_m[i] = neg_rm[i];
        } else {
          carry_m[i] = b.bxor(neg_rm[i], carry);
          if (i + 1 < w) carry = b.band(neg_rm[i], carry);
        }
      } else if (!have_carry) {
        carry_m[i] = b.bxor(mb, neg_rm[i]);
        if (i + 1 < w) {
          carry = b.band(mb, neg_rm[i]);
          have_carry = true;
        }
      } else {
        u32 xc = b.bxor(mb, carry);
        carry_m[i] = b.bxor(xc, neg_rm[i]);
        if (i + 1 < w) carry = b.bxor(b.band(xc, b.bxor(neg_rm[i], carry)), carry);
      }
    }
  }

  // exponent value (e - f) * 2^f - r_e = e * 2^f + (-f * 2^f - r_e); the
  // garbler folds the constant into its mask input, so the circuit only
  // adds e's bits at positions f .. f+ebits-1
  std::vector<u32> carry_e(uw, 0);
  {
    u32 carry = 0;
    bool have_carry = false;
    for (int i = 0; i < w; ++i) {
      u32 eb = 0;
      bool have_eb = false;
      if (i >= f && i < f + ebits) {
        eb = e[i - f];
        have_eb = true;
      }
      if (!have_eb) {
        if (!have_carry) {
          carry_e[i] = neg_re[i];
        } else {
          carry_e[i] = b.bxor(neg_re[i], carry);
          if (i + 1 < w) carry = b.band(neg_re[i], carry);
        }
      } else if (!have_carry) {
        carry_e[i] = b.bxor(eb, neg_re[i]);
        if (i + 1 < w) {
          carry = b.band(eb, neg_re[i]);
          have_carry = true;
        }
      } else {
        u32 xc = b.bxor(eb, carry);
        carry_e[i] = b.bxor(xc, neg_re[i]);
        if (i + 1 < w) carry = b.bxor(b.band(xc, b.bxor(neg_re[i], carry)), carry);
      }
    }
  }

  b.c.outputs = carry_m;
  b.c.outputs.insert(b.c.outputs.end(), carry_e.begin(), carry_e.end());
  return std::move(b.c);
}

}  // namespace mpcnn
