#include "mpcnn/protocols.hpp"

#include <map>
#include <mutex>

namespace mpcnn {

namespace {

// circuit builders are pure; cache by width since both party threads share the process
const CircuitDescription& cached_circuit(const std::string& key,
                                         CircuitDescription (*make)(int), int w) {
  static std::mutex mu;
  static std::map<std::string, CircuitDescription> cache;
  std::lock_guard<std::mutex> lk(mu);
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, make(w)).first;
  return it->second;
}

void append_label(std::vector<u8>& buf, Block b) {
  put_u64(buf, b.lo);
  put_u64(buf, b.hi);
}

Block read_label(const u8* p) { return Block{get_u64(p), get_u64(p + 8)}; }

}  // namespace

std::vector<u8> bits_of(u64 v, int w) {
  std::vector<u8> b(w);
  for (int i = 0; i < w; ++i) b[i] = u8((v >> i) & 1);
  return b;
}

u64 word_from_bits(const u8* bits, int w) {
  u64 v = 0;
  for (int i = 0; i < w; ++i) v |= u64(bits[i] & 1) << i;
  return v;
}

std::vector<u64> mul_shares(Session& s, std::span<const u64> x, std::span<const u64> y) {
  if (x.size() != y.size()) throw ProtocolError("mul_shares: operand size mismatch");
  const auto& fp = s.fp();
  const std::size_t n = x.size();
  std::vector<ScalarTriple> tr(n);
  std::vector<u64> masked(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    tr[i] = s.triples().next_scalar();
    masked[i] = ring_sub(x[i], tr[i].a, fp);
    masked[n + i] = ring_sub(y[i], tr[i].b, fp);
  }
  std::vector<u64> opened = s.open_masked(kTagOpen, masked);
  std::vector<u64> z(n);
  const u64 party = s.me() == PartyId::p1 ? 1 : 0;
  for (std::size_t i = 0; i < n; ++i) {
    u64 sv = opened[i], tv = opened[n + i];
    u64 zi = ring_add(tr[i].c, ring_mul(sv, y[i], fp), fp);
    zi = ring_add(zi, ring_mul(tv, x[i], fp), fp);
    if (party) zi = ring_sub(zi, ring_mul(sv, tv, fp), fp);
    z[i] = zi;
  }
  return z;
}

void truncate_vec(Session& s, std::span<u64> x, int k) {
  for (u64& v : x) v = truncate_share(v, k, s.me(), s.fp());
}

std::vector<u64> mul_fixed(Session& s, std::span<const u64> x, std::span<const u64> y) {
  std::vector<u64> z = mul_shares(s, x, y);
  truncate_vec(s, z, s.fp().f);
  return z;
}

std::vector<u64> matmul_shares(Session& s, std::span<const u64> x, std::span<const u64> y,
                               std::size_t n, std::size_t k, std::size_t m, bool rescale) {
  if (x.size() != n * k || y.size() != k * m)
    throw ProtocolError("matmul_shares: shape mismatch");
  const auto& fp = s.fp();
  MatrixTriple tr = s.triples().next_matrix(n, k, m);
  std::vector<u64> masked(n * k + k * m);
  for (std::size_t i = 0; i < n * k; ++i) masked[i] = ring_sub(x[i], tr.a[i], fp);
  for (std::size_t i = 0; i < k * m; ++i) masked[n * k + i] = ring_sub(y[i], tr.b[i], fp);
  std::vector<u64> opened = s.open_masked(kTagOpen, masked);
  std::span<const u64> e(opened.data(), n * k);
  std::span<const u64> f(opened.data() + n * k, k * m);

  // z_i = c_i + e*y_i + x_i*f - i*e*f, the matrix form of the scalar recombination
  std::vector<u64> z(n * m), t1(n * m), t2(n * m);
  ring_matmul(e.data(), y.data(), t1.data(), n, k, m, fp);
  ring_matmul(x.data(), f.data(), t2.data(), n, k, m, fp);
  for (std::size_t i = 0; i < n * m; ++i)
    z[i] = ring_add(tr.c[i], ring_add(t1[i], t2[i], fp), fp);
  if (s.me() == PartyId::p1) {
    std::vector<u64> ef(n * m);
    ring_matmul(e.data(), f.data(), ef.data(), n, k, m, fp);
    for (std::size_t i = 0; i < n * m; ++i) z[i] = ring_sub(z[i], ef[i], fp);
  }
  if (rescale) truncate_vec(s, z, fp.f);
  return z;
}

void gc_garble_batch(Session& s, const CircuitDescription& c,
                     const std::vector<std::vector<u8>>& garbler_bits, OtMode mode) {
  const std::size_t count = garbler_bits.size();
  std::vector<u8> bundle;
  put_u32(bundle, u32(count));
  std::vector<std::array<Block, 2>> ot_pairs;
  ot_pairs.reserve(count * c.evaluator_inputs);

  for (std::size_t e = 0; e < count; ++e) {
    if (garbler_bits[e].size() != c.garbler_inputs)
      throw ProtocolError("gc batch: garbler input width mismatch");
    Garbling g = garble_circuit(c, s.label_rng());
    bundle.insert(bundle.end(), g.tables.begin(), g.tables.end());
    for (u32 i = 0; i < c.garbler_inputs; ++i)
      append_label(bundle, g.label(i, garbler_bits[e][i]));
    for (const auto& d : g.decode) {
      put_u64(bundle, d[0]);
      put_u64(bundle, d[1]);
    }
    for (u32 i = 0; i < c.evaluator_inputs; ++i) {
      u32 wire = c.garbler_inputs + i;
      ot_pairs.push_back({g.label(wire, 0), g.label(wire, 1)});
    }
  }
  s.send(kTagBundle, MsgKind::circuit, std::move(bundle));
  ot_send_labels(s, ot_pairs, mode);
}

std::vector<std::vector<u8>> gc_evaluate_batch(Session& s, const CircuitDescription& c,
                                               const std::vector<std::vector<u8>>& eval_bits,
                                               OtMode mode) {
  const std::size_t count = eval_bits.size();
  Message m = s.recv(kTagBundle, MsgKind::circuit);
  const std::size_t table_bytes = std::size_t(c.and_count()) * 4 * kRowBytes;
  const std::size_t per_element =
      table_bytes + std::size_t(c.garbler_inputs) * 16 + c.outputs.size() * 16;
  if (m.payload.size() != 4 + count * per_element)
    throw ProtocolError("gc batch: bundle size mismatch");
  if (get_u32(m.payload.data()) != count)
    throw ProtocolError("gc batch: element count mismatch");

  std::vector<u8> choices;
  choices.reserve(count * c.evaluator_inputs);
  for (std::size_t e = 0; e < count; ++e) {
    if (eval_bits[e].size() != c.evaluator_inputs)
      throw ProtocolError("gc batch: evaluator input width mismatch");
    choices.insert(choices.end(), eval_bits[e].begin(), eval_bits[e].end());
  }
  std::vector<Block> my_labels = ot_recv_labels(s, choices, mode);

  std::vector<std::vector<u8>> out(count);
  for (std::size_t e = 0; e < count; ++e) {
    const u8* base = m.payload.data() + 4 + e * per_element;
    std::vector<u8> tables(base, base + table_bytes);
    std::vector<Block> active(c.input_count());
    for (u32 i = 0; i < c.garbler_inputs; ++i)
      active[i] = read_label(base + table_bytes + std::size_t(i) * 16);
    for (u32 i = 0; i < c.evaluator_inputs; ++i)
      active[c.garbler_inputs + i] = my_labels[e * c.evaluator_inputs + i];
    std::vector<std::array<u64, 2>> decode(c.outputs.size());
    const u8* dec = base + table_bytes + std::size_t(c.garbler_inputs) * 16;
    for (std::size_t i = 0; i < c.outputs.size(); ++i)
      decode[i] = {get_u64(dec + i * 16), get_u64(dec + i * 16 + 8)};
    std::vector<Block> outputs = evaluate_garbled(c, tables, active);
    out[e] = decode_outputs(c, decode, outputs);
  }
  return out;
}

namespace {

// shared structure of secure_relu and secure_relu_clip
ReluArtifacts run_relu_circuit(Session& s, const CircuitDescription& c, std::span<const u64> x,
                               bool with_clip, double xmax, OtMode mode) {
  const auto& fp = s.fp();
  const int w = fp.l;
  const std::size_t n = x.size();
  ReluArtifacts art;
  art.output.resize(n);
  art.derivative.resize(n);

  if (s.me() == PartyId::p0) {
    u64 xmax_ring = with_clip ? encode(xmax, fp) : 0;
    std::vector<std::vector<u8>> inputs(n);
    for (std::size_t i = 0; i < n; ++i) {
      u64 r = x[i];
      u64 rb = s.mask_rng().next() & fp.mask();
      art.output[i] = r;  // the garbler's output share is its input share
      art.derivative[i] = rb;
      std::vector<u8>& in = inputs[i];
      in.reserve(c.garbler_inputs);
      auto push_word = [&](u64 v) {
        auto b = bits_of(v, w);
        in.insert(in.end(), b.begin(), b.end());
      };
      push_word(r);
      push_word(ring_neg(r, fp));
      push_word(ring_neg(rb, fp));
      if (with_clip) push_word(xmax_ring);
    }
    gc_garble_batch(s, c, inputs, mode);
  } else {
    std::vector<std::vector<u8>> inputs(n);
    for (std::size_t i = 0; i < n; ++i) inputs[i] = bits_of(x[i], w);
    auto out_bits = gc_evaluate_batch(s, c, inputs, mode);
    for (std::size_t i = 0; i < n; ++i) {
      art.output[i] = word_from_bits(out_bits[i].data(), w);
      art.derivative[i] = word_from_bits(out_bits[i].data() + w, w);
    }
  }
  return art;
}

}  // namespace

ReluArtifacts secure_relu(Session& s, std::span<const u64> x, OtMode mode) {
  auto scope = s.scoped("relu");
  const int w = s.fp().l;
  const auto& c = cached_circuit("relu:" + std::to_string(w), build_relu_circuit, w);
  return run_relu_circuit(s, c, x, false, 0.0, mode);
}

ReluArtifacts secure_relu_clip(Session& s, std::span<const u64> x, double xmax, OtMode mode) {
  auto scope = s.scoped("relu-clip");
  const int w = s.fp().l;
  const auto& c =
      cached_circuit("relu-clip:" + std::to_string(w), build_relu_clip_circuit, w);
  return run_relu_circuit(s, c, x, true, xmax, mode);
}

std::vector<u64> relu_backward(Session& s, std::span<const u64> g, const ReluArtifacts& art) {
  if (g.size() != art.derivative.size()) throw ProtocolError("relu_backward: stale artifacts");
  // the indicator is an integer sharing, so the product needs no rescale
  return mul_shares(s, g, art.derivative);
}

MaxArtifacts secure_pair_max(Session& s, std::span<const u64> x, std::span<const u64> y,
                             OtMode mode) {
  if (x.size() != y.size()) throw ProtocolError("pair_max: operand size mismatch");
  auto scope = s.scoped("pair-max");
  const auto& fp = s.fp();
  const int w = fp.l;
  const std::size_t n = x.size();
  const auto& c = cached_circuit("pair-gt:" + std::to_string(w), build_pair_gt_circuit, w);

  MaxArtifacts art;
  art.bits.resize(n);
  if (s.me() == PartyId::p0) {
    std::vector<std::vector<u8>> inputs(n);
    for (std::size_t i = 0; i < n; ++i) inputs[i] = bits_of(ring_sub(x[i], y[i], fp), w);
    gc_garble_batch(s, c, inputs, mode);
    Message m = s.recv(kTagPairBit, MsgKind::control);
    if (m.payload.size() != (n + 7) / 8) throw ProtocolError("pair_max: bit message size");
    for (std::size_t i = 0; i < n; ++i) art.bits[i] = (m.payload[i / 8] >> (i % 8)) & 1;
  } else {
    std::vector<std::vector<u8>> inputs(n);
    for (std::size_t i = 0; i < n; ++i) inputs[i] = bits_of(ring_sub(y[i], x[i], fp), w);
    auto out_bits = gc_evaluate_batch(s, c, inputs, mode);
    std::vector<u8> packed((n + 7) / 8, 0);
    for (std::size_t i = 0; i < n; ++i) {
      art.bits[i] = out_bits[i][0] & 1;
      packed[i / 8] |= u8(art.bits[i] << (i % 8));
    }
    s.send(kTagPairBit, MsgKind::control, std::move(packed));
  }
  art.max.resize(n);
  for (std::size_t i = 0; i < n; ++i) art.max[i] = art.bits[i] ? x[i] : y[i];
  return art;
}

MaxPoolArtifacts secure_maxpool(Session& s, std::span<const u64> x, std::size_t rows,
                                std::size_t cols, OtMode mode) {
  if (rows % 2 || cols % 2) throw ProtocolError("maxpool: spatial dims must be even");
  if (x.size() != rows * cols) throw ProtocolError("maxpool: shape mismatch");
  auto scope = s.scoped("maxpool");
  const std::size_t orows = rows / 2, ocols = cols / 2, nw = orows * ocols;

  // round 1: top pair and bottom pair of every window in one batch
  std::vector<u64> first(2 * nw), second(2 * nw);
  for (std::size_t r = 0; r < orows; ++r)
    for (std::size_t c = 0; c < ocols; ++c) {
      std::size_t wi = r * ocols + c;
      first[wi] = x[(2 * r) * cols + 2 * c];
      second[wi] = x[(2 * r) * cols + 2 * c + 1];
      first[nw + wi] = x[(2 * r + 1) * cols + 2 * c];
      second[nw + wi] = x[(2 * r + 1) * cols + 2 * c + 1];
    }
  MaxArtifacts round1 = secure_pair_max(s, first, second, mode);

  std::span<const u64> top(round1.max.data(), nw);
  std::span<const u64> bottom(round1.max.data() + nw, nw);
  MaxArtifacts round2 = secure_pair_max(s, top, bottom, mode);

  MaxPoolArtifacts art;
  art.out = std::move(round2.max);
  art.bits.resize(3 * nw);
  for (std::size_t wi = 0; wi < nw; ++wi) {
    art.bits[3 * wi + 0] = round1.bits[wi];
    art.bits[3 * wi + 1] = round1.bits[nw + wi];
    art.bits[3 * wi + 2] = round2.bits[wi];
  }
  return art;
}

std::vector<u64> maxpool_backward(std::span<const u64> g, const std::vector<u8>& bits,
                                  std::size_t rows, std::size_t cols) {
  const std::size_t orows = rows / 2, ocols = cols / 2, nw = orows * ocols;
  if (g.size() != nw || bits.size() != 3 * nw)
    throw ProtocolError("maxpool_backward: artifact shape mismatch");
  std::vector<u64> out(rows * cols, 0);
  for (std::size_t r = 0; r < orows; ++r)
    for (std::size_t c = 0; c < ocols; ++c) {
      std::size_t wi = r * ocols + c;
      std::size_t rr, cc;
      if (bits[3 * wi + 2]) {  // top pair won the semifinal
        rr = 2 * r;
        cc = 2 * c + (bits[3 * wi + 0] ? 0 : 1);
      } else {
        rr = 2 * r + 1;
        cc = 2 * c + (bits[3 * wi + 1] ? 0 : 1);
      }
      out[rr * cols + cc] = g[wi];
    }
  return out;
}

}  // namespace mpcnn
