#include "mpcnn/supernet.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>

namespace mpcnn {

const char* unit_name(UnitKind k) {
  switch (k) {
    case UnitKind::conv3x3: return "conv3x3";
    case UnitKind::conv5x5: return "conv5x5";
    case UnitKind::fully_connected: return "fully_connected";
    case UnitKind::maxpool2x2: return "maxpool2x2";
    case UnitKind::identity: return "identity";
  }
  return "?";
}

namespace {

std::size_t unit_taps(UnitKind k) {
  return k == UnitKind::conv3x3 ? 3 : k == UnitKind::conv5x5 ? 5 : 0;
}

std::size_t unit_params(UnitKind k, std::size_t width) {
  if (k == UnitKind::fully_connected) return width * width;
  return unit_taps(k);
}

double unit_fanin(UnitKind k, std::size_t width) {
  if (k == UnitKind::fully_connected) return double(width);
  return double(unit_taps(k));
}

}  // namespace

void SupernetConfig::validate() const {
  if (input_dim == 0 || width == 0 || classes < 2 || layers == 0)
    throw ConfigError("supernet: degenerate shape");
  if (units.size() < 2) throw ConfigError("supernet: need at least two candidate units");
  for (UnitKind k : units)
    if (k == UnitKind::maxpool2x2 && pool_rows * pool_cols != width)
      throw ConfigError("supernet: pooling view must cover the layer width");
}

SoftmaxConfig TrainConfig::softmax() const {
  SoftmaxConfig s;
  s.L = L;
  return s;
}

void TrainConfig::validate() const {
  if (epochs < 0 || eta_a <= 0 || eta_w <= 0 || batch == 0 || L < 1)
    throw ConfigError("train config: all quantities must be positive");
}

std::string describe(const Architecture& a, const SupernetConfig& cfg) {
  std::string out;
  for (std::size_t i = 0; i < a.units.size(); ++i) {
    if (i) out += " -> ";
    out += "layer" + std::to_string(i) + ":" + unit_name(cfg.units.at(a.units[i]));
  }
  return out;
}

Architecture argmax_architecture(const std::vector<double>& alpha, std::size_t layers,
                                 std::size_t m) {
  Architecture a;
  for (std::size_t l = 0; l < layers; ++l) {
    u32 best = 0;
    for (u32 j = 1; j < m; ++j)
      if (alpha[l * m + j] > alpha[l * m + best]) best = j;  // ties keep the lowest
    a.units.push_back(best);
  }
  return a;
}

namespace {

constexpr std::size_t kPad = std::size_t(-1);

// out is (src_cols x src_rows)
std::vector<std::size_t> transpose_idx(std::size_t src_rows, std::size_t src_cols) {
  std::vector<std::size_t> idx(src_rows * src_cols);
  for (std::size_t c = 0; c < src_cols; ++c)
    for (std::size_t r = 0; r < src_rows; ++r) idx[c * src_rows + r] = r * src_cols + c;
  return idx;
}

// rows (b, i), cols t: x[b, i + (t - h)] forward, x[b, i - (t - h)] flipped
std::vector<std::size_t> im2col_idx(std::size_t batch, std::size_t width, std::size_t taps,
                                    bool flip) {
  const std::ptrdiff_t h = std::ptrdiff_t(taps / 2);
  std::vector<std::size_t> idx(batch * width * taps);
  std::size_t at = 0;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < width; ++i)
      for (std::size_t t = 0; t < taps; ++t) {
        std::ptrdiff_t off = std::ptrdiff_t(t) - h;
        std::ptrdiff_t src = std::ptrdiff_t(i) + (flip ? -off : off);
        idx[at++] = (src < 0 || src >= std::ptrdiff_t(width)) ? kPad
                                                              : b * width + std::size_t(src);
      }
  return idx;
}

// ---------------------------------------------------------------------------
// Backends. All three expose the same vocabulary of tensor primitives; the
// engine below is a single graph template, which is what guarantees that the
// secure run and the lockstep oracle issue identical protocol sequences.
// ---------------------------------------------------------------------------

struct SecureBackend {
  Session& s;
  SoftmaxConfig scfg;
  OtMode ot = OtMode::dealer;

  using Vec = std::vector<u64>;
  struct Relu {
    std::vector<u64> derivative;
  };
  struct ReluResult {
    Vec out;
    Relu handle;
  };
  using Soft = SoftmaxArtifacts;

  const FixedPointConfig& fp() const { return s.fp(); }

  Vec zeros(std::size_t n) { return Vec(n, 0); }
  Vec const_vec(std::size_t n, double c) {
    return Vec(n, s.me() == PartyId::p0 ? encode(c, fp()) : 0);
  }
  Vec gather(const Vec& x, const std::vector<std::size_t>& idx) {
    Vec out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = idx[i] == kPad ? 0 : x[idx[i]];
    return out;
  }
  void add_at(Vec& dst, const std::vector<std::size_t>& idx, const Vec& src) {
    for (std::size_t i = 0; i < idx.size(); ++i)
      if (idx[i] != kPad) dst[idx[i]] = ring_add(dst[idx[i]], src[i], fp());
  }
  Vec add(const Vec& a, const Vec& b) {
    Vec out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = ring_add(a[i], b[i], fp());
    return out;
  }
  Vec sub(const Vec& a, const Vec& b) {
    Vec out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = ring_sub(a[i], b[i], fp());
    return out;
  }
  void add_inplace(Vec& a, const Vec& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = ring_add(a[i], b[i], fp());
  }
  void sub_inplace(Vec& a, const Vec& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = ring_sub(a[i], b[i], fp());
  }
  Vec concat(const std::vector<const Vec*>& parts) {
    Vec out;
    for (const Vec* p : parts) out.insert(out.end(), p->begin(), p->end());
    return out;
  }
  Vec slice(const Vec& x, std::size_t from, std::size_t len) {
    return Vec(x.begin() + std::ptrdiff_t(from), x.begin() + std::ptrdiff_t(from + len));
  }
  Vec matmul(const Vec& x, const Vec& y, std::size_t n, std::size_t k, std::size_t m,
             bool rescale = true) {
    return matmul_shares(s, x, y, n, k, m, rescale);
  }
  Vec mul(const Vec& x, const Vec& y, bool rescale) {
    Vec z = mul_shares(s, x, y);
    if (rescale) truncate_vec(s, z, fp().f);
    return z;
  }
  Vec scale_real(const Vec& x, double c) {
    u64 cr = encode(c, fp());
    Vec out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = ring_mul(x[i], cr, fp());
    truncate_vec(s, out, fp().f);
    return out;
  }
  ReluResult relu(const Vec& x) {
    ReluArtifacts a = secure_relu(s, x, ot);
    return {std::move(a.output), {std::move(a.derivative)}};
  }
  const Vec& relu_out(const ReluResult& r) { return r.out; }
  Vec relu_backward(const Vec& g, const Relu& r) {
    return mul_shares(s, g, r.derivative);  // integer indicator, no rescale
  }
  std::pair<Vec, std::vector<u8>> pair_max(const Vec& x, const Vec& y) {
    MaxArtifacts a = secure_pair_max(s, x, y, ot);
    return {std::move(a.max), std::move(a.bits)};
  }
  Soft softmax_rows(const Vec& x, std::size_t rows, std::size_t n) {
    return approx_softmax_rows(s, x, rows, n, scfg, ot);
  }
  const Vec& soft_p(const Soft& a) { return a.p; }
  Vec ce_loss(const Vec& p, const Vec& y, std::size_t rows, std::size_t n) {
    return cross_entropy_loss(s, p, y, rows, n, ot);
  }
  Vec softmax_ce_backward(const Soft& a, const Vec& y) {
    return mpcnn::softmax_ce_backward(s, a, y, scfg);
  }
  Vec softmax_backward(const Vec& dldp, const Soft& a) {
    return mpcnn::softmax_backward(s, dldp, a, scfg);
  }
  Vec init_weights(std::size_t count, double bound) {
    Vec out(count);
    for (auto& v : out) v = s.triples().next_init(bound);
    return out;
  }
  u64 shuffle_below(u64 bound) { return s.shared_rng().next_below(bound); }
};

// Tracked pair (reconstructed value, party 0 share); party 1's share is the
// difference, so the mirror sees exactly what each party would compute.
struct MirrorVec {
  std::vector<u64> v, s0;
  std::size_t size() const { return v.size(); }
  void resize(std::size_t n) {
    v.assign(n, 0);
    s0.assign(n, 0);
  }
};

struct MirrorBackend {
  FixedPointConfig fpc;
  SoftmaxConfig scfg;
  DealerGenerator gen;
  Prg mask;    // party 0's mask stream
  Prg shared;  // joint shuffle stream
  DealerPlan* record = nullptr;  // when set, tallies dealer consumption

  MirrorBackend(const FixedPointConfig& f, const SoftmaxConfig& sc, u64 dealer_seed,
                const SessionConfig& scfg_in)
      : fpc(f),
        scfg(sc),
        gen(dealer_seed, f),
        mask(derive_stream(scfg_in.party_seed, "masks")),
        shared(derive_stream(scfg_in.seed, "shared")) {}

  using Vec = MirrorVec;
  struct Relu {
    MirrorVec ind;
  };
  struct Soft {
    std::size_t rows = 0, n = 0;
    MirrorVec p, zt, ind;
  };

  const FixedPointConfig& fp() const { return fpc; }
  u64 msk() const { return fpc.mask(); }

  // --- bookkeeping mirrors of the share-level primitives ---

  void trunc_pair(MirrorVec& x, int k) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      u64 s1 = ring_sub(x.v[i], x.s0[i], fpc);
      x.s0[i] = truncate_share(x.s0[i], k, PartyId::p0, fpc);
      s1 = truncate_share(s1, k, PartyId::p1, fpc);
      x.v[i] = ring_add(x.s0[i], s1, fpc);
    }
  }

  MirrorVec beaver(const MirrorVec& x, const MirrorVec& y) {
    MirrorVec z;
    z.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      auto t = gen.next_scalar();
      if (record) ++record->scalar_triples;
      u64 e = ring_sub(x.v[i], t.a, fpc);
      u64 f = ring_sub(y.v[i], t.b, fpc);
      u64 zv = ring_add(t.c, ring_mul(e, y.v[i], fpc), fpc);
      zv = ring_add(zv, ring_mul(x.v[i], f, fpc), fpc);
      zv = ring_sub(zv, ring_mul(e, f, fpc), fpc);
      u64 z0 = ring_add(t.c0, ring_mul(e, y.s0[i], fpc), fpc);
      z0 = ring_add(z0, ring_mul(x.s0[i], f, fpc), fpc);
      z.v[i] = zv;
      z.s0[i] = z0;
    }
    return z;
  }

  Vec zeros(std::size_t n) {
    Vec x;
    x.resize(n);
    return x;
  }
  Vec const_vec(std::size_t n, double c) {
    Vec x;
    x.resize(n);
    u64 cv = encode(c, fpc);
    for (std::size_t i = 0; i < n; ++i) x.v[i] = x.s0[i] = cv;
    return x;
  }
  Vec gather(const Vec& x, const std::vector<std::size_t>& idx) {
    Vec out;
    out.resize(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i)
      if (idx[i] != kPad) {
        out.v[i] = x.v[idx[i]];
        out.s0[i] = x.s0[idx[i]];
      }
    return out;
  }
  void add_at(Vec& dst, const std::vector<std::size_t>& idx, const Vec& src) {
    for (std::size_t i = 0; i < idx.size(); ++i)
      if (idx[i] != kPad) {
        dst.v[idx[i]] = ring_add(dst.v[idx[i]], src.v[i], fpc);
        dst.s0[idx[i]] = ring_add(dst.s0[idx[i]], src.s0[i], fpc);
      }
  }
  Vec add(const Vec& a, const Vec& b) {
    Vec out;
    out.resize(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      out.v[i] = ring_add(a.v[i], b.v[i], fpc);
      out.s0[i] = ring_add(a.s0[i], b.s0[i], fpc);
    }
    return out;
  }
  Vec sub(const Vec& a, const Vec& b) {
    Vec out;
    out.resize(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      out.v[i] = ring_sub(a.v[i], b.v[i], fpc);
      out.s0[i] = ring_sub(a.s0[i], b.s0[i], fpc);
    }
    return out;
  }
  void add_inplace(Vec& a, const Vec& b) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      a.v[i] = ring_add(a.v[i], b.v[i], fpc);
      a.s0[i] = ring_add(a.s0[i], b.s0[i], fpc);
    }
  }
  void sub_inplace(Vec& a, const Vec& b) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      a.v[i] = ring_sub(a.v[i], b.v[i], fpc);
      a.s0[i] = ring_sub(a.s0[i], b.s0[i], fpc);
    }
  }
  Vec concat(const std::vector<const Vec*>& parts) {
    Vec out;
    for (const Vec* p : parts) {
      out.v.insert(out.v.end(), p->v.begin(), p->v.end());
      out.s0.insert(out.s0.end(), p->s0.begin(), p->s0.end());
    }
    return out;
  }
  Vec slice(const Vec& x, std::size_t from, std::size_t len) {
    Vec out;
    out.v.assign(x.v.begin() + std::ptrdiff_t(from), x.v.begin() + std::ptrdiff_t(from + len));
    out.s0.assign(x.s0.begin() + std::ptrdiff_t(from),
                  x.s0.begin() + std::ptrdiff_t(from + len));
    return out;
  }

  Vec matmul(const Vec& x, const Vec& y, std::size_t n, std::size_t k, std::size_t m,
             bool rescale = true) {
    auto t = gen.next_matrix(n, k, m);
    if (record) record->matrices.push_back({n, k, m});
    std::vector<u64> e(n * k), f(k * m);
    for (std::size_t i = 0; i < e.size(); ++i) e[i] = ring_sub(x.v[i], t.a[i], fpc);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = ring_sub(y.v[i], t.b[i], fpc);
    std::vector<u64> tmp(n * m);
    Vec z;
    z.resize(n * m);
    auto accum = [&](std::vector<u64>& dst, const u64* a, const u64* b) {
      ring_matmul(a, b, tmp.data(), n, k, m, fpc);
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = ring_add(dst[i], tmp[i], fpc);
    };
    z.v = t.c;
    accum(z.v, e.data(), y.v.data());
    accum(z.v, x.v.data(), f.data());
    ring_matmul(e.data(), f.data(), tmp.data(), n, k, m, fpc);
    for (std::size_t i = 0; i < z.v.size(); ++i) z.v[i] = ring_sub(z.v[i], tmp[i], fpc);
    z.s0 = t.c0;
    accum(z.s0, e.data(), y.s0.data());
    accum(z.s0, x.s0.data(), f.data());
    if (rescale) trunc_pair(z, fpc.f);
    return z;
  }
  Vec mul(const Vec& x, const Vec& y, bool rescale) {
    Vec z = beaver(x, y);
    if (rescale) trunc_pair(z, fpc.f);
    return z;
  }
  Vec scale_real(const Vec& x, double c) {
    u64 cr = encode(c, fpc);
    Vec out;
    out.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      u64 s1 = ring_sub(x.v[i], x.s0[i], fpc);
      u64 a0 = truncate_share(ring_mul(x.s0[i], cr, fpc), fpc.f, PartyId::p0, fpc);
      u64 a1 = truncate_share(ring_mul(s1, cr, fpc), fpc.f, PartyId::p1, fpc);
      out.s0[i] = a0;
      out.v[i] = ring_add(a0, a1, fpc);
    }
    return out;
  }

  void count_gc(std::size_t elements) {
    // one dealer OT per evaluator input wire; every circuit feeds party 1
    // exactly one ring word
    if (record) record->ot_count += elements * std::size_t(fpc.l);
  }

  // relu keeps party 0's share; the derivative mask is one draw per element
  std::pair<Vec, Relu> relu_full(const Vec& x, bool clip) {
    const i64 xm = i64(encode(scfg.xmax, fpc));
    Vec out, ind;
    out.resize(x.size());
    ind.resize(x.size());
    count_gc(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      u64 rb = mask.next() & msk();
      i64 sx = to_signed(x.v[i], fpc);
      bool pos = sx > 0;
      bool hit = clip && sx >= xm;
      out.v[i] = !pos ? 0 : hit ? u64(xm) : x.v[i];
      out.s0[i] = x.s0[i];
      ind.v[i] = (pos && !hit) ? 1 : 0;
      ind.s0[i] = rb;
    }
    return {std::move(out), Relu{std::move(ind)}};
  }
  struct ReluResult {
    Vec out;
    Relu handle;
  };

  ReluResult relu(const Vec& x) {
    auto [o, r] = relu_full(x, false);
    return {std::move(o), std::move(r)};
  }
  const Vec& relu_out(const ReluResult& r) { return r.out; }

  Vec relu_backward(const Vec& g, const Relu& r) {
    return beaver(g, r.ind);  // integer indicator, no rescale
  }

  std::pair<Vec, std::vector<u8>> pair_max(const Vec& x, const Vec& y) {
    count_gc(x.size());
    std::vector<u8> bits(x.size());
    Vec out;
    out.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      u64 d = ring_sub(y.v[i], x.v[i], fpc);
      bits[i] = u8((d >> (fpc.l - 1)) & 1);  // sign of y - x, so 1 means x > y
      out.v[i] = bits[i] ? x.v[i] : y.v[i];
      out.s0[i] = bits[i] ? x.s0[i] : y.s0[i];
    }
    return {std::move(out), std::move(bits)};
  }

  Vec reciprocal_scaled(const Vec& d, int scale_c, double y0, int iters) {
    Vec y;
    y.resize(d.size());
    u64 init = encode(y0, fpc);
    for (std::size_t i = 0; i < y.size(); ++i) y.v[i] = y.s0[i] = init;
    const u64 two = encode(2.0, fpc);
    for (int it = 0; it < iters; ++it) {
      Vec t = beaver(d, y);
      trunc_pair(t, fpc.f + scale_c);
      Vec u;
      u.resize(t.size());
      for (std::size_t i = 0; i < t.size(); ++i) {
        u.v[i] = ring_sub(two, t.v[i], fpc);
        u.s0[i] = ring_sub(two, t.s0[i], fpc);
      }
      y = beaver(y, u);
      trunc_pair(y, fpc.f);
    }
    return y;
  }

  Soft softmax_rows(const Vec& x, std::size_t rows, std::size_t n) {
    const std::size_t total = rows * n;
    auto [zt, clip] = relu_full(x, true);

    // bounded re-share: party 0's half becomes a fresh window draw
    const u64 window = u64(1) << scfg.mask_window_bits;
    std::vector<u64> piece0(total), piece1(total);
    for (std::size_t i = 0; i < total; ++i) {
      u64 w0 = mask.next_below(window);
      piece0[i] = w0;
      piece1[i] = ring_sub(zt.v[i], w0, fpc);
    }
    Vec a, b;
    a.resize(total);
    b.resize(total);
    for (std::size_t i = 0; i < total; ++i) {
      u64 g0 = encode(hat_exp_raw(to_signed(piece0[i], fpc) * fpc.ulp(), scfg.L), fpc);
      u64 g1 = encode(hat_exp_raw(to_signed(piece1[i], fpc) * fpc.ulp(), scfg.L), fpc);
      a.v[i] = a.s0[i] = g0;  // party 0's trivial sharing
      b.v[i] = g1;            // party 1's trivial sharing
    }
    Vec g = beaver(a, b);
    trunc_pair(g, fpc.f);

    Vec d;
    d.resize(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t i = 0; i < n; ++i) {
        d.v[r] = ring_add(d.v[r], g.v[r * n + i], fpc);
        d.s0[r] = ring_add(d.s0[r], g.s0[r * n + i], fpc);
      }

    const double wreal = std::ldexp(1.0, scfg.mask_window_bits - fpc.f);
    const double gmax = hat_exp_raw(scfg.xmax, scfg.L) * hat_exp_raw(wreal, scfg.L);
    const double dmax = double(n) * gmax;
    const double dmin = double(n) * (1.0 - wreal);
    const int c = int(std::ceil(std::log2(dmax)));
    const double spread = dmax / dmin;
    const int iters = std::max(
        scfg.recip_iters, int(std::ceil(std::log2(std::log(1e3) * 2.0 * spread))));
    Vec w = reciprocal_scaled(d, c, 1.0, iters);

    Vec wb;
    wb.resize(total);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t i = 0; i < n; ++i) {
        wb.v[r * n + i] = w.v[r];
        wb.s0[r * n + i] = w.s0[r];
      }
    Vec p = beaver(g, wb);
    trunc_pair(p, fpc.f + c);

    Soft art;
    art.rows = rows;
    art.n = n;
    art.p = std::move(p);
    art.zt = std::move(zt);
    art.ind = std::move(clip.ind);
    return art;
  }
  const Vec& soft_p(const Soft& a) { return a.p; }

  void add_const_p0(Vec& x, double c) {
    u64 cr = encode(c, fpc);
    for (std::size_t i = 0; i < x.size(); ++i) {
      x.v[i] = ring_add(x.v[i], cr, fpc);
      x.s0[i] = ring_add(x.s0[i], cr, fpc);
    }
  }

  Vec scale_const_both(const Vec& x, double c) { return scale_real(x, c); }

  Vec log_mirror(const Vec& q) {
    constexpr double kLnPoly[5] = {-1.7306316977197591, 2.7922552255843409,
                                   -1.4424810126033623, 0.4358618497762522,
                                   -0.0548628528620934};
    constexpr double kLn2 = 0.6931471805599453;
    constexpr double kClamp = 1e-4;
    const std::size_t total = q.size();

    Vec shifted = q;
    add_const_p0(shifted, -kClamp);
    auto [qc, clampr] = relu_full(shifted, false);
    (void)clampr;
    add_const_p0(qc, kClamp);

    Vec m_sh, e_sh;
    m_sh.resize(total);
    e_sh.resize(total);
    count_gc(total);
    for (std::size_t i = 0; i < total; ++i) {
      u64 rm = mask.next() & msk();
      u64 re = mask.next() & msk();
      u64 sv = qc.v[i] & msk();
      int e = 0;
      for (int bit = fpc.l - 1; bit >= 0; --bit)
        if ((sv >> bit) & 1) {
          e = bit;
          break;
        }
      u64 mant = e >= fpc.f ? sv >> (e - fpc.f) : (sv << (fpc.f - e)) & msk();
      u64 ev = ((u64(e) - u64(fpc.f)) << fpc.f) & msk();
      m_sh.v[i] = mant;
      m_sh.s0[i] = rm;
      e_sh.v[i] = ev;
      e_sh.s0[i] = re;
    }

    Vec m2 = mul(m_sh, m_sh, true);
    Vec m3 = mul(m2, m_sh, true);
    Vec m4 = mul(m2, m2, true);
    Vec out = scale_const_both(e_sh, kLn2);
    auto acc = [&](const Vec& term, double coeff) {
      Vec t = scale_const_both(term, coeff);
      add_inplace(out, t);
    };
    acc(m_sh, kLnPoly[1]);
    acc(m2, kLnPoly[2]);
    acc(m3, kLnPoly[3]);
    acc(m4, kLnPoly[4]);
    add_const_p0(out, kLnPoly[0]);
    return out;
  }

  Vec ce_loss(const Vec& p, const Vec& y, std::size_t rows, std::size_t n) {
    Vec prod = mul(p, y, true);
    Vec q;
    q.resize(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t i = 0; i < n; ++i) {
        q.v[r] = ring_add(q.v[r], prod.v[r * n + i], fpc);
        q.s0[r] = ring_add(q.s0[r], prod.s0[r * n + i], fpc);
      }
    Vec lnq = log_mirror(q);
    Vec one;
    one.resize(1);
    for (std::size_t r = 0; r < rows; ++r) {
      one.v[0] = ring_add(one.v[0], lnq.v[r], fpc);
      one.s0[0] = ring_add(one.s0[0], lnq.s0[r], fpc);
    }
    Vec scaled = scale_const_both(one, 1.0 / double(rows));
    scaled.v[0] = ring_neg(scaled.v[0], fpc);
    scaled.s0[0] = ring_neg(scaled.s0[0], fpc);
    return scaled;
  }

  Vec grad_tail(Vec e, const Soft& art) {
    Vec denom = art.zt;
    add_const_p0(denom, double(scfg.L));
    const int c = int(std::ceil(std::log2(scfg.L + scfg.xmax)));
    Vec inv = reciprocal_scaled(denom, c, 1.0, scfg.recip_iters);
    Vec m = beaver(e, inv);
    trunc_pair(m, fpc.f + c);
    for (std::size_t i = 0; i < m.size(); ++i) {
      m.v[i] = ring_mul(m.v[i], u64(scfg.L), fpc);
      m.s0[i] = ring_mul(m.s0[i], u64(scfg.L), fpc);
    }
    return beaver(m, art.ind);
  }

  Vec softmax_ce_backward(const Soft& art, const Vec& y) {
    Vec e = sub(art.p, y);
    return grad_tail(std::move(e), art);
  }

  Vec softmax_backward(const Vec& dldp, const Soft& art) {
    Vec t = mul(dldp, art.p, true);
    Vec srow;
    srow.resize(art.rows);
    for (std::size_t r = 0; r < art.rows; ++r)
      for (std::size_t i = 0; i < art.n; ++i) {
        srow.v[r] = ring_add(srow.v[r], t.v[r * art.n + i], fpc);
        srow.s0[r] = ring_add(srow.s0[r], t.s0[r * art.n + i], fpc);
      }
    Vec sb;
    sb.resize(t.size());
    for (std::size_t r = 0; r < art.rows; ++r)
      for (std::size_t i = 0; i < art.n; ++i) {
        sb.v[r * art.n + i] = srow.v[r];
        sb.s0[r * art.n + i] = srow.s0[r];
      }
    Vec ps = mul(art.p, sb, true);
    Vec e = sub(t, ps);
    return grad_tail(std::move(e), art);
  }

  Vec init_weights(std::size_t count, double bound) {
    if (record) {
      if (!record->inits.empty() && record->inits.back().second == bound)
        record->inits.back().first += count;
      else
        record->inits.push_back({count, bound});
    }
    Vec out;
    out.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      auto t = gen.next_init(bound);
      out.v[i] = t.v;
      out.s0[i] = t.v0;
    }
    return out;
  }
  u64 shuffle_below(u64 bound) { return shared.next_below(bound); }
};

struct RealBackend {
  SoftmaxConfig scfg;
  DealerGenerator gen;  // replayed so all backends start from the same weights
  Prg shared;

  RealBackend(const FixedPointConfig& f, const SoftmaxConfig& sc, u64 dealer_seed,
              const SessionConfig& scfg_in)
      : scfg(sc), gen(dealer_seed, f), shared(derive_stream(scfg_in.seed, "shared")) {}

  using Vec = std::vector<double>;
  struct Relu {
    Vec ind;
  };
  struct Soft {
    std::size_t rows = 0, n = 0;
    Vec p, zt, ind;
  };

  Vec zeros(std::size_t n) { return Vec(n, 0.0); }
  Vec const_vec(std::size_t n, double c) { return Vec(n, c); }
  Vec gather(const Vec& x, const std::vector<std::size_t>& idx) {
    Vec out(idx.size(), 0.0);
    for (std::size_t i = 0; i < idx.size(); ++i)
      if (idx[i] != kPad) out[i] = x[idx[i]];
    return out;
  }
  void add_at(Vec& dst, const std::vector<std::size_t>& idx, const Vec& src) {
    for (std::size_t i = 0; i < idx.size(); ++i)
      if (idx[i] != kPad) dst[idx[i]] += src[i];
  }
  Vec add(const Vec& a, const Vec& b) {
    Vec out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
  }
  Vec sub(const Vec& a, const Vec& b) {
    Vec out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
  }
  void add_inplace(Vec& a, const Vec& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  }
  void sub_inplace(Vec& a, const Vec& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] -= b[i];
  }
  Vec concat(const std::vector<const Vec*>& parts) {
    Vec out;
    for (const Vec* p : parts) out.insert(out.end(), p->begin(), p->end());
    return out;
  }
  Vec slice(const Vec& x, std::size_t from, std::size_t len) {
    return Vec(x.begin() + std::ptrdiff_t(from), x.begin() + std::ptrdiff_t(from + len));
  }
  Vec matmul(const Vec& x, const Vec& y, std::size_t n, std::size_t k, std::size_t m,
             bool rescale = true) {
    (void)rescale;
    Vec out(n * m, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t t = 0; t < k; ++t) {
        double xv = x[i * k + t];
        if (xv == 0) continue;
        for (std::size_t j = 0; j < m; ++j) out[i * m + j] += xv * y[t * m + j];
      }
    return out;
  }
  Vec mul(const Vec& x, const Vec& y, bool) {
    Vec out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
    return out;
  }
  Vec scale_real(const Vec& x, double c) {
    Vec out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * c;
    return out;
  }

  struct ReluResult {
    Vec out;
    Relu handle;
  };
  ReluResult relu(const Vec& x) {
    ReluResult r;
    r.out.resize(x.size());
    r.handle.ind.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      r.out[i] = x[i] > 0 ? x[i] : 0.0;
      r.handle.ind[i] = x[i] > 0 ? 1.0 : 0.0;
    }
    return r;
  }
  const Vec& relu_out(const ReluResult& r) { return r.out; }
  Vec relu_backward(const Vec& g, const Relu& r) {
    Vec out(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) out[i] = g[i] * r.ind[i];
    return out;
  }
  std::pair<Vec, std::vector<u8>> pair_max(const Vec& x, const Vec& y) {
    std::vector<u8> bits(x.size());
    Vec out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      bits[i] = x[i] > y[i] ? 1 : 0;
      out[i] = bits[i] ? x[i] : y[i];
    }
    return {std::move(out), std::move(bits)};
  }
  Soft softmax_rows(const Vec& x, std::size_t rows, std::size_t n) {
    Soft a;
    a.rows = rows;
    a.n = n;
    a.p.resize(rows * n);
    a.zt.resize(rows * n);
    a.ind.resize(rows * n);
    for (std::size_t r = 0; r < rows; ++r) {
      double d = 0;
      for (std::size_t i = 0; i < n; ++i) {
        double z = x[r * n + i];
        double zt = std::clamp(z, 0.0, scfg.xmax);
        a.zt[r * n + i] = zt;
        a.ind[r * n + i] = (z > 0 && z < scfg.xmax) ? 1.0 : 0.0;
        a.p[r * n + i] = hat_exp_raw(zt, scfg.L);
        d += a.p[r * n + i];
      }
      for (std::size_t i = 0; i < n; ++i) a.p[r * n + i] /= d;
    }
    return a;
  }
  const Vec& soft_p(const Soft& a) { return a.p; }
  Vec ce_loss(const Vec& p, const Vec& y, std::size_t rows, std::size_t n) {
    double acc = 0;
    for (std::size_t r = 0; r < rows; ++r) {
      double q = 0;
      for (std::size_t i = 0; i < n; ++i) q += p[r * n + i] * y[r * n + i];
      acc += std::log(std::max(q, 1e-4));
    }
    return {-acc / double(rows)};
  }
  Vec grad_tail(Vec e, const Soft& art) {
    for (std::size_t i = 0; i < e.size(); ++i)
      e[i] *= scfg.L / (scfg.L + art.zt[i]) * art.ind[i];
    return e;
  }
  Vec softmax_ce_backward(const Soft& art, const Vec& y) {
    Vec e = sub(art.p, y);
    return grad_tail(std::move(e), art);
  }
  Vec softmax_backward(const Vec& dldp, const Soft& art) {
    Vec t = mul(dldp, art.p, true);
    Vec e(t.size());
    for (std::size_t r = 0; r < art.rows; ++r) {
      double s = 0;
      for (std::size_t i = 0; i < art.n; ++i) s += t[r * art.n + i];
      for (std::size_t i = 0; i < art.n; ++i)
        e[r * art.n + i] = t[r * art.n + i] - art.p[r * art.n + i] * s;
    }
    return grad_tail(std::move(e), art);
  }
  Vec init_weights(std::size_t count, double bound) {
    Vec out(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = decode(gen.next_init(bound).v, gen.fp());
    return out;
  }
  u64 shuffle_below(u64 bound) { return shared.next_below(bound); }
};

// ---------------------------------------------------------------------------
// The search graph, written once against the backend vocabulary.
// ---------------------------------------------------------------------------

template <class B>
struct Engine {
  B& b;
  const SupernetConfig& cfg;

  using Vec = typename B::Vec;
  using ReluResult = typename B::ReluResult;
  using Relu = typename B::Relu;
  using Soft = typename B::Soft;

  struct Params {
    Vec stem, head;
    std::vector<Vec> alpha;
    std::vector<std::vector<Vec>> w;
  };

  struct UnitFwd {
    Vec out;
    Relu act{};
    Vec cols;                    // convolution input patches
    std::vector<u8> hbits, vbits;  // pooling comparison outcomes
  };
  struct LayerFwd {
    Soft soft;
    Vec in;  // layer input (batch x width)
    Vec units_cat;
    std::vector<UnitFwd> units;
    Vec out;
  };
  struct NetFwd {
    ReluResult stem_act;
    std::vector<LayerFwd> layers;
    Soft head_soft;
  };

  struct Grads {
    Vec stem, head;
    std::vector<Vec> alpha;
    std::vector<std::vector<Vec>> w;
  };

  std::size_t M() const { return cfg.unit_count(); }

  // canonical parameter order: stem, layer-major unit tensors, head, alpha
  Params init() {
    Params p;
    p.stem = b.init_weights(cfg.input_dim * cfg.width, 1.0 / std::sqrt(double(cfg.input_dim)));
    p.w.resize(cfg.layers);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      p.w[l].resize(M());
      for (std::size_t j = 0; j < M(); ++j) {
        std::size_t count = unit_params(cfg.units[j], cfg.width);
        if (count)
          p.w[l][j] =
              b.init_weights(count, 1.0 / std::sqrt(unit_fanin(cfg.units[j], cfg.width)));
      }
    }
    p.head = b.init_weights(cfg.width * cfg.classes, 1.0 / std::sqrt(double(cfg.width)));
    for (std::size_t l = 0; l < cfg.layers; ++l) p.alpha.push_back(b.const_vec(M(), 1.0));
    return p;
  }

  UnitFwd unit_forward(UnitKind kind, const Vec& w, const Vec& a, std::size_t batch) {
    UnitFwd u;
    const std::size_t bw = batch * cfg.width;
    switch (kind) {
      case UnitKind::conv3x3:
      case UnitKind::conv5x5: {
        std::size_t taps = unit_taps(kind);
        u.cols = b.gather(a, im2col_idx(batch, cfg.width, taps, false));
        Vec pre = b.matmul(u.cols, w, bw, taps, 1);
        auto r = b.relu(pre);
        u.out = r.out;
        u.act = std::move(r.handle);
        break;
      }
      case UnitKind::fully_connected: {
        Vec pre = b.matmul(a, w, batch, cfg.width, cfg.width);
        auto r = b.relu(pre);
        u.out = r.out;
        u.act = std::move(r.handle);
        break;
      }
      case UnitKind::identity:
        u.out = a;
        break;
      case UnitKind::maxpool2x2: {
        const std::size_t R = cfg.pool_rows, C = cfg.pool_cols;
        // horizontal neighbours, then vertical neighbours of the row maxima
        std::vector<std::size_t> i1, i2;
        for (std::size_t s = 0; s < batch; ++s)
          for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c + 1 < C; ++c) {
              i1.push_back(s * R * C + r * C + c);
              i2.push_back(s * R * C + r * C + c + 1);
            }
        auto [hmax, hbits] = b.pair_max(b.gather(a, i1), b.gather(a, i2));
        u.hbits = std::move(hbits);
        // H(s, r, c) = hmax entry for c < C-1, else the clamped border cell
        Vec cat = b.concat({&hmax, &a});
        std::vector<std::size_t> ih(bw);
        const std::size_t hstride = R * (C - 1);
        for (std::size_t s = 0; s < batch; ++s)
          for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c < C; ++c)
              ih[s * R * C + r * C + c] = c + 1 < C
                                              ? s * hstride + r * (C - 1) + c
                                              : hmax.size() + s * R * C + r * C + c;
        Vec H = b.gather(cat, ih);
        std::vector<std::size_t> j1, j2;
        for (std::size_t s = 0; s < batch; ++s)
          for (std::size_t r = 0; r + 1 < R; ++r)
            for (std::size_t c = 0; c < C; ++c) {
              j1.push_back(s * R * C + r * C + c);
              j2.push_back(s * R * C + (r + 1) * C + c);
            }
        auto [vmax, vbits] = b.pair_max(b.gather(H, j1), b.gather(H, j2));
        u.vbits = std::move(vbits);
        Vec cat2 = b.concat({&vmax, &H});
        std::vector<std::size_t> io(bw);
        const std::size_t vstride = (R - 1) * C;
        for (std::size_t s = 0; s < batch; ++s)
          for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c < C; ++c)
              io[s * R * C + r * C + c] = r + 1 < R ? s * vstride + r * C + c
                                                    : vmax.size() + s * R * C + r * C + c;
        u.out = b.gather(cat2, io);
        u.cols = std::move(H);  // reused by the backward routing
        break;
      }
    }
    return u;
  }

  // gradient of the stride-1 window maximum: route along the recorded bits
  Vec pool_backward(const UnitFwd& u, const Vec& dout, std::size_t batch) {
    const std::size_t R = cfg.pool_rows, C = cfg.pool_cols;
    const std::size_t bw = batch * R * C;
    std::vector<std::size_t> into_h(bw);
    const std::size_t vstride = (R - 1) * C;
    for (std::size_t s = 0; s < batch; ++s)
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) {
          std::size_t cell = s * R * C + r * C + c;
          if (r + 1 < R) {
            u8 bit = u.vbits[s * vstride + r * C + c];
            into_h[cell] = s * R * C + (bit ? r : r + 1) * C + c;
          } else {
            into_h[cell] = cell;
          }
        }
    Vec dH = b.zeros(bw);
    b.add_at(dH, into_h, dout);
    std::vector<std::size_t> into_x(bw);
    const std::size_t hstride = R * (C - 1);
    for (std::size_t s = 0; s < batch; ++s)
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) {
          std::size_t cell = s * R * C + r * C + c;
          if (c + 1 < C) {
            u8 bit = u.hbits[s * hstride + r * (C - 1) + c];
            into_x[cell] = s * R * C + r * C + (bit ? c : c + 1);
          } else {
            into_x[cell] = cell;
          }
        }
    Vec dx = b.zeros(bw);
    b.add_at(dx, into_x, dH);
    return dx;
  }

  LayerFwd layer_forward(Params& p, std::size_t l, const Vec& a, std::size_t batch) {
    LayerFwd lf;
    lf.in = a;
    lf.soft = b.softmax_rows(p.alpha[l], 1, M());
    std::vector<const Vec*> outs;
    for (std::size_t j = 0; j < M(); ++j)
      lf.units.push_back(unit_forward(cfg.units[j], p.w[l][j], a, batch));
    for (const auto& u : lf.units) outs.push_back(&u.out);
    lf.units_cat = b.concat(outs);
    lf.out = b.matmul(b.soft_p(lf.soft), lf.units_cat, 1, M(), batch * cfg.width);
    return lf;
  }

  NetFwd forward(Params& p, const Vec& x, std::size_t batch) {
    NetFwd f;
    Vec pre = b.matmul(x, p.stem, batch, cfg.input_dim, cfg.width);
    f.stem_act = b.relu(pre);
    Vec a = b.relu_out(f.stem_act);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      f.layers.push_back(layer_forward(p, l, a, batch));
      a = f.layers.back().out;
    }
    Vec logits = b.matmul(a, p.head, batch, cfg.width, cfg.classes);
    f.head_soft = b.softmax_rows(logits, batch, cfg.classes);
    return f;
  }

  Grads backward(Params& p, NetFwd& f, const Vec& x, const Vec& y, std::size_t batch) {
    Grads g;
    g.alpha.resize(cfg.layers);
    g.w.resize(cfg.layers);
    const std::size_t bw = batch * cfg.width;

    Vec dz = b.softmax_ce_backward(f.head_soft, y);
    const Vec& an =
        cfg.layers ? f.layers.back().out : b.relu_out(f.stem_act);
    g.head = b.matmul(b.gather(an, transpose_idx(batch, cfg.width)), dz, cfg.width, batch,
                      cfg.classes);
    Vec da = b.matmul(dz, b.gather(p.head, transpose_idx(cfg.width, cfg.classes)), batch,
                      cfg.classes, cfg.width);

    for (std::size_t l = cfg.layers; l-- > 0;) {
      LayerFwd& lf = f.layers[l];
      g.w[l].resize(M());
      Vec dp = b.matmul(lf.units_cat, da, M(), bw, 1);
      g.alpha[l] = b.softmax_backward(dp, lf.soft);
      Vec du = b.matmul(b.soft_p(lf.soft), da, M(), 1, bw);
      Vec da_prev = b.zeros(bw);
      for (std::size_t j = 0; j < M(); ++j) {
        Vec duj = b.slice(du, j * bw, bw);
        UnitKind kind = cfg.units[j];
        switch (kind) {
          case UnitKind::conv3x3:
          case UnitKind::conv5x5: {
            std::size_t taps = unit_taps(kind);
            Vec dpre = b.relu_backward(duj, lf.units[j].act);
            g.w[l][j] = b.matmul(b.gather(lf.units[j].cols, transpose_idx(bw, taps)), dpre,
                                 taps, bw, 1);
            Vec spread = b.gather(dpre, im2col_idx(batch, cfg.width, taps, true));
            b.add_inplace(da_prev, b.matmul(spread, p.w[l][j], bw, taps, 1));
            break;
          }
          case UnitKind::fully_connected: {
            Vec dpre = b.relu_backward(duj, lf.units[j].act);
            g.w[l][j] = b.matmul(b.gather(lf.in, transpose_idx(batch, cfg.width)), dpre,
                                 cfg.width, batch, cfg.width);
            b.add_inplace(da_prev,
                          b.matmul(dpre, b.gather(p.w[l][j], transpose_idx(cfg.width, cfg.width)),
                                   batch, cfg.width, cfg.width));
            break;
          }
          case UnitKind::identity:
            b.add_inplace(da_prev, duj);
            break;
          case UnitKind::maxpool2x2:
            b.add_inplace(da_prev, pool_backward(lf.units[j], duj, batch));
            break;
        }
      }
      da = std::move(da_prev);
    }

    Vec dpre0 = b.relu_backward(da, f.stem_act.handle);
    g.stem = b.matmul(b.gather(x, transpose_idx(batch, cfg.input_dim)), dpre0, cfg.input_dim,
                      batch, cfg.width);
    return g;
  }

  // weight step on a training batch; returns the batch loss (the L_W probe)
  Vec weight_step(Params& p, const Vec& x, const Vec& y, std::size_t batch, double eta_w) {
    NetFwd f = forward(p, x, batch);
    Vec loss = b.ce_loss(b.soft_p(f.head_soft), y, batch, cfg.classes);
    Grads g = backward(p, f, x, y, batch);
    const double c = eta_w / double(batch);
    b.sub_inplace(p.stem, b.scale_real(g.stem, c));
    for (std::size_t l = 0; l < cfg.layers; ++l)
      for (std::size_t j = 0; j < M(); ++j)
        if (g.w[l][j].size()) b.sub_inplace(p.w[l][j], b.scale_real(g.w[l][j], c));
    b.sub_inplace(p.head, b.scale_real(g.head, c));
    return loss;
  }

  // architecture step on a validation batch, after the weight step; returns
  // the validation loss (the reported L_A probe)
  Vec arch_step(Params& p, const Vec& x, const Vec& y, std::size_t batch, double eta_a) {
    NetFwd f = forward(p, x, batch);
    Vec loss = b.ce_loss(b.soft_p(f.head_soft), y, batch, cfg.classes);
    Grads g = backward(p, f, x, y, batch);
    const double c = eta_a / double(batch);
    for (std::size_t l = 0; l < cfg.layers; ++l)
      b.sub_inplace(p.alpha[l], b.scale_real(g.alpha[l], c));
    return loss;
  }
};

// Fisher-Yates under the backend's shared stream; both parties and the
// oracle draw the identical permutation
template <class B>
std::vector<std::size_t> draw_permutation(B& b, std::size_t n) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t(0));
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[b.shuffle_below(i)]);
  return perm;
}

template <class B>
typename B::Vec gather_rows(B& b, const typename B::Vec& data, std::size_t stride,
                            const std::vector<std::size_t>& rows, std::size_t from,
                            std::size_t count) {
  std::vector<std::size_t> idx;
  idx.reserve(count * stride);
  for (std::size_t r = 0; r < count; ++r)
    for (std::size_t c = 0; c < stride; ++c) idx.push_back(rows[from + r] * stride + c);
  return b.gather(data, idx);
}

template <class B>
struct SearchRun {
  typename Engine<B>::Params params;
  std::vector<typename B::Vec> epoch_loss;
  int epochs_done = 0;
};

// one epoch: weight step on each training batch, then an architecture step
// on the paired validation batch; returns (mean L_W, mean L_A) shares
template <class B>
std::pair<typename B::Vec, typename B::Vec> run_epoch(
    Engine<B>& eng, typename Engine<B>::Params& p, const typename B::Vec& trx,
    const typename B::Vec& try_, std::size_t trn, const typename B::Vec& vax,
    const typename B::Vec& vay, std::size_t van, const SupernetConfig& ncfg,
    const TrainConfig& tcfg) {
  B& b = eng.b;
  auto tperm = draw_permutation(b, trn);
  auto vperm = draw_permutation(b, van);
  const std::size_t bs = tcfg.batch;
  const std::size_t iters = std::min(trn / bs, van / bs);
  if (iters == 0) throw ConfigError("nas search: splits smaller than one batch");
  typename B::Vec acc = b.zeros(1);
  typename B::Vec vacc = b.zeros(1);
  for (std::size_t it = 0; it < iters; ++it) {
    auto bx = gather_rows(b, trx, ncfg.input_dim, tperm, it * bs, bs);
    auto by = gather_rows(b, try_, ncfg.classes, tperm, it * bs, bs);
    auto loss = eng.weight_step(p, bx, by, bs, tcfg.eta_w);
    acc = b.add(acc, loss);
    auto vx = gather_rows(b, vax, ncfg.input_dim, vperm, it * bs, bs);
    auto vy = gather_rows(b, vay, ncfg.classes, vperm, it * bs, bs);
    auto vloss = eng.arch_step(p, vx, vy, bs, tcfg.eta_a);
    vacc = b.add(vacc, vloss);
  }
  return {b.scale_real(acc, 1.0 / double(iters)), b.scale_real(vacc, 1.0 / double(iters))};
}

}  // namespace

// ---------------------------------------------------------------------------
// public secure entry points
// ---------------------------------------------------------------------------

namespace {

Engine<SecureBackend>::Params to_params(SuperNet& net) {
  Engine<SecureBackend>::Params p;
  p.stem = net.stem;
  p.head = net.head;
  p.alpha = net.alpha;
  p.w = net.w;
  return p;
}

void from_params(SuperNet& net, Engine<SecureBackend>::Params& p) {
  net.stem = std::move(p.stem);
  net.head = std::move(p.head);
  net.alpha = std::move(p.alpha);
  net.w = std::move(p.w);
}

}  // namespace

SuperNet init_supernet(Session& s, const SupernetConfig& cfg) {
  cfg.validate();
  SecureBackend b{s, SoftmaxConfig{}};
  Engine<SecureBackend> eng{b, cfg};
  auto p = eng.init();
  SuperNet net;
  net.cfg = cfg;
  from_params(net, p);
  return net;
}

std::vector<u64> mixed_layer_forward(Session& s, SuperNet& net, std::size_t layer,
                                     std::span<const u64> x, std::size_t batch,
                                     const SoftmaxConfig& scfg) {
  if (layer >= net.cfg.layers) throw ConfigError("mixed_layer_forward: layer out of range");
  if (x.size() != batch * net.cfg.width)
    throw ProtocolError("mixed_layer_forward: input shape mismatch");
  SecureBackend b{s, scfg};
  Engine<SecureBackend> eng{b, net.cfg};
  auto p = to_params(net);
  auto lf = eng.layer_forward(p, layer, std::vector<u64>(x.begin(), x.end()), batch);
  return lf.out;
}

std::vector<u64> supernet_forward(Session& s, SuperNet& net, std::span<const u64> x,
                                  std::size_t batch, const SoftmaxConfig& scfg) {
  if (x.size() != batch * net.cfg.input_dim)
    throw ProtocolError("supernet_forward: input shape mismatch");
  SecureBackend b{s, scfg};
  Engine<SecureBackend> eng{b, net.cfg};
  auto p = to_params(net);
  auto f = eng.forward(p, std::vector<u64>(x.begin(), x.end()), batch);
  return f.head_soft.p;
}

std::vector<u64> update_weights(Session& s, SuperNet& net, std::span<const u64> x,
                                std::span<const u64> y, std::size_t batch,
                                const TrainConfig& cfg) {
  cfg.validate();
  SecureBackend b{s, cfg.softmax()};
  Engine<SecureBackend> eng{b, net.cfg};
  auto p = to_params(net);
  auto loss = eng.weight_step(p, std::vector<u64>(x.begin(), x.end()),
                              std::vector<u64>(y.begin(), y.end()), batch, cfg.eta_w);
  from_params(net, p);
  return loss;
}

void update_arch(Session& s, SuperNet& net, std::span<const u64> x, std::span<const u64> y,
                 std::size_t batch, const TrainConfig& cfg) {
  cfg.validate();
  SecureBackend b{s, cfg.softmax()};
  Engine<SecureBackend> eng{b, net.cfg};
  auto p = to_params(net);
  eng.arch_step(p, std::vector<u64>(x.begin(), x.end()),
                std::vector<u64>(y.begin(), y.end()), batch, cfg.eta_a);
  from_params(net, p);
}

std::pair<SharedSplit, SharedSplit> share_split(std::span<const float> x, std::span<const u8> y,
                                                std::size_t dim, std::size_t classes, u64 seed,
                                                const FixedPointConfig& fp) {
  if (dim == 0 || x.size() != y.size() * dim)
    throw ConfigError("share_split: data shape mismatch");
  Prg rng = derive_stream(seed, "share-data");
  SharedSplit a, bsh;
  a.count = bsh.count = y.size();
  a.dim = bsh.dim = dim;
  a.classes = bsh.classes = classes;
  a.x.resize(x.size());
  bsh.x.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    u64 v = encode(double(x[i]), fp);
    a.x[i] = rng.next() & fp.mask();
    bsh.x[i] = ring_sub(v, a.x[i], fp);
  }
  a.y.assign(y.size() * classes, 0);
  bsh.y.assign(y.size() * classes, 0);
  const u64 one = encode(1.0, fp);
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] >= classes) throw ConfigError("share_split: label outside class range");
    for (std::size_t c = 0; c < classes; ++c) {
      u64 v = c == y[i] ? one : 0;
      u64 s0 = rng.next() & fp.mask();
      a.y[i * classes + c] = s0;
      bsh.y[i * classes + c] = ring_sub(v, s0, fp);
    }
  }
  return {std::move(a), std::move(bsh)};
}

// ---------------------------------------------------------------------------
// PPNA checkpoints
// ---------------------------------------------------------------------------

namespace {

std::vector<u8> config_echo(const SupernetConfig& n, const TrainConfig& t) {
  std::vector<u8> out;
  auto pd = [&](double v) {
    u64 bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
  };
  put_u64(out, n.input_dim);
  put_u64(out, n.width);
  put_u64(out, n.classes);
  put_u64(out, n.layers);
  put_u64(out, n.units.size());
  for (UnitKind k : n.units) out.push_back(u8(k));
  put_u64(out, n.pool_rows);
  put_u64(out, n.pool_cols);
  put_u32(out, u32(t.epochs));
  pd(t.eta_a);
  pd(t.eta_w);
  put_u64(out, t.batch);
  put_u32(out, u32(t.L));
  put_u64(out, t.seed);
  return out;
}

void put_array(std::vector<u8>& out, const std::vector<u64>& v) {
  put_u64(out, v.size());
  for (u64 x : v) put_u64(out, x);
}

void write_checkpoint(const std::string& path, const SupernetConfig& ncfg,
                      const TrainConfig& tcfg, const Engine<SecureBackend>::Params& p,
                      int epochs_done) {
  std::vector<u8> out;
  out.insert(out.end(), {'P', 'P', 'N', 'A'});
  put_u16(out, 1);
  std::vector<u8> echo = config_echo(ncfg, tcfg);
  put_u32(out, u32(echo.size()));
  out.insert(out.end(), echo.begin(), echo.end());
  put_u32(out, u32(epochs_done));
  put_array(out, p.stem);
  for (const auto& layer : p.w)
    for (const auto& wv : layer) put_array(out, wv);
  put_array(out, p.head);
  for (const auto& row : p.alpha) put_array(out, row);
  std::string tmp = path + ".tmp";
  std::ofstream(tmp, std::ios::binary)
      .write(reinterpret_cast<const char*>(out.data()), std::streamsize(out.size()));
  std::filesystem::rename(tmp, path);
}

bool read_checkpoint(const std::string& path, const SupernetConfig& ncfg,
                     const TrainConfig& tcfg, Engine<SecureBackend>::Params& p,
                     int& epochs_done) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::vector<u8> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t at = 0;
  auto need = [&](std::size_t n) {
    if (at + n > buf.size()) throw FormatError("checkpoint: truncated");
  };
  need(4);
  if (std::memcmp(buf.data(), "PPNA", 4) != 0)
    throw FormatError("checkpoint: bad magic, not a PPNA file");
  at = 4;
  need(2);
  if (get_u16(buf.data() + at) != 1) throw FormatError("checkpoint: unsupported version");
  at += 2;
  need(4);
  u32 echo_len = get_u32(buf.data() + at);
  at += 4;
  need(echo_len);
  std::vector<u8> echo = config_echo(ncfg, tcfg);
  if (echo.size() != echo_len || std::memcmp(echo.data(), buf.data() + at, echo_len) != 0)
    throw ConfigError("checkpoint: configuration does not match this run");
  at += echo_len;
  need(4);
  epochs_done = int(get_u32(buf.data() + at));
  at += 4;
  auto read_array = [&](std::vector<u64>& v) {
    need(8);
    u64 n = get_u64(buf.data() + at);
    at += 8;
    if (n > (buf.size() - at) / 8) throw FormatError("checkpoint: truncated");
    v.resize(n);
    for (u64 i = 0; i < n; ++i) v[i] = get_u64(buf.data() + at + i * 8);
    at += n * 8;
  };
  read_array(p.stem);
  for (auto& layer : p.w)
    for (auto& wv : layer) read_array(wv);
  read_array(p.head);
  for (auto& row : p.alpha) read_array(row);
  if (at != buf.size()) throw FormatError("checkpoint: trailing bytes");
  return true;
}

}  // namespace

NasOutcome pp_nas_search(Session& s, const SupernetConfig& ncfg, const TrainConfig& tcfg,
                         const SharedSplit& train, const SharedSplit& val,
                         const std::string& checkpoint_path) {
  ncfg.validate();
  tcfg.validate();
  if (train.dim != ncfg.input_dim || val.dim != ncfg.input_dim ||
      train.classes != ncfg.classes || val.classes != ncfg.classes)
    throw ConfigError("nas search: split shapes do not match the net");
  auto scope = s.scoped("nas-search");
  SecureBackend b{s, tcfg.softmax()};
  Engine<SecureBackend> eng{b, ncfg};

  Engine<SecureBackend>::Params p;
  int start_epoch = 0;
  bool resumed = false;
  if (!checkpoint_path.empty()) {
    // shape the arrays so the reader can fill them
    p.w.resize(ncfg.layers);
    for (auto& layer : p.w) layer.resize(ncfg.unit_count());
    p.alpha.resize(ncfg.layers);
    resumed = read_checkpoint(checkpoint_path, ncfg, tcfg, p, start_epoch);
  }
  if (!resumed) {
    p = eng.init();
    start_epoch = 0;
  }
  // both parties must agree on where the run starts
  std::vector<u8> hello{u8(resumed ? 1 : 0), u8(start_epoch)};
  s.send(0, MsgKind::control, hello);
  Message peer = s.recv(0, MsgKind::control);
  if (peer.payload != hello)
    throw ConfigError("nas search: checkpoint state differs between parties");

  NasOutcome out;
  out.epochs_done = start_epoch;
  const auto t0 = std::chrono::steady_clock::now();
  for (int e = start_epoch; e < tcfg.epochs; ++e) {
    try {
      auto [lw, la] = run_epoch(eng, p, train.x, train.y, train.count, val.x, val.y,
                                val.count, ncfg, tcfg);
      out.epoch_loss.push_back(lw[0]);
      out.epoch_val_loss.push_back(la[0]);
      out.epoch_seconds.push_back(
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    } catch (...) {
      // leave a resumable trail before surfacing the failure
      if (!checkpoint_path.empty())
        write_checkpoint(checkpoint_path, ncfg, tcfg, p, out.epochs_done);
      throw;
    }
    out.epochs_done = e + 1;
    if (!checkpoint_path.empty())
      write_checkpoint(checkpoint_path, ncfg, tcfg, p, out.epochs_done);
  }

  out.net.cfg = ncfg;
  from_params(out.net, p);
  return out;
}

Architecture derive_architecture(Session& s, const std::vector<std::vector<u64>>& alpha,
                                 const SupernetConfig& cfg, bool consent) {
  if (!consent)
    throw ProtocolError("architecture derivation refused: this party did not consent");
  std::vector<u8> msg{u8(1)};
  s.send(0, MsgKind::control, msg);
  Message peer = s.recv(0, MsgKind::control);
  if (peer.payload.size() != 1 || peer.payload[0] != 1)
    throw ProtocolError("architecture derivation refused: peer did not consent");

  std::vector<u64> flat;
  for (const auto& row : alpha) flat.insert(flat.end(), row.begin(), row.end());
  std::vector<u64> revealed = s.reveal(flat, RevealSanction::architecture);
  std::vector<double> vals(revealed.size());
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = decode(revealed[i], s.fp());
  return argmax_architecture(vals, cfg.layers, cfg.unit_count());
}

// ---------------------------------------------------------------------------
// oracle runs
// ---------------------------------------------------------------------------

namespace {

template <class B>
OracleNasOutcome run_oracle_search(B& b, const SupernetConfig& ncfg, const TrainConfig& tcfg,
                                   const typename B::Vec& trx, const typename B::Vec& try_,
                                   std::size_t trn, const typename B::Vec& vax,
                                   const typename B::Vec& vay, std::size_t van,
                                   const FixedPointConfig& fp) {
  Engine<B> eng{b, ncfg};
  auto p = eng.init();
  OracleNasOutcome out;
  const auto t0 = std::chrono::steady_clock::now();
  for (int e = 0; e < tcfg.epochs; ++e) {
    auto [lw, la] = run_epoch(eng, p, trx, try_, trn, vax, vay, van, ncfg, tcfg);
    if constexpr (std::is_same_v<B, RealBackend>) {
      out.epoch_loss.push_back(lw[0]);
      out.epoch_val_loss.push_back(la[0]);
    } else {
      out.epoch_loss.push_back(decode(lw.v[0], fp));
      out.epoch_val_loss.push_back(decode(la.v[0], fp));
    }
    out.epoch_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  for (const auto& row : p.alpha)
    for (std::size_t j = 0; j < ncfg.unit_count(); ++j) {
      if constexpr (std::is_same_v<B, RealBackend>)
        out.alpha.push_back(row[j]);
      else
        out.alpha.push_back(decode(row.v[j], fp));
    }
  out.arch = argmax_architecture(out.alpha, ncfg.layers, ncfg.unit_count());

  // final super-net accuracy over the whole validation split; runs after
  // everything the lockstep comparison looks at
  auto f = eng.forward(p, vax, van);
  const auto& probs = eng.b.soft_p(f.head_soft);
  auto val = [&](const auto& vec, std::size_t i) {
    if constexpr (std::is_same_v<B, RealBackend>)
      return vec[i];
    else
      return decode(vec.v[i], fp);
  };
  std::size_t correct = 0;
  for (std::size_t r = 0; r < van; ++r) {
    std::size_t best = 0, truth = 0;
    for (std::size_t c = 1; c < ncfg.classes; ++c) {
      if (val(probs, r * ncfg.classes + c) > val(probs, r * ncfg.classes + best)) best = c;
      if (val(vay, r * ncfg.classes + c) > val(vay, r * ncfg.classes + truth)) truth = c;
    }
    correct += best == truth;
  }
  out.val_accuracy = van ? double(correct) / double(van) : 0.0;
  return out;
}

MirrorVec mirror_share_x(const PlainSplit& split, Prg& rng, const FixedPointConfig& fp) {
  MirrorVec v;
  v.resize(split.x.size());
  for (std::size_t i = 0; i < split.x.size(); ++i) {
    v.v[i] = encode(double(split.x[i]), fp);
    v.s0[i] = rng.next() & fp.mask();
  }
  return v;
}

MirrorVec mirror_share_y(const PlainSplit& split, Prg& rng, const FixedPointConfig& fp) {
  MirrorVec v;
  v.resize(split.y.size() * split.classes);
  const u64 one = encode(1.0, fp);
  for (std::size_t i = 0; i < split.y.size(); ++i)
    for (std::size_t c = 0; c < split.classes; ++c) {
      v.v[i * split.classes + c] = c == split.y[i] ? one : 0;
      v.s0[i * split.classes + c] = rng.next() & fp.mask();
    }
  return v;
}

}  // namespace

OracleNasOutcome nas_search_oracle(const SupernetConfig& ncfg, const TrainConfig& tcfg,
                                   const PlainSplit& train, const PlainSplit& val,
                                   OracleMode mode, u64 dealer_seed, const SessionConfig& scfg,
                                   u64 data_seed) {
  ncfg.validate();
  tcfg.validate();
  if (mode == OracleMode::real_arithmetic) {
    RealBackend b(scfg.fp, tcfg.softmax(), dealer_seed, scfg);
    auto to_real = [&](const PlainSplit& sp) {
      std::pair<std::vector<double>, std::vector<double>> out;
      out.first.assign(sp.x.begin(), sp.x.end());
      out.second.assign(sp.count * sp.classes, 0.0);
      for (std::size_t i = 0; i < sp.count; ++i) out.second[i * sp.classes + sp.y[i]] = 1.0;
      return out;
    };
    auto [trx, try_] = to_real(train);
    auto [vax, vay] = to_real(val);
    return run_oracle_search(b, ncfg, tcfg, trx, try_, train.count, vax, vay, val.count,
                             scfg.fp);
  }
  MirrorBackend b(scfg.fp, tcfg.softmax(), dealer_seed, scfg);
  // share_split is called once per split: seed for training, seed + 1 for
  // validation; the mirror replays both streams in that convention
  Prg trng = derive_stream(data_seed, "share-data");
  MirrorVec trx = mirror_share_x(train, trng, scfg.fp);
  MirrorVec try_ = mirror_share_y(train, trng, scfg.fp);
  Prg vrng = derive_stream(data_seed + 1, "share-data");
  MirrorVec vax = mirror_share_x(val, vrng, scfg.fp);
  MirrorVec vay = mirror_share_y(val, vrng, scfg.fp);
  return run_oracle_search(b, ncfg, tcfg, trx, try_, train.count, vax, vay, val.count,
                           scfg.fp);
}

DealerPlan plan_nas_search(const SupernetConfig& ncfg, const TrainConfig& tcfg,
                           std::size_t train_count, std::size_t val_count) {
  // a mirror dry run consumes exactly what the live protocol will; data
  // content is irrelevant to resource usage, so zeros stand in
  SessionConfig scfg;
  PlainSplit train{train_count, ncfg.input_dim, ncfg.classes,
                   std::vector<float>(train_count * ncfg.input_dim, 0.0f),
                   std::vector<u8>(train_count, 0)};
  PlainSplit val{val_count, ncfg.input_dim, ncfg.classes,
                 std::vector<float>(val_count * ncfg.input_dim, 0.0f),
                 std::vector<u8>(val_count, 0)};
  MirrorBackend b(scfg.fp, tcfg.softmax(), 0, scfg);
  DealerPlan plan;
  b.record = &plan;
  Prg trng = derive_stream(0, "share-data");
  MirrorVec trx = mirror_share_x(train, trng, scfg.fp);
  MirrorVec try_ = mirror_share_y(train, trng, scfg.fp);
  Prg vrng = derive_stream(1, "share-data");
  MirrorVec vax = mirror_share_x(val, vrng, scfg.fp);
  MirrorVec vay = mirror_share_y(val, vrng, scfg.fp);
  run_oracle_search(b, ncfg, tcfg, trx, try_, train_count, vax, vay, val_count, scfg.fp);
  return plan;
}

}  // namespace mpcnn
