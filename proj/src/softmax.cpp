#include "mpcnn/softmax.hpp"

#include <cmath>
#include <map>
#include <mutex>

namespace mpcnn {

namespace {

// degree-4 fit of ln on [1, 2), max abs error 1.4e-4; coefficients frozen,
// low order first
constexpr double kLnPoly[5] = {-1.7306316977197591, 2.7922552255843409, -1.4424810126033623,
                               0.4358618497762522, -0.0548628528620934};
constexpr double kLn2 = 0.6931471805599453;
constexpr double kLogClamp = 1e-4;

// share times public real constant, rescaled; local except for the rounding model
std::vector<u64> scale_const(Session& s, std::span<const u64> v, double c) {
  const auto& fp = s.fp();
  u64 cr = encode(c, fp);
  std::vector<u64> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    out[i] = truncate_share(ring_mul(v[i], cr, fp), fp.f, s.me(), fp);
  return out;
}

void add_const_party0(Session& s, std::span<u64> v, double c) {
  if (s.me() != PartyId::p0) return;
  u64 cr = encode(c, s.fp());
  for (u64& x : v) x = ring_add(x, cr, s.fp());
}

}  // namespace

double SoftmaxConfig::normalizer() const {
  return std::pow(L / std::exp(double(L)), L);
}

void SoftmaxConfig::validate() const {
  if (L < 1) throw ConfigError("softmax: L must be >= 1");
  if (xmax <= 0) throw ConfigError("softmax: xmax must be positive");
  if (mask_window_bits < 1 || mask_window_bits > 30)
    throw ConfigError("softmax: mask window bits out of range");
  if (recip_iters < 1) throw ConfigError("softmax: reciprocal iterations must be >= 1");
}

double hat_exp_local(double x, const SoftmaxConfig& cfg) {
  double base = cfg.literal_form ? x : (cfg.L + x);
  if (!cfg.literal_form && base <= 0)
    throw NumericError("hat_exp_local: L + x must be positive");
  double v = std::pow(base / std::exp(double(cfg.L)), cfg.L);
  if (!std::isfinite(v)) throw NumericError("hat_exp_local: representation overflow");
  return v;
}

double hat_exp_raw(double x, int L) { return std::pow(1.0 + x / L, L); }

SoftmaxArtifacts approx_softmax_rows(Session& s, std::span<const u64> x, std::size_t rows,
                                     std::size_t n, const SoftmaxConfig& cfg, OtMode mode) {
  cfg.validate();
  if (n < 2) throw ProtocolError("approx_softmax: need at least two logits");
  if (x.size() != rows * n) throw ProtocolError("approx_softmax: shape mismatch");
  auto scope = s.scoped("softmax");
  const auto& fp = s.fp();
  const std::size_t total = rows * n;

  // (1) clamp-ReLU; artifacts double as the backward pass's cache
  ReluArtifacts clip = secure_relu_clip(s, x, cfg.xmax, mode);

  // (2) bounded re-share so each party's piece decodes to a small real:
  // party 0 keeps a window mask, party 1 absorbs the difference
  std::vector<u64> piece(total);
  const u64 window = u64(1) << cfg.mask_window_bits;
  if (s.me() == PartyId::p0) {
    std::vector<u64> delta(total);
    for (std::size_t i = 0; i < total; ++i) {
      u64 w0 = s.mask_rng().next_below(window);
      delta[i] = ring_sub(clip.output[i], w0, fp);
      piece[i] = w0;
    }
    s.send_words(kTagReshare, MsgKind::open, delta);
  } else {
    std::vector<u64> delta = s.recv_words(kTagReshare, MsgKind::open);
    if (delta.size() != total) throw ProtocolError("approx_softmax: reshare size mismatch");
    for (std::size_t i = 0; i < total; ++i) piece[i] = ring_add(clip.output[i], delta[i], fp);
  }

  // (3) local exponentiation of the own piece, then (4) one Beaver product
  // per element across the two trivial sharings
  std::vector<u64> mine(total), zero(total, 0);
  for (std::size_t i = 0; i < total; ++i) {
    double u = to_signed(piece[i], fp) * fp.ulp();
    mine[i] = encode(hat_exp_raw(u, cfg.L), fp);
  }
  std::vector<u64> g = s.me() == PartyId::p0 ? mul_shares(s, mine, zero)
                                             : mul_shares(s, zero, mine);
  truncate_vec(s, g, fp.f);

  // (5) per-row denominators
  std::vector<u64> d(rows, 0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < n; ++i) d[r] = ring_add(d[r], g[r * n + i], fp);

  // (6) reciprocal in scaled space; bounds are public functions of (n, L, xmax)
  const double wreal = std::ldexp(1.0, cfg.mask_window_bits - fp.f);
  const double gmax = hat_exp_raw(cfg.xmax, cfg.L) * hat_exp_raw(wreal, cfg.L);
  const double dmax = double(n) * gmax;
  const double dmin = double(n) * (1.0 - wreal);
  const int c = int(std::ceil(std::log2(dmax)));
  const double spread = dmax / dmin;
  const int iters =
      std::max(cfg.recip_iters, int(std::ceil(std::log2(std::log(1e3) * 2.0 * spread))));
  std::vector<u64> w = secure_reciprocal_scaled(s, d, c, 1.0, iters);

  // (7) one product per element against the row reciprocal
  std::vector<u64> wb(total);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < n; ++i) wb[r * n + i] = w[r];
  std::vector<u64> p = mul_shares(s, g, wb);
  truncate_vec(s, p, fp.f + c);

  SoftmaxArtifacts art;
  art.rows = rows;
  art.n = n;
  art.p = std::move(p);
  art.zt = std::move(clip.output);
  art.ind = std::move(clip.derivative);
  return art;
}

std::vector<u64> secure_reciprocal_scaled(Session& s, std::span<const u64> d, int scale_c,
                                          double y0, int iters) {
  auto scope = s.scoped("reciprocal");
  const auto& fp = s.fp();
  std::vector<u64> y(d.size(), 0);
  if (s.me() == PartyId::p0) {
    u64 init = encode(y0, fp);
    for (u64& v : y) v = init;
  }
  const u64 two = encode(2.0, fp);
  for (int it = 0; it < iters; ++it) {
    std::vector<u64> t = mul_shares(s, d, y);
    truncate_vec(s, t, fp.f + scale_c);
    std::vector<u64> u(t.size());
    for (std::size_t i = 0; i < t.size(); ++i)
      u[i] = s.me() == PartyId::p0 ? ring_sub(two, t[i], fp) : ring_neg(t[i], fp);
    y = mul_shares(s, y, u);
    truncate_vec(s, y, fp.f);
  }
  return y;
}

std::vector<u64> secure_reciprocal(Session& s, std::span<const u64> d,
                                   const SoftmaxConfig& cfg) {
  cfg.validate();
  return secure_reciprocal_scaled(s, d, 0, std::ldexp(1.0, -cfg.recip_bound_log2),
                                  cfg.recip_iters);
}

std::vector<u64> secure_log(Session& s, std::span<const u64> q, OtMode mode) {
  auto scope = s.scoped("log");
  const auto& fp = s.fp();
  const int w = fp.l;
  const std::size_t total = q.size();
  if (fp.f + 8 >= fp.l) throw ProtocolError("secure_log: ring too narrow for the normalizer");

  // clamp to >= 1e-4 so the normalizer always sees a positive value
  std::vector<u64> shifted(q.begin(), q.end());
  add_const_party0(s, shifted, -kLogClamp);
  ReluArtifacts clamp = secure_relu(s, shifted, mode);
  std::vector<u64> qc = std::move(clamp.output);
  add_const_party0(s, qc, kLogClamp);

  // garbled normalizer: extract mantissa in [1,2) and exponent e - f
  const auto& circ = [&]() -> const CircuitDescription& {
    static std::mutex mu;
    static std::map<int, CircuitDescription> cache;
    std::lock_guard<std::mutex> lk(mu);
    auto it = cache.find(w);
    if (it == cache.end()) it = cache.emplace(w, build_normalize_circuit(w, fp.f)).first;
    return it->second;
  }();

  std::vector<u64> m_sh(total), e_sh(total);
  if (s.me() == PartyId::p0) {
    std::vector<std::vector<u8>> inputs(total);
    for (std::size_t i = 0; i < total; ++i) {
      u64 rm = s.mask_rng().next() & fp.mask();
      u64 re = s.mask_rng().next() & fp.mask();
      m_sh[i] = rm;
      e_sh[i] = re;
      std::vector<u8>& in = inputs[i];
      auto push_word = [&](u64 v) {
        auto b = bits_of(v, w);
        in.insert(in.end(), b.begin(), b.end());
      };
      push_word(qc[i]);
      push_word(ring_neg(rm, fp));
      // the -f * 2^f exponent offset rides on the garbler's mask input
      push_word(ring_sub(ring_neg(re, fp), u64(fp.f) << fp.f, fp));
    }
    gc_garble_batch(s, circ, inputs, mode);
  } else {
    std::vector<std::vector<u8>> inputs(total);
    for (std::size_t i = 0; i < total; ++i) inputs[i] = bits_of(qc[i], w);
    auto out_bits = gc_evaluate_batch(s, circ, inputs, mode);
    for (std::size_t i = 0; i < total; ++i) {
      m_sh[i] = word_from_bits(out_bits[i].data(), w);
      e_sh[i] = word_from_bits(out_bits[i].data() + w, w);
    }
  }

  // ln q = (e - f) ln 2 + poly(m)
  std::vector<u64> m2 = mul_fixed(s, m_sh, m_sh);
  std::vector<u64> m3 = mul_fixed(s, m2, m_sh);
  std::vector<u64> m4 = mul_fixed(s, m2, m2);
  std::vector<u64> out = scale_const(s, e_sh, kLn2);
  auto acc = [&](std::span<const u64> term, double coeff) {
    std::vector<u64> t = scale_const(s, term, coeff);
    for (std::size_t i = 0; i < total; ++i) out[i] = ring_add(out[i], t[i], fp);
  };
  acc(m_sh, kLnPoly[1]);
  acc(m2, kLnPoly[2]);
  acc(m3, kLnPoly[3]);
  acc(m4, kLnPoly[4]);
  add_const_party0(s, out, kLnPoly[0]);
  return out;
}

std::vector<u64> cross_entropy_loss(Session& s, std::span<const u64> p, std::span<const u64> y,
                                    std::size_t rows, std::size_t n, OtMode mode) {
  if (p.size() != rows * n || y.size() != rows * n)
    throw ProtocolError("cross_entropy_loss: shape mismatch");
  auto scope = s.scoped("ce-loss");
  const auto& fp = s.fp();
  std::vector<u64> prod = mul_fixed(s, p, y);
  std::vector<u64> q(rows, 0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < n; ++i) q[r] = ring_add(q[r], prod[r * n + i], fp);
  std::vector<u64> lnq = secure_log(s, q, mode);
  u64 acc = 0;
  for (u64 v : lnq) acc = ring_add(acc, v, fp);
  std::vector<u64> one{acc};
  std::vector<u64> scaled = scale_const(s, one, 1.0 / double(rows));
  return {ring_neg(scaled[0], fp)};
}

namespace {

// common tail: e * L/(L + zt) * indicator
std::vector<u64> softmax_grad_tail(Session& s, std::vector<u64> e, const SoftmaxArtifacts& art,
                                   const SoftmaxConfig& cfg) {
  const auto& fp = s.fp();
  std::vector<u64> denom(art.zt.begin(), art.zt.end());
  add_const_party0(s, denom, double(cfg.L));
  const int c = int(std::ceil(std::log2(cfg.L + cfg.xmax)));
  std::vector<u64> inv = secure_reciprocal_scaled(s, denom, c, 1.0, cfg.recip_iters);
  std::vector<u64> m = mul_shares(s, e, inv);
  truncate_vec(s, m, fp.f + c);
  for (u64& v : m) v = ring_mul(v, u64(cfg.L), fp);  // integer scale, exact
  return mul_shares(s, m, art.ind);                  // integer indicator, no rescale
}

}  // namespace

std::vector<u64> softmax_ce_backward(Session& s, const SoftmaxArtifacts& art,
                                     std::span<const u64> y, const SoftmaxConfig& cfg) {
  if (y.size() != art.p.size()) throw ProtocolError("softmax_ce_backward: shape mismatch");
  const auto& fp = s.fp();
  std::vector<u64> e(art.p.size());
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = ring_sub(art.p[i], y[i], fp);
  return softmax_grad_tail(s, std::move(e), art, cfg);
}

std::vector<u64> softmax_backward(Session& s, std::span<const u64> dldp,
                                  const SoftmaxArtifacts& art, const SoftmaxConfig& cfg) {
  if (dldp.size() != art.p.size()) throw ProtocolError("softmax_backward: shape mismatch");
  const auto& fp = s.fp();
  std::vector<u64> t = mul_fixed(s, dldp, art.p);
  std::vector<u64> srow(art.rows, 0);
  for (std::size_t r = 0; r < art.rows; ++r)
    for (std::size_t i = 0; i < art.n; ++i) srow[r] = ring_add(srow[r], t[r * art.n + i], fp);
  std::vector<u64> sb(art.p.size());
  for (std::size_t r = 0; r < art.rows; ++r)
    for (std::size_t i = 0; i < art.n; ++i) sb[r * art.n + i] = srow[r];
  std::vector<u64> ps = mul_fixed(s, art.p, sb);
  std::vector<u64> e(t.size());
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = ring_sub(t[i], ps[i], fp);
  return softmax_grad_tail(s, std::move(e), art, cfg);
}

}  // namespace mpcnn
