#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "mpcnn/protocols.hpp"

using namespace mpcnn;

namespace {

// runs both parties over in-process transport and hands back party-0/party-1
// result shares for the caller to recombine
template <typename Fn>
std::pair<std::vector<u64>, std::vector<u64>> run_mpc(const SessionConfig& cfg, u64 dealer_seed,
                                                      Fn&& fn) {
  std::vector<u64> out0, out1;
  run_pair(cfg, dealer_seed,
           [&](Session& s) {
             s.handshake();
             out0 = fn(s);
           },
           [&](Session& s) {
             s.handshake();
             out1 = fn(s);
           });
  return {out0, out1};
}

std::vector<u64> split_for(Session& s, std::span<const u64> values, Prg& rng) {
  std::vector<u64> mine(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto [s0, s1] = make_shares(values[i], rng, s.fp());
    mine[i] = s.me() == PartyId::p0 ? s0 : s1;
  }
  return mine;
}

}  // namespace

TEST_CASE("beaver product is exact in ring semantics at l=64") {
  SessionConfig cfg;
  Prg vals(100);
  std::vector<u64> x(64), y(64);
  for (auto& v : x) v = vals.next();
  for (auto& v : y) v = vals.next();
  auto [r0, r1] = run_mpc(cfg, 1, [&](Session& s) {
    Prg rng(55);  // both parties derive the same split
    std::vector<u64> xs = split_for(s, x, rng);
    std::vector<u64> ys = split_for(s, y, rng);
    return mul_shares(s, xs, ys);
  });
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(reconstruct(r0[i], r1[i], cfg.fp) == x[i] * y[i]);
}

TEST_CASE("beaver product is exact across an l=8 sample with fresh triples") {
  SessionConfig cfg;
  cfg.fp.l = 8;
  cfg.fp.f = 2;
  std::vector<u64> x, y;
  for (int a = 0; a < 256; a += 5)
    for (int b = 3; b < 256; b += 17) {
      x.push_back(u64(a));
      y.push_back(u64(b));
    }
  auto [r0, r1] = run_mpc(cfg, 2, [&](Session& s) {
    Prg rng(56);
    std::vector<u64> xs = split_for(s, x, rng);
    std::vector<u64> ys = split_for(s, y, rng);
    return mul_shares(s, xs, ys);
  });
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(reconstruct(r0[i], r1[i], cfg.fp) == ((x[i] * y[i]) & 0xff));
}

TEST_CASE("fixed-point product stays within one probabilistic-truncation ulp") {
  SessionConfig cfg;
  const FixedPointConfig fp = cfg.fp;
  Prg vals(101);
  std::vector<double> xv(500), yv(500);
  std::vector<u64> x(500), y(500);
  for (std::size_t i = 0; i < xv.size(); ++i) {
    xv[i] = (vals.next_unit() - 0.5) * 512.0;
    yv[i] = (vals.next_unit() - 0.5) * 512.0;
    x[i] = encode(xv[i], fp);
    y[i] = encode(yv[i], fp);
  }
  auto [r0, r1] = run_mpc(cfg, 3, [&](Session& s) {
    Prg rng(57);
    std::vector<u64> xs = split_for(s, x, rng);
    std::vector<u64> ys = split_for(s, y, rng);
    return mul_fixed(s, xs, ys);
  });
  for (std::size_t i = 0; i < x.size(); ++i) {
    i64 got = to_signed(reconstruct(r0[i], r1[i], fp), fp);
    i64 want = to_signed(truncate_plain(x[i] * y[i], fp.f, fp), fp);
    CHECK(std::llabs(got - want) <= 1);
    // decoded error scales with the operand magnitudes via encode rounding
    double dec = decode(reconstruct(r0[i], r1[i], fp), fp);
    double scale = std::max({1.0, std::fabs(xv[i]), std::fabs(yv[i]),
                             std::fabs(xv[i] * yv[i])});
    CHECK(std::fabs(dec - xv[i] * yv[i]) <= scale * std::ldexp(1.0, -fp.f + 1));
  }
}

TEST_CASE("truncate_vec matches the arithmetic shift within one ulp") {
  SessionConfig cfg;
  const FixedPointConfig fp = cfg.fp;
  Prg vals(102);
  std::vector<u64> v(200);
  for (auto& w : v) w = encode((vals.next_unit() - 0.5) * 1000.0, fp);
  auto [r0, r1] = run_mpc(cfg, 4, [&](Session& s) {
    Prg rng(58);
    std::vector<u64> mine = split_for(s, v, rng);
    truncate_vec(s, mine, fp.f);
    return mine;
  });
  for (std::size_t i = 0; i < v.size(); ++i) {
    i64 got = to_signed(reconstruct(r0[i], r1[i], fp), fp);
    i64 want = to_signed(truncate_plain(v[i], fp.f, fp), fp);
    CHECK(std::llabs(got - want) <= 1);
  }
}

TEST_CASE("matrix product uses one open and matches the plaintext matmul") {
  SessionConfig cfg;
  const FixedPointConfig fp = cfg.fp;
  std::size_t n = 4, k = 6, m = 3;
  Prg vals(103);
  std::vector<double> av(n * k), bv(k * m);
  std::vector<u64> a(n * k), b(k * m);
  for (std::size_t i = 0; i < av.size(); ++i) a[i] = encode(av[i] = vals.next_unit() - 0.5, fp);
  for (std::size_t i = 0; i < bv.size(); ++i) b[i] = encode(bv[i] = vals.next_unit() - 0.5, fp);

  u64 open_bytes = 0;
  std::vector<u64> r0, r1;
  run_pair(cfg, 5,
           [&](Session& s) {
             s.handshake();
             Prg rng(59);
             std::vector<u64> as = split_for(s, a, rng);
             std::vector<u64> bs = split_for(s, b, rng);
             std::vector<u64> out;
             {
               auto sc = s.scoped("matmul");
               out = matmul_shares(s, as, bs, n, k, m);
             }
             const CommRecord& rec = s.stats().records.at("matmul");
             open_bytes = rec.bytes_sent;
             r0 = out;
           },
           [&](Session& s) {
             s.handshake();
             Prg rng(59);
             std::vector<u64> as = split_for(s, a, rng);
             std::vector<u64> bs = split_for(s, b, rng);
             r1 = matmul_shares(s, as, bs, n, k, m);
           });

  // one masked open of A - a and B - b: (nk + km) words plus one frame header
  CHECK(open_bytes == 8 * (n * k + k * m) + 6);

  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double want = 0;
      for (std::size_t t = 0; t < k; ++t) want += av[i * k + t] * bv[t * m + j];
      double got = decode(reconstruct(r0[i * m + j], r1[i * m + j], fp), fp);
      CHECK(std::fabs(got - want) <= fp.ulp() * double(k + 2));
    }
}

TEST_CASE("unrescaled matmul keeps raw ring products") {
  SessionConfig cfg;
  const FixedPointConfig fp = cfg.fp;
  std::vector<u64> a{encode(2.0, fp), encode(3.0, fp)};
  std::vector<u64> b{encode(1.5, fp), encode(-0.5, fp)};
  auto [r0, r1] = run_mpc(cfg, 6, [&](Session& s) {
    Prg rng(60);
    std::vector<u64> as = split_for(s, a, rng);
    std::vector<u64> bs = split_for(s, b, rng);
    return matmul_shares(s, as, bs, 1, 2, 1, false);
  });
  // 2 * 1.5 - 3 * 0.5 = 1.5 at double scale 2^(2f)
  u64 got = reconstruct(r0[0], r1[0], fp);
  CHECK(got == ring_add(ring_mul(a[0], b[0], fp), ring_mul(a[1], b[1], fp), fp));
  CHECK(decode(truncate_plain(got, fp.f, fp), fp) == doctest::Approx(1.5));
}

TEST_CASE("running out of triples raises a protocol error") {
  SessionConfig cfg;
  DealerPlan plan;
  plan.scalar_triples = 2;
  auto dir = std::filesystem::temp_directory_path() / "beaver-dry";
  std::filesystem::remove_all(dir);
  DealerArtifacts art = dealer_generate(8, cfg.fp, plan, dir.string());
  FileDealerSource d0(art.path0, PartyId::p0, cfg.fp);
  FileDealerSource d1(art.path1, PartyId::p1, cfg.fp);
  bool threw = false;
  try {
    run_pair_with_sources(cfg, d0, d1,
                          [&](Session& s) {
                            s.handshake();
                            std::vector<u64> x{1, 2, 3}, y{4, 5, 6};
                            mul_shares(s, x, y);
                          },
                          [&](Session& s) {
                            s.handshake();
                            std::vector<u64> x{0, 0, 0}, y{0, 0, 0};
                            mul_shares(s, x, y);
                          });
  } catch (const ProtocolError&) {
    threw = true;
  }
  CHECK(threw);
}

TEST_CASE("mismatched operand lengths are rejected") {
  SessionConfig cfg;
  bool threw = false;
  try {
    run_pair(cfg, 9,
             [&](Session& s) {
               s.handshake();
               std::vector<u64> x{1, 2}, y{3};
               mul_shares(s, x, y);
             },
             [&](Session& s) {
               s.handshake();
               std::vector<u64> x{1, 2}, y{3};
               mul_shares(s, x, y);
             });
  } catch (const std::exception&) {
    threw = true;
  }
  CHECK(threw);
}
