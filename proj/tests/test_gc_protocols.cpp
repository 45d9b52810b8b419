#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "mpcnn/garble.hpp"
#include "mpcnn/oracle.hpp"
#include "mpcnn/protocols.hpp"

using namespace mpcnn;

namespace {

std::vector<u8> input_bits(const CircuitDescription& c, Prg& rng) {
  std::vector<u8> bits(c.input_count());
  for (auto& b : bits) b = u8(rng.next() & 1);
  return bits;
}

std::vector<u8> garble_and_evaluate(const CircuitDescription& c, const std::vector<u8>& bits,
                                    Prg& label_rng) {
  Garbling g = garble_circuit(c, label_rng);
  std::vector<Block> active(c.input_count());
  for (u32 i = 0; i < c.input_count(); ++i) active[i] = g.label(i, bits[i]);
  std::vector<Block> outs = evaluate_garbled(c, g.tables, active);
  return decode_outputs(c, g.decode, outs);
}

// shares a signed value between the parties with a fixed party-0 half
std::vector<u64> my_share(Session& s, std::span<const u64> values, u64 seed) {
  Prg rng(seed);
  std::vector<u64> mine(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    u64 s0 = rng.next() & s.fp().mask();
    mine[i] = s.me() == PartyId::p0 ? s0 : ring_sub(values[i], s0, s.fp());
  }
  return mine;
}

}  // namespace

TEST_CASE("portable aes core matches the published reference vector") {
  const u8 key[16] = {0x00, 0x01, 0x02, 0x03, 0x04, 0x05, 0x06, 0x07,
                      0x08, 0x09, 0x0a, 0x0b, 0x0c, 0x0d, 0x0e, 0x0f};
  const u8 pt[16] = {0x00, 0x11, 0x22, 0x33, 0x44, 0x55, 0x66, 0x77,
                     0x88, 0x99, 0xaa, 0xbb, 0xcc, 0xdd, 0xee, 0xff};
  const u8 want[16] = {0x69, 0xc4, 0xe0, 0xd8, 0x6a, 0x7b, 0x04, 0x30,
                       0xd8, 0xcd, 0xb7, 0x80, 0x70, 0xb4, 0xc5, 0x5a};
  u8 got[16];
  aes128_encrypt_portable(key, pt, got);
  CHECK(std::equal(got, got + 16, want));
}

TEST_CASE("gate hash separates gate ids and slots") {
  Block a{0x1111, 0x2222}, b{0x3333, 0x4444};
  Block h = gc_hash(a, b, 5, 2);
  CHECK(h == gc_hash(a, b, 5, 2));
  CHECK_FALSE(h == gc_hash(a, b, 6, 2));
  CHECK_FALSE(h == gc_hash(a, b, 5, 3));
  CHECK_FALSE(h == gc_hash(b, a, 5, 2));
  CHECK_FALSE(h == Block{});
}

TEST_CASE("labels carry the permute color in the low bit") {
  Prg rng(1);
  Garbling g = garble_circuit(build_add_circuit(8), rng);
  CHECK(g.offset.color() == 1);  // complementary labels always differ in color
  for (u32 w = 0; w < 16; ++w) {
    CHECK(g.label(w, 0).color() != g.label(w, 1).color());
    CHECK((g.label(w, 0) ^ g.label(w, 1)) == g.offset);
  }
}

TEST_CASE("tables hold four rows per and gate only") {
  Prg rng(2);
  CircuitDescription c = build_relu_circuit(16);
  Garbling g = garble_circuit(c, rng);
  CHECK(g.tables.size() == std::size_t(c.and_count()) * 4 * kRowBytes);
  CHECK(g.decode.size() == c.outputs.size());
}

TEST_CASE("garbled evaluation agrees with plain evaluation on every builder") {
  Prg label_rng(3), in_rng(4);
  for (const CircuitDescription& c :
       {build_add_circuit(8), build_cmp_circuit(8, false), build_cmp_circuit(8, true),
        build_mux_circuit(8), build_relu_circuit(8), build_relu_clip_circuit(8),
        build_pair_gt_circuit(8), build_normalize_circuit(16, 6)}) {
    for (int trial = 0; trial < 25; ++trial) {
      std::vector<u8> bits = input_bits(c, in_rng);
      CHECK(garble_and_evaluate(c, bits, label_rng) == eval_circuit_plain(c, bits));
    }
  }
}

TEST_CASE("a flipped table byte fails the row authenticity check") {
  Prg rng(5);
  CircuitDescription c = build_cmp_circuit(8, false);
  Garbling g = garble_circuit(c, rng);
  std::vector<Block> active(c.input_count());
  Prg in(6);
  for (u32 i = 0; i < c.input_count(); ++i) active[i] = g.label(i, u8(in.next() & 1));
  std::vector<u8> broken = g.tables;
  int tripped = 0;
  for (std::size_t at = 0; at < broken.size(); at += kRowBytes * 2 + 5) {
    std::vector<u8> t = g.tables;
    t[at] ^= 0x40;
    try {
      evaluate_garbled(c, t, active);
    } catch (const ProtocolError&) {
      ++tripped;
    }
  }
  CHECK(tripped > 0);
}

TEST_CASE("a foreign output label fails decoding") {
  Prg rng(7);
  CircuitDescription c = build_add_circuit(8);
  Garbling g = garble_circuit(c, rng);
  std::vector<Block> outs(c.outputs.size());
  for (auto& o : outs) o = random_block(rng);
  CHECK_THROWS_AS(decode_outputs(c, g.decode, outs), ProtocolError);
}

TEST_CASE("ot hands over exactly the chosen labels in both modes") {
  for (OtMode mode : {OtMode::dealer, OtMode::trusted_test}) {
    SessionConfig cfg;
    std::vector<std::array<Block, 2>> pairs;
    Prg rng(8);
    for (int i = 0; i < 33; ++i) pairs.push_back({random_block(rng), random_block(rng)});
    std::vector<u8> choices(33);
    for (std::size_t i = 0; i < choices.size(); ++i) choices[i] = u8(i % 2);
    run_pair(cfg, 11,
             [&](Session& s) {
               s.handshake();
               ot_send_labels(s, pairs, mode);
             },
             [&](Session& s) {
               s.handshake();
               std::vector<Block> got = ot_recv_labels(s, choices, mode);
               REQUIRE(got.size() == choices.size());
               for (std::size_t i = 0; i < got.size(); ++i)
                 CHECK(got[i] == pairs[i][choices[i]]);
             });
  }
}

TEST_CASE("dealer-mode ot uses one message per direction per batch") {
  SessionConfig cfg;
  std::vector<std::array<Block, 2>> pairs(50);
  Prg rng(9);
  for (auto& p : pairs) p = {random_block(rng), random_block(rng)};
  std::vector<u8> choices(50, 1);
  run_pair(cfg, 12,
           [&](Session& s) {
             s.handshake();
             u64 sent_before = s.stats().total_sent;
             ot_send_labels(s, pairs, OtMode::dealer);
             // one frame: header (6) + 2 blocks of 16 bytes per pair
             CHECK(s.stats().total_sent - sent_before == 6 + 50 * 32);
           },
           [&](Session& s) {
             s.handshake();
             u64 sent_before = s.stats().total_sent;
             ot_recv_labels(s, choices, OtMode::dealer);
             // one frame of bit-packed choice corrections
             CHECK(s.stats().total_sent - sent_before == 6 + (50 + 7) / 8);
           });
}

TEST_CASE("secure relu is exact in ring semantics") {
  SessionConfig cfg;
  const FixedPointConfig fp = cfg.fp;
  Prg vals(13);
  std::vector<u64> x(256);
  std::vector<double> xv(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    x[i] = encode(xv[i] = (vals.next_unit() - 0.5) * 64.0, fp);
  x[0] = 0;
  xv[0] = 0.0;  // the boundary case goes through every run
  for (OtMode mode : {OtMode::dealer, OtMode::trusted_test}) {
    std::vector<u64> o0, o1, d0, d1;
    run_pair(cfg, 14,
             [&](Session& s) {
               s.handshake();
               ReluArtifacts art = secure_relu(s, my_share(s, x, 77), mode);
               o0 = art.output;
               d0 = art.derivative;
             },
             [&](Session& s) {
               s.handshake();
               ReluArtifacts art = secure_relu(s, my_share(s, x, 77), mode);
               o1 = art.output;
               d1 = art.derivative;
             });
    for (std::size_t i = 0; i < x.size(); ++i) {
      u64 want = xv[i] > 0 ? x[i] : 0;
      CHECK(reconstruct(o0[i], o1[i], fp) == want);
      CHECK(reconstruct(d0[i], d1[i], fp) == u64(xv[i] > 0 ? 1 : 0));
    }
  }
}

TEST_CASE("relu modes share one mask schedule and produce equal shares") {
  SessionConfig cfg;
  std::vector<u64> x{encode(1.5, cfg.fp), encode(-2.0, cfg.fp), 0};
  std::vector<u64> dealer0, trusted0;
  for (OtMode mode : {OtMode::dealer, OtMode::trusted_test}) {
    run_pair(cfg, 15,
             [&](Session& s) {
               s.handshake();
               ReluArtifacts art = secure_relu(s, my_share(s, x, 78), mode);
               (mode == OtMode::dealer ? dealer0 : trusted0) = art.output;
             },
             [&](Session& s) {
               s.handshake();
               secure_relu(s, my_share(s, x, 78), mode);
             });
  }
  CHECK(dealer0 == trusted0);
}

TEST_CASE("secure relu sweeps an l=8 value and mask grid exactly") {
  SessionConfig cfg;
  cfg.fp.l = 8;
  cfg.fp.f = 2;
  const FixedPointConfig fp = cfg.fp;
  // all 256 values, 8 fixed party-0 shares each; the full grid runs in the
  // acceptance gate
  std::vector<u64> values, masks;
  for (int v = 0; v < 256; ++v)
    for (u64 m : {0ULL, 1ULL, 64ULL, 127ULL, 128ULL, 200ULL, 254ULL, 255ULL}) {
      values.push_back(u64(v));
      masks.push_back(m);
    }
  std::vector<u64> o0, o1, d0, d1;
  run_pair(cfg, 16,
           [&](Session& s) {
             s.handshake();
             ReluArtifacts art = secure_relu(s, masks, OtMode::dealer);
             o0 = art.output;
             d0 = art.derivative;
           },
           [&](Session& s) {
             s.handshake();
             std::vector<u64> mine(values.size());
             for (std::size_t i = 0; i < values.size(); ++i)
               mine[i] = ring_sub(values[i], masks[i], fp);
             ReluArtifacts art = secure_relu(s, mine, OtMode::dealer);
             o1 = art.output;
             d1 = art.derivative;
           });
  for (std::size_t i = 0; i < values.size(); ++i) {
    i64 sx = to_signed(values[i], fp);
    CHECK(reconstruct(o0[i], o1[i], fp) == (sx > 0 ? values[i] : 0));
    CHECK(reconstruct(d0[i], d1[i], fp) == u64(sx > 0 ? 1 : 0));
  }
}

TEST_CASE("clipped relu windows the derivative") {
  SessionConfig cfg;
  const FixedPointConfig fp = cfg.fp;
  std::vector<double> xv{-3.0, -0.001, 0.0, 0.001, 1.0, 15.999, 16.0, 17.5, 100.0};
  std::vector<u64> x(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) x[i] = encode(xv[i], fp);
  std::vector<u64> o0, o1, d0, d1;
  run_pair(cfg, 17,
           [&](Session& s) {
             s.handshake();
             ReluArtifacts art = secure_relu_clip(s, my_share(s, x, 79), 16.0);
             o0 = art.output;
             d0 = art.derivative;
           },
           [&](Session& s) {
             s.handshake();
             ReluArtifacts art = secure_relu_clip(s, my_share(s, x, 79), 16.0);
             o1 = art.output;
             d1 = art.derivative;
           });
  for (std::size_t i = 0; i < x.size(); ++i) {
    double want = std::clamp(xv[i], 0.0, 16.0);
    CHECK(decode(reconstruct(o0[i], o1[i], fp), fp) == doctest::Approx(want));
    u64 ind = (xv[i] > 0.0 && xv[i] < 16.0) ? 1 : 0;
    CHECK(reconstruct(d0[i], d1[i], fp) == ind);
  }
}

TEST_CASE("relu backward routes gradients through the indicator") {
  SessionConfig cfg;
  const FixedPointConfig fp = cfg.fp;
  std::vector<double> xv{-2.0, 3.0, 0.0, 5.5}, gv{0.5, -1.25, 2.0, 4.0};
  std::vector<u64> x(4), g(4);
  for (int i = 0; i < 4; ++i) {
    x[i] = encode(xv[i], fp);
    g[i] = encode(gv[i], fp);
  }
  std::vector<u64> r0, r1;
  run_pair(cfg, 18,
           [&](Session& s) {
             s.handshake();
             ReluArtifacts art = secure_relu(s, my_share(s, x, 80));
             r0 = relu_backward(s, my_share(s, g, 81), art);
           },
           [&](Session& s) {
             s.handshake();
             ReluArtifacts art = secure_relu(s, my_share(s, x, 80));
             r1 = relu_backward(s, my_share(s, g, 81), art);
           });
  for (int i = 0; i < 4; ++i) {
    double want = xv[i] > 0 ? gv[i] : 0.0;
    CHECK(decode(reconstruct(r0[i], r1[i], fp), fp) == doctest::Approx(want));
  }
}

TEST_CASE("pair max keeps the winner's shares and publishes the bit") {
  SessionConfig cfg;
  const FixedPointConfig fp = cfg.fp;
  std::vector<double> xv{1.0, -2.0, 3.5, 0.0, -1.0}, yv{0.5, -1.0, 3.5, 0.0, 4.0};
  std::vector<u64> x(5), y(5);
  for (int i = 0; i < 5; ++i) {
    x[i] = encode(xv[i], fp);
    y[i] = encode(yv[i], fp);
  }
  std::vector<u64> m0, m1;
  std::vector<u8> bits0, bits1;
  run_pair(cfg, 19,
           [&](Session& s) {
             s.handshake();
             MaxArtifacts art = secure_pair_max(s, my_share(s, x, 82), my_share(s, y, 83));
             m0 = art.max;
             bits0 = art.bits;
           },
           [&](Session& s) {
             s.handshake();
             MaxArtifacts art = secure_pair_max(s, my_share(s, x, 82), my_share(s, y, 83));
             m1 = art.max;
             bits1 = art.bits;
           });
  CHECK(bits0 == bits1);  // the comparison bit is public
  for (int i = 0; i < 5; ++i) {
    CHECK(decode(reconstruct(m0[i], m1[i], fp), fp) ==
          doctest::Approx(std::max(xv[i], yv[i])));
    CHECK(bits0[i] == u8(xv[i] > yv[i]));  // ties pick the second argument
  }
}

TEST_CASE("pair max sweeps an l=8 grid exactly") {
  SessionConfig cfg;
  cfg.fp.l = 8;
  cfg.fp.f = 2;
  const FixedPointConfig fp = cfg.fp;
  // the comparison is exact only while x - y stays in signed range
  std::vector<u64> x, y;
  for (int a = 0; a < 256; a += 3)
    for (int b = 1; b < 256; b += 19) {
      // the circuit evaluates y - x, so that difference must be in range
      i64 d = to_signed(u64(a), fp) - to_signed(u64(b), fp);
      if (d < -127 || d > 128) continue;
      x.push_back(u64(a));
      y.push_back(u64(b));
    }
  std::vector<u64> m0, m1;
  std::vector<u8> bits;
  run_pair(cfg, 20,
           [&](Session& s) {
             s.handshake();
             MaxArtifacts art = secure_pair_max(s, my_share(s, x, 84), my_share(s, y, 85));
             m0 = art.max;
             bits = art.bits;
           },
           [&](Session& s) {
             s.handshake();
             m1 = secure_pair_max(s, my_share(s, x, 84), my_share(s, y, 85)).max;
           });
  for (std::size_t i = 0; i < x.size(); ++i) {
    i64 sx = to_signed(x[i], fp), sy = to_signed(y[i], fp);
    CHECK(bits[i] == u8(sx > sy));
    CHECK(reconstruct(m0[i], m1[i], fp) == (sx > sy ? x[i] : y[i]));
  }
}

TEST_CASE("maxpool tournament matches the plaintext pool") {
  SessionConfig cfg;
  const FixedPointConfig fp = cfg.fp;
  std::size_t rows = 4, cols = 6;
  Prg vals(21);
  std::vector<double> xv(rows * cols);
  std::vector<u64> x(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i)
    x[i] = encode(xv[i] = (vals.next_unit() - 0.5) * 8.0, fp);
  std::vector<u64> o0, o1;
  std::vector<u8> bits;
  run_pair(cfg, 22,
           [&](Session& s) {
             s.handshake();
             MaxPoolArtifacts art = secure_maxpool(s, my_share(s, x, 86), rows, cols);
             o0 = art.out;
             bits = art.bits;
           },
           [&](Session& s) {
             s.handshake();
             o1 = secure_maxpool(s, my_share(s, x, 86), rows, cols).out;
           });
  std::vector<double> want = oracle_maxpool(xv, rows, cols);
  REQUIRE(o0.size() == want.size());
  CHECK(bits.size() == want.size() * 3);
  for (std::size_t i = 0; i < want.size(); ++i)
    CHECK(decode(reconstruct(o0[i], o1[i], fp), fp) == doctest::Approx(want[i]));

  // gradient routing sends everything to the winning slot
  std::vector<u64> g(want.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = encode(double(i + 1), fp);
  std::vector<u64> back = maxpool_backward(g, bits, rows, cols);
  REQUIRE(back.size() == x.size());
  for (std::size_t r = 0; r + 1 < rows; r += 2)
    for (std::size_t c = 0; c + 1 < cols; c += 2) {
      double win = want[(r / 2) * (cols / 2) + c / 2];
      u64 gin = g[(r / 2) * (cols / 2) + c / 2];
      int winners = 0;
      for (std::size_t dr = 0; dr < 2; ++dr)
        for (std::size_t dc = 0; dc < 2; ++dc) {
          u64 b = back[(r + dr) * cols + c + dc];
          if (xv[(r + dr) * cols + c + dc] == win) {
            // the winner slot carries the full gradient
            if (b == gin) ++winners;
          } else {
            CHECK(b == 0);
          }
        }
      CHECK(winners == 1);
    }

  CHECK_THROWS_AS(maxpool_backward(g, bits, 3, cols), ProtocolError);
}

TEST_CASE("odd pooling shapes are rejected") {
  SessionConfig cfg;
  bool threw = false;
  try {
    run_pair(cfg, 23,
             [&](Session& s) {
               s.handshake();
               std::vector<u64> x(6, 0);
               secure_maxpool(s, x, 2, 3);
             },
             [&](Session& s) {
               s.handshake();
               std::vector<u64> x(6, 0);
               secure_maxpool(s, x, 2, 3);
             });
  } catch (const ProtocolError&) {
    threw = true;
  }
  CHECK(threw);
}
