#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <thread>

#include "mpcnn/session.hpp"
#include "mpcnn/transport.hpp"

using namespace mpcnn;

TEST_CASE("frame layout is length u32 LE, tag, kind, payload") {
  Message m;
  m.tag = 7;
  m.kind = MsgKind::labels;
  m.payload = {0xaa, 0xbb, 0xcc};
  std::vector<u8> f = frame_message(m);
  CHECK(f == std::vector<u8>{5, 0, 0, 0, 7, 2, 0xaa, 0xbb, 0xcc});
  Message back = parse_frame(f.data(), f.size());
  CHECK(back.tag == 7);
  CHECK(back.kind == MsgKind::labels);
  CHECK(back.payload == m.payload);
}

TEST_CASE("parse_frame rejects malformed frames") {
  CHECK_THROWS_AS(parse_frame(nullptr, 0), TransportError);
  u8 short_hdr[3] = {3, 0, 0};
  CHECK_THROWS_AS(parse_frame(short_hdr, 3), TransportError);
  // length promises more bytes than provided
  u8 hungry[7] = {9, 0, 0, 0, 1, 0, 5};
  CHECK_THROWS_AS(parse_frame(hungry, 7), TransportError);
  // unknown message kind
  u8 bad_kind[6] = {2, 0, 0, 0, 1, 200};
  CHECK_THROWS_AS(parse_frame(bad_kind, 6), TransportError);
}

TEST_CASE("in-process pair delivers frames in order and counts bytes") {
  auto [a, b] = InProcessTransport::make_pair();
  Message m1;
  m1.tag = 1;
  m1.kind = MsgKind::open;
  m1.payload = {1, 2, 3, 4};
  Message m2;
  m2.tag = 2;
  m2.kind = MsgKind::control;
  a->send(m1);
  a->send(m2);
  Message r1 = b->recv();
  Message r2 = b->recv();
  CHECK(r1.tag == 1);
  CHECK(r1.payload == m1.payload);
  CHECK(r2.tag == 2);
  CHECK(r2.payload.empty());
  // framed size: 4-byte length + tag + kind + payload
  CHECK(a->bytes_sent() == (4 + 2 + 4) + (4 + 2));
  CHECK(b->bytes_received() == a->bytes_sent());
  CHECK(a->bytes_received() == 0);
}

TEST_CASE("in-process recv times out when the peer is silent") {
  auto [a, b] = InProcessTransport::make_pair();
  b->timeout = std::chrono::milliseconds(50);
  CHECK_THROWS_AS(b->recv(), TransportError);
}

TEST_CASE("large payload survives both transports") {
  std::vector<u8> big(1 << 18);
  for (std::size_t i = 0; i < big.size(); ++i) big[i] = u8(i * 31);

  SUBCASE("in-process") {
    auto [a, b] = InProcessTransport::make_pair();
    Message m;
    m.tag = 2;
    m.kind = MsgKind::circuit;
    m.payload = big;
    a->send(m);
    CHECK(b->recv().payload == big);
  }
  SUBCASE("tcp loopback") {
    std::unique_ptr<TcpTransport> server;
    std::thread t([&] { server = TcpTransport::listen("127.0.0.1", 19471); });
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    auto client = TcpTransport::connect("127.0.0.1", 19471);
    t.join();
    Message m;
    m.tag = 2;
    m.kind = MsgKind::circuit;
    m.payload = big;
    client->send(m);
    Message got = server->recv();
    CHECK(got.payload == big);
    CHECK(server->bytes_received() == client->bytes_sent());
    // and the reverse direction
    got.tag = 3;
    server->send(got);
    Message back = client->recv();
    CHECK(back.tag == 3);
    CHECK(back.payload == big);
  }
}

TEST_CASE("tcp recv times out when the peer is silent") {
  std::unique_ptr<TcpTransport> server;
  std::thread t([&] { server = TcpTransport::listen("127.0.0.1", 19472); });
  std::this_thread::sleep_for(std::chrono::milliseconds(50));
  auto client = TcpTransport::connect("127.0.0.1", 19472);
  t.join();
  client->timeout = std::chrono::milliseconds(50);
  CHECK_THROWS_AS(client->recv(), TransportError);
}

TEST_CASE("comm stats convert bytes to kilobits") {
  CHECK(CommStats::kb(1024) == doctest::Approx(8.0));
  CHECK(CommStats::kb(128) == doctest::Approx(1.0));
}

TEST_CASE("session words round-trip and the open is symmetric") {
  SessionConfig cfg;
  std::vector<u64> opened0, opened1;
  run_pair(cfg, 5,
           [&](Session& s) {
             s.handshake();
             s.send_words(1, MsgKind::open, std::vector<u64>{10, 20});
             opened0 = s.open_masked(1, std::vector<u64>{1, 2});
           },
           [&](Session& s) {
             s.handshake();
             std::vector<u64> w = s.recv_words(1, MsgKind::open);
             CHECK(w == std::vector<u64>{10, 20});
             opened1 = s.open_masked(1, std::vector<u64>{3, 4});
           });
  CHECK(opened0 == std::vector<u64>{4, 6});
  CHECK(opened0 == opened1);
}

TEST_CASE("handshake rejects mismatched ring parameters") {
  auto [t0, t1] = InProcessTransport::make_pair();
  SessionConfig c0, c1;
  c1.fp.f = 13;
  LazyDealerSource d0(3, PartyId::p0, c0.fp), d1(3, PartyId::p1, c1.fp);
  Session s0(PartyId::p0, c0, *t0, d0);
  Session s1(PartyId::p1, c1, *t1, d1);
  bool failed0 = false, failed1 = false;
  std::thread a([&] {
    try {
      s0.handshake();
    } catch (const ConfigError&) {
      failed0 = true;
    }
  });
  std::thread b([&] {
    try {
      s1.handshake();
    } catch (const ConfigError&) {
      failed1 = true;
    }
  });
  a.join();
  b.join();
  CHECK(failed0);
  CHECK(failed1);
}

TEST_CASE("reveal is audited and gated by the test flag") {
  SessionConfig cfg;  // allow_test_reveals defaults to false
  run_pair(cfg, 6,
           [&](Session& s) {
             s.handshake();
             std::vector<u64> sh{123};
             CHECK_THROWS_AS(s.reveal(sh, RevealSanction::test_flag), ProtocolError);
             CHECK(s.sanctioned_reveals() == 0);
             std::vector<u64> got = s.reveal_unsanctioned_for_test(sh);
             CHECK(got[0] == 123 + 77);
             CHECK(s.unsanctioned_reveals() == 1);
           },
           [&](Session& s) {
             s.handshake();
             std::vector<u64> sh{77};
             CHECK_THROWS_AS(s.reveal(sh, RevealSanction::test_flag), ProtocolError);
             s.reveal_unsanctioned_for_test(sh);
           });

  SessionConfig open_cfg;
  open_cfg.allow_test_reveals = true;
  run_pair(open_cfg, 6,
           [&](Session& s) {
             s.handshake();
             std::vector<u64> sh{40};
             std::vector<u64> got = s.reveal(sh, RevealSanction::test_flag);
             CHECK(got[0] == 42);
             CHECK(s.sanctioned_reveals() == 1);
             CHECK(s.unsanctioned_reveals() == 0);
           },
           [&](Session& s) {
             s.handshake();
             std::vector<u64> sh{2};
             CHECK(s.reveal(sh, RevealSanction::test_flag)[0] == 42);
           });
}

TEST_CASE("scoped stats attribute traffic to the active protocol") {
  SessionConfig cfg;
  run_pair(cfg, 8,
           [&](Session& s) {
             s.handshake();
             {
               auto sc = s.scoped("ping");
               s.send_words(1, MsgKind::open, std::vector<u64>{1});
               s.recv_words(1, MsgKind::open);
             }
             const CommRecord& rec = s.stats().records.at("ping");
             CHECK(rec.invocations == 1);
             CHECK(rec.bytes_sent == 4 + 2 + 8);
             CHECK(rec.bytes_received == 4 + 2 + 8);
             CHECK(rec.seconds >= 0.0);
           },
           [&](Session& s) {
             s.handshake();
             s.recv_words(1, MsgKind::open);
             s.send_words(1, MsgKind::open, std::vector<u64>{2});
           });
}
