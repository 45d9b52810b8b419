#include "mpcnn/session.hpp"

#include <cstdlib>
#include <exception>
#include <thread>

namespace mpcnn {

u64 resolve_seed(u64 fallback) {
  if (const char* env = std::getenv("MPC_SEED")) {
    char* end = nullptr;
    u64 v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0') throw ConfigError("MPC_SEED is not an integer");
    return v;
  }
  return fallback;
}

Session::Session(PartyId me, const SessionConfig& cfg, Transport& tr, TripleSource& triples)
    : me_(me),
      cfg_(cfg),
      tr_(tr),
      triples_(triples),
      mask_rng_(derive_stream(cfg.party_seed, "masks")),
      label_rng_(derive_stream(cfg.party_seed, "labels")),
      shared_rng_(derive_stream(cfg.seed, "shared")) {
  cfg_.fp.validate();
  tr_.timeout = cfg.timeout;
}

void Session::handshake() {
  std::vector<u8> hello;
  put_u32(hello, kProtocolVersion);
  hello.push_back(u8(cfg_.fp.l));
  hello.push_back(u8(cfg_.fp.f));
  // commitment to the party seed; compared only for transcript determinism
  put_u64(hello, derive_stream(cfg_.party_seed, "commit").next());
  send(0, MsgKind::control, hello);
  Message peer = recv(0, MsgKind::control);
  if (peer.payload.size() != 14) throw TransportError("handshake: bad payload size");
  u32 ver = get_u32(peer.payload.data());
  if (ver != kProtocolVersion)
    throw ConfigError("handshake mismatch: protocol version (ours " +
                      std::to_string(kProtocolVersion) + ", peer " + std::to_string(ver) + ")");
  if (peer.payload[4] != u8(cfg_.fp.l))
    throw ConfigError("handshake mismatch: ring width l (ours " + std::to_string(cfg_.fp.l) +
                      ", peer " + std::to_string(int(peer.payload[4])) + ")");
  if (peer.payload[5] != u8(cfg_.fp.f))
    throw ConfigError("handshake mismatch: fractional bits f (ours " +
                      std::to_string(cfg_.fp.f) + ", peer " + std::to_string(int(peer.payload[5])) +
                      ")");
}

void Session::send(u8 tag, MsgKind kind, std::vector<u8> payload) {
  Message m;
  m.tag = tag;
  m.kind = kind;
  m.payload = std::move(payload);
  tr_.send(m);
  stats_.total_sent = tr_.bytes_sent();
}

Message Session::recv(u8 tag, MsgKind kind) {
  Message m = tr_.recv();
  stats_.total_received = tr_.bytes_received();
  if (m.tag != tag || m.kind != kind)
    throw ProtocolError("message sequence violation: expected tag " + std::to_string(tag) +
                        " kind " + std::to_string(int(kind)) + ", got tag " +
                        std::to_string(m.tag) + " kind " + std::to_string(int(m.kind)));
  return m;
}

void Session::send_words(u8 tag, MsgKind kind, std::span<const u64> words) {
  std::vector<u8> payload;
  payload.reserve(words.size() * 8);
  for (u64 w : words) put_u64(payload, w);
  send(tag, kind, std::move(payload));
}

std::vector<u64> Session::recv_words(u8 tag, MsgKind kind) {
  Message m = recv(tag, kind);
  if (m.payload.size() % 8 != 0) throw ProtocolError("word payload not a multiple of 8");
  std::vector<u64> out(m.payload.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = get_u64(m.payload.data() + 8 * i);
  return out;
}

std::vector<u64> Session::exchange(u8 tag, std::span<const u64> my_words) {
  send_words(tag, MsgKind::open, my_words);
  auto theirs = recv_words(tag, MsgKind::open);
  if (theirs.size() != my_words.size()) throw ProtocolError("open size mismatch");
  std::vector<u64> sum(theirs.size());
  for (std::size_t i = 0; i < sum.size(); ++i)
    sum[i] = ring_add(theirs[i], my_words[i], cfg_.fp);
  return sum;
}

std::vector<u64> Session::open_masked(u8 tag, std::span<const u64> my_words) {
  return exchange(tag, my_words);
}

std::vector<u64> Session::reveal(std::span<const u64> shares, RevealSanction why) {
  if (why == RevealSanction::test_flag && !cfg_.allow_test_reveals)
    throw ProtocolError("test reveal requested without the test flag");
  ++sanctioned_reveals_;
  return exchange(4, shares);
}

std::vector<u64> Session::reveal_unsanctioned_for_test(std::span<const u64> shares) {
  ++unsanctioned_reveals_;
  return exchange(4, shares);
}

Session::Scope::Scope(Session& s, std::string name)
    : s_(s),
      name_(std::move(name)),
      sent0_(s.tr_.bytes_sent()),
      recv0_(s.tr_.bytes_received()),
      t0_(std::chrono::steady_clock::now()) {}

Session::Scope::~Scope() {
  auto& rec = s_.stats_.records[name_];
  rec.bytes_sent += s_.tr_.bytes_sent() - sent0_;
  rec.bytes_received += s_.tr_.bytes_received() - recv0_;
  rec.invocations += 1;
  rec.seconds +=
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
}

void run_pair_with_sources(const SessionConfig& cfg, TripleSource& d0, TripleSource& d1,
                           const std::function<void(Session&)>& party0,
                           const std::function<void(Session&)>& party1) {
  auto [t0, t1] = InProcessTransport::make_pair();
  std::exception_ptr e0, e1;

  std::thread th1([&] {
    try {
      Session s1(PartyId::p1, cfg, *t1, d1);
      party1(s1);
    } catch (...) {
      e1 = std::current_exception();
    }
  });
  try {
    Session s0(PartyId::p0, cfg, *t0, d0);
    party0(s0);
  } catch (...) {
    e0 = std::current_exception();
  }
  th1.join();
  if (e0) std::rethrow_exception(e0);
  if (e1) std::rethrow_exception(e1);
}

void run_pair(const SessionConfig& cfg, u64 dealer_seed,
              const std::function<void(Session&)>& party0,
              const std::function<void(Session&)>& party1) {
  LazyDealerSource d0(dealer_seed, PartyId::p0, cfg.fp);
  LazyDealerSource d1(dealer_seed, PartyId::p1, cfg.fp);
  run_pair_with_sources(cfg, d0, d1, party0, party1);
}

}  // namespace mpcnn
