#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <span>
#include <string>

#include "mpcnn/dealer.hpp"
#include "mpcnn/ring.hpp"
#include "mpcnn/transport.hpp"

namespace mpcnn {

inline constexpr u32 kProtocolVersion = 1;

struct SessionConfig {
  FixedPointConfig fp;
  u64 seed = 1;               // shared session seed: shuffles, public schedule
  u64 party_seed = 0x517cc1b727220a95ULL;  // party-local; party 0's drives masks
  bool allow_test_reveals = false;
  std::chrono::milliseconds timeout{30000};
};

// honors the MPC_SEED environment override the CLI documents
u64 resolve_seed(u64 fallback);

enum class RevealSanction : u8 { test_flag, architecture };

// Two-party connection state: transport, correlated randomness, seeded
// randomness streams, traffic accounting and the reveal audit.
class Session {
 public:
  Session(PartyId me, const SessionConfig& cfg, Transport& tr, TripleSource& triples);

  // exchanges and checks version, l, f and a seed commitment
  void handshake();

  PartyId me() const { return me_; }
  const FixedPointConfig& fp() const { return cfg_.fp; }
  const SessionConfig& config() const { return cfg_; }
  TripleSource& triples() { return triples_; }

  // party 0's share-affecting mask stream (GC masks, re-share windows);
  // the mirror oracle replays this stream, so only draw from it in
  // canonical protocol order
  Prg& mask_rng() { return mask_rng_; }
  // garbling label stream; never touches share values
  Prg& label_rng() { return label_rng_; }
  // shared stream both parties derive identically from the session seed
  Prg& shared_rng() { return shared_rng_; }

  void send(u8 tag, MsgKind kind, std::vector<u8> payload);
  Message recv(u8 tag, MsgKind kind);

  void send_words(u8 tag, MsgKind kind, std::span<const u64> words);
  std::vector<u64> recv_words(u8 tag, MsgKind kind);

  // Beaver-style masked opening: both sides exchange masked words and sum.
  // Not a reconstruction of a logical value; not counted by the audit.
  std::vector<u64> open_masked(u8 tag, std::span<const u64> my_words);

  // Audited reveal of a logical shared value; test_flag sanction requires
  // allow_test_reveals in the config.
  std::vector<u64> reveal(std::span<const u64> shares, RevealSanction why);

  u64 sanctioned_reveals() const { return sanctioned_reveals_; }
  u64 unsanctioned_reveals() const { return unsanctioned_reveals_; }
  // test hook: exercises the unsanctioned path so the audit has something to count
  std::vector<u64> reveal_unsanctioned_for_test(std::span<const u64> shares);

  CommStats& stats() { return stats_; }

  class Scope {
   public:
    Scope(Session& s, std::string name);
    ~Scope();
    Scope(const Scope&) = delete;

   private:
    Session& s_;
    std::string name_;
    u64 sent0_, recv0_;
    std::chrono::steady_clock::time_point t0_;
  };
  Scope scoped(std::string name) { return Scope(*this, std::move(name)); }

 private:
  std::vector<u64> exchange(u8 tag, std::span<const u64> my_words);

  PartyId me_;
  SessionConfig cfg_;
  Transport& tr_;
  TripleSource& triples_;
  Prg mask_rng_, label_rng_, shared_rng_;
  CommStats stats_;
  u64 sanctioned_reveals_ = 0;
  u64 unsanctioned_reveals_ = 0;
};

// Runs party closures over an in-process transport pair on two threads.
// Exceptions from either side are rethrown on the caller's thread.
void run_pair(const SessionConfig& cfg, u64 dealer_seed,
              const std::function<void(Session&)>& party0,
              const std::function<void(Session&)>& party1);

// same, with caller-owned correlated randomness (e.g. file artifacts)
void run_pair_with_sources(const SessionConfig& cfg, TripleSource& d0, TripleSource& d1,
                           const std::function<void(Session&)>& party0,
                           const std::function<void(Session&)>& party1);

}  // namespace mpcnn
