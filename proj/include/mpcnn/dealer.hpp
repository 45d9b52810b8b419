#pragma once

#include <array>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "mpcnn/ring.hpp"

namespace mpcnn {

// One party's additive shares of a multiplication triple c = a * b.
struct ScalarTriple {
  u64 a = 0, b = 0, c = 0;
  bool used = false;
};

// One party's shares of a matrix triple C = A * B with A: n x k, B: k x m.
struct MatrixTriple {
  std::size_t n = 0, k = 0, m = 0;
  std::vector<u64> a, b, c;
};

// Precomputed 1-of-2 OT correlation (Beaver's OT precomputation): the
// receiver holds a random bit d and pad p_d; the sender holds both pads.
// Online, the receiver sends e = choice ^ d and the sender replies with
// m_i ^ p_(i^e), so the receiver can strip exactly its chosen message.
using OtPad = std::array<u8, 16>;
struct OtSender {
  OtPad p0{}, p1{};
};
struct OtReceiver {
  u8 d = 0;
  OtPad pd{};
};

// Correlated randomness feed for one party. Both parties (and the mirror
// oracle) must issue identical request sequences; the dealer streams are
// derived from one seed, so matching halves line up by construction.
class TripleSource {
 public:
  virtual ~TripleSource() = default;
  virtual ScalarTriple next_scalar() = 0;
  virtual MatrixTriple next_matrix(std::size_t n, std::size_t k, std::size_t m) = 0;
  virtual OtSender next_ot_sender() = 0;
  virtual OtReceiver next_ot_receiver() = 0;
  // share of a dealer-sampled uniform(-bound, bound) model parameter
  virtual u64 next_init(double bound) = 0;
};

// Full-view generator used by the dealer itself, by the in-process source
// and by the mirror oracle. Draw order is canonical and must not change:
// scalar: a, b, a0, b0, c0; matrix: A, B row-major, then A0, B0, C0;
// OT: p0, p1, d.
class DealerGenerator {
 public:
  DealerGenerator(u64 seed, const FixedPointConfig& fp);

  struct FullScalar {
    u64 a, b, c;
    u64 a0, b0, c0;  // party-1 halves follow by subtraction
  };
  struct FullMatrix {
    std::size_t n, k, m;
    std::vector<u64> a, b, c, a0, b0, c0;
  };
  struct FullOt {
    OtPad p0, p1;
    u8 d;
  };
  struct FullInit {
    u64 v, v0;  // encoded parameter and party 0's share
  };

  FullScalar next_scalar();
  FullMatrix next_matrix(std::size_t n, std::size_t k, std::size_t m);
  FullOt next_ot();
  // init draw order: one unit uniform for the value, one word for the share
  FullInit next_init(double bound);

  const FixedPointConfig& fp() const { return fp_; }

 private:
  FixedPointConfig fp_;
  Prg scalar_rng_, matrix_rng_, ot_rng_, init_rng_;
};

// In-process dealer: both parties own one of these with the same seed and
// pull their own halves lazily. Stands in for pre-distributed files.
class LazyDealerSource : public TripleSource {
 public:
  LazyDealerSource(u64 seed, PartyId party, const FixedPointConfig& fp)
      : gen_(seed, fp), party_(party) {}

  ScalarTriple next_scalar() override;
  MatrixTriple next_matrix(std::size_t n, std::size_t k, std::size_t m) override;
  OtSender next_ot_sender() override;
  OtReceiver next_ot_receiver() override;
  u64 next_init(double bound) override;

 private:
  DealerGenerator gen_;
  PartyId party_;
};

// What dealer_generate should pre-produce for a file-based run.
struct DealerPlan {
  u64 scalar_triples = 0;
  u64 ot_count = 0;
  std::vector<std::array<std::size_t, 3>> matrices;  // (n, k, m) in consumption order
  std::vector<std::pair<u64, double>> inits;         // (count, bound) runs, in order
};

struct DealerArtifacts {
  std::string path0;  // file for party 0
  std::string path1;  // file for party 1
};

// Writes per-party artifact files. Layout: "MPCT" section (scalar triples),
// "MPCO" section (OT correlations; sender pads for party 0, receiver bit and
// pad for party 1), "MPCM" section (matrix triples), "MPCW" section
// (pre-shared parameter initializations). All integers LE.
DealerArtifacts dealer_generate(u64 seed, const FixedPointConfig& fp, const DealerPlan& plan,
                                const std::string& dir);

// Loads one party's artifact file into memory and serves it sequentially.
class FileDealerSource : public TripleSource {
 public:
  FileDealerSource(const std::string& path, PartyId party, const FixedPointConfig& fp);

  ScalarTriple next_scalar() override;
  MatrixTriple next_matrix(std::size_t n, std::size_t k, std::size_t m) override;
  OtSender next_ot_sender() override;
  OtReceiver next_ot_receiver() override;
  u64 next_init(double bound) override;

 private:
  PartyId party_;
  std::vector<ScalarTriple> scalars_;
  std::size_t scalar_at_ = 0;
  std::vector<MatrixTriple> matrices_;
  std::size_t matrix_at_ = 0;
  std::vector<OtSender> ot_send_;
  std::vector<OtReceiver> ot_recv_;
  std::size_t ot_at_ = 0;
  std::vector<u64> inits_;
  std::size_t init_at_ = 0;
};

}  // namespace mpcnn
