#include "mpcnn/dealer.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "mpcnn/transport.hpp"

namespace mpcnn {

DealerGenerator::DealerGenerator(u64 seed, const FixedPointConfig& fp)
    : fp_(fp),
      scalar_rng_(derive_stream(seed, "dealer/scalar")),
      matrix_rng_(derive_stream(seed, "dealer/matrix")),
      ot_rng_(derive_stream(seed, "dealer/ot")),
      init_rng_(derive_stream(seed, "dealer/init")) {}

DealerGenerator::FullScalar DealerGenerator::next_scalar() {
  FullScalar t{};
  u64 mask = fp_.mask();
  t.a = scalar_rng_.next() & mask;
  t.b = scalar_rng_.next() & mask;
  t.c = ring_mul(t.a, t.b, fp_);
  t.a0 = scalar_rng_.next() & mask;
  t.b0 = scalar_rng_.next() & mask;
  t.c0 = scalar_rng_.next() & mask;
  return t;
}

DealerGenerator::FullMatrix DealerGenerator::next_matrix(std::size_t n, std::size_t k,
                                                         std::size_t m) {
  FullMatrix t;
  t.n = n;
  t.k = k;
  t.m = m;
  u64 mask = fp_.mask();
  auto fill = [&](std::vector<u64>& v, std::size_t count) {
    v.resize(count);
    for (auto& x : v) x = matrix_rng_.next() & mask;
  };
  fill(t.a, n * k);
  fill(t.b, k * m);
  t.c.resize(n * m);
  ring_matmul(t.a.data(), t.b.data(), t.c.data(), n, k, m, fp_);
  fill(t.a0, n * k);
  fill(t.b0, k * m);
  fill(t.c0, n * m);
  return t;
}

DealerGenerator::FullInit DealerGenerator::next_init(double bound) {
  FullInit t{};
  t.v = encode((2.0 * init_rng_.next_unit() - 1.0) * bound, fp_);
  t.v0 = init_rng_.next() & fp_.mask();
  return t;
}

DealerGenerator::FullOt DealerGenerator::next_ot() {
  FullOt t{};
  auto fill_pad = [&](OtPad& p) {
    u64 lo = ot_rng_.next(), hi = ot_rng_.next();
    std::memcpy(p.data(), &lo, 8);
    std::memcpy(p.data() + 8, &hi, 8);
  };
  fill_pad(t.p0);
  fill_pad(t.p1);
  t.d = u8(ot_rng_.next() & 1);
  return t;
}

namespace {

std::vector<u64> sub_all(const std::vector<u64>& full, const std::vector<u64>& half,
                         const FixedPointConfig& fp) {
  std::vector<u64> out(full.size());
  for (std::size_t i = 0; i < full.size(); ++i) out[i] = ring_sub(full[i], half[i], fp);
  return out;
}

}  // namespace

ScalarTriple LazyDealerSource::next_scalar() {
  auto t = gen_.next_scalar();
  const auto& fp = gen_.fp();
  if (party_ == PartyId::p0) return {t.a0, t.b0, t.c0, false};
  return {ring_sub(t.a, t.a0, fp), ring_sub(t.b, t.b0, fp), ring_sub(t.c, t.c0, fp), false};
}

MatrixTriple LazyDealerSource::next_matrix(std::size_t n, std::size_t k, std::size_t m) {
  auto t = gen_.next_matrix(n, k, m);
  MatrixTriple out;
  out.n = n;
  out.k = k;
  out.m = m;
  if (party_ == PartyId::p0) {
    out.a = std::move(t.a0);
    out.b = std::move(t.b0);
    out.c = std::move(t.c0);
  } else {
    const auto& fp = gen_.fp();
    out.a = sub_all(t.a, t.a0, fp);
    out.b = sub_all(t.b, t.b0, fp);
    out.c = sub_all(t.c, t.c0, fp);
  }
  return out;
}

OtSender LazyDealerSource::next_ot_sender() {
  if (party_ != PartyId::p0) throw ProtocolError("party 1 is never the OT sender");
  auto t = gen_.next_ot();
  return {t.p0, t.p1};
}

u64 LazyDealerSource::next_init(double bound) {
  auto t = gen_.next_init(bound);
  return party_ == PartyId::p0 ? t.v0 : ring_sub(t.v, t.v0, gen_.fp());
}

OtReceiver LazyDealerSource::next_ot_receiver() {
  if (party_ != PartyId::p1) throw ProtocolError("party 0 is never the OT receiver");
  auto t = gen_.next_ot();
  return {t.d, t.d ? t.p1 : t.p0};
}

namespace {

void write_header(std::vector<u8>& out, const char magic[4], const FixedPointConfig& fp,
                  u64 count) {
  out.insert(out.end(), magic, magic + 4);
  put_u16(out, 1);  // format version
  out.push_back(u8(fp.l));
  put_u64(out, count);
}

struct Cursor {
  const std::vector<u8>& buf;
  std::size_t at = 0;

  void expect_magic(const char magic[4], const char* what) {
    if (at + 4 > buf.size() || std::memcmp(buf.data() + at, magic, 4) != 0)
      throw FormatError(std::string("dealer file: missing ") + what + " section");
    at += 4;
  }
  u16 u16v() {
    need(2);
    u16 v = get_u16(buf.data() + at);
    at += 2;
    return v;
  }
  u8 u8v() {
    need(1);
    return buf[at++];
  }
  u64 u64v() {
    need(8);
    u64 v = get_u64(buf.data() + at);
    at += 8;
    return v;
  }
  u32 u32v() {
    need(4);
    u32 v = get_u32(buf.data() + at);
    at += 4;
    return v;
  }
  void bytes(u8* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, buf.data() + at, n);
    at += n;
  }
  void need(std::size_t n) {
    if (at + n > buf.size()) throw FormatError("dealer file: truncated");
  }
};

}  // namespace

DealerArtifacts dealer_generate(u64 seed, const FixedPointConfig& fp, const DealerPlan& plan,
                                const std::string& dir) {
  std::filesystem::create_directories(dir);
  DealerGenerator gen(seed, fp);
  std::vector<u8> f0, f1;

  write_header(f0, "MPCT", fp, plan.scalar_triples);
  write_header(f1, "MPCT", fp, plan.scalar_triples);
  for (u64 i = 0; i < plan.scalar_triples; ++i) {
    auto t = gen.next_scalar();
    put_u64(f0, t.a0);
    put_u64(f0, t.b0);
    put_u64(f0, t.c0);
    put_u64(f1, ring_sub(t.a, t.a0, fp));
    put_u64(f1, ring_sub(t.b, t.b0, fp));
    put_u64(f1, ring_sub(t.c, t.c0, fp));
  }

  write_header(f0, "MPCO", fp, plan.ot_count);
  write_header(f1, "MPCO", fp, plan.ot_count);
  for (u64 i = 0; i < plan.ot_count; ++i) {
    auto t = gen.next_ot();
    f0.insert(f0.end(), t.p0.begin(), t.p0.end());
    f0.insert(f0.end(), t.p1.begin(), t.p1.end());
    f1.push_back(t.d);
    const OtPad& pd = t.d ? t.p1 : t.p0;
    f1.insert(f1.end(), pd.begin(), pd.end());
  }

  write_header(f0, "MPCM", fp, plan.matrices.size());
  write_header(f1, "MPCM", fp, plan.matrices.size());
  for (const auto& dims : plan.matrices) {
    auto t = gen.next_matrix(dims[0], dims[1], dims[2]);
    for (auto* f : {&f0, &f1}) {
      put_u32(*f, u32(dims[0]));
      put_u32(*f, u32(dims[1]));
      put_u32(*f, u32(dims[2]));
    }
    auto dump = [&](const std::vector<u64>& full, const std::vector<u64>& half) {
      for (std::size_t i = 0; i < full.size(); ++i) {
        put_u64(f0, half[i]);
        put_u64(f1, ring_sub(full[i], half[i], fp));
      }
    };
    dump(t.a, t.a0);
    dump(t.b, t.b0);
    dump(t.c, t.c0);
  }

  u64 init_total = 0;
  for (const auto& [count, bound] : plan.inits) init_total += count;
  write_header(f0, "MPCW", fp, init_total);
  write_header(f1, "MPCW", fp, init_total);
  for (const auto& [count, bound] : plan.inits)
    for (u64 i = 0; i < count; ++i) {
      auto t = gen.next_init(bound);
      put_u64(f0, t.v0);
      put_u64(f1, ring_sub(t.v, t.v0, fp));
    }

  DealerArtifacts art;
  art.path0 = (std::filesystem::path(dir) / "party0.deal").string();
  art.path1 = (std::filesystem::path(dir) / "party1.deal").string();
  std::ofstream(art.path0, std::ios::binary).write(reinterpret_cast<char*>(f0.data()),
                                                   std::streamsize(f0.size()));
  std::ofstream(art.path1, std::ios::binary).write(reinterpret_cast<char*>(f1.data()),
                                                   std::streamsize(f1.size()));
  return art;
}

FileDealerSource::FileDealerSource(const std::string& path, PartyId party,
                                   const FixedPointConfig& fp)
    : party_(party) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("dealer file not found: " + path);
  std::vector<u8> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Cursor c{buf};

  c.expect_magic("MPCT", "MPCT");
  u16 ver = c.u16v();
  if (ver != 1) throw FormatError("dealer file: unsupported MPCT version");
  u8 l = c.u8v();
  if (int(l) != fp.l) throw FormatError("dealer file: ring width mismatch");
  u64 count = c.u64v();
  scalars_.reserve(count);
  for (u64 i = 0; i < count; ++i) {
    ScalarTriple t;
    t.a = c.u64v();
    t.b = c.u64v();
    t.c = c.u64v();
    scalars_.push_back(t);
  }

  c.expect_magic("MPCO", "MPCO");
  if (c.u16v() != 1) throw FormatError("dealer file: unsupported MPCO version");
  c.u8v();
  u64 ot_count = c.u64v();
  for (u64 i = 0; i < ot_count; ++i) {
    if (party_ == PartyId::p0) {
      OtSender s;
      c.bytes(s.p0.data(), 16);
      c.bytes(s.p1.data(), 16);
      ot_send_.push_back(s);
    } else {
      OtReceiver r;
      r.d = c.u8v();
      c.bytes(r.pd.data(), 16);
      ot_recv_.push_back(r);
    }
  }

  c.expect_magic("MPCM", "MPCM");
  if (c.u16v() != 1) throw FormatError("dealer file: unsupported MPCM version");
  c.u8v();
  u64 mat_count = c.u64v();
  for (u64 i = 0; i < mat_count; ++i) {
    MatrixTriple t;
    t.n = c.u32v();
    t.k = c.u32v();
    t.m = c.u32v();
    auto load = [&](std::vector<u64>& v, std::size_t cnt) {
      v.resize(cnt);
      for (auto& x : v) x = c.u64v();
    };
    load(t.a, t.n * t.k);
    load(t.b, t.k * t.m);
    load(t.c, t.n * t.m);
    matrices_.push_back(std::move(t));
  }

  c.expect_magic("MPCW", "MPCW");
  if (c.u16v() != 1) throw FormatError("dealer file: unsupported MPCW version");
  c.u8v();
  u64 init_count = c.u64v();
  inits_.resize(init_count);
  for (auto& v : inits_) v = c.u64v();
}

ScalarTriple FileDealerSource::next_scalar() {
  if (scalar_at_ >= scalars_.size())
    throw ProtocolError("dealer artifacts exhausted: scalar triples");
  return scalars_[scalar_at_++];
}

MatrixTriple FileDealerSource::next_matrix(std::size_t n, std::size_t k, std::size_t m) {
  if (matrix_at_ >= matrices_.size())
    throw ProtocolError("dealer artifacts exhausted: matrix triples");
  auto& t = matrices_[matrix_at_++];
  if (t.n != n || t.k != k || t.m != m)
    throw ProtocolError("dealer matrix triple shape mismatch");
  return t;
}

OtSender FileDealerSource::next_ot_sender() {
  if (party_ != PartyId::p0) throw ProtocolError("party 1 is never the OT sender");
  if (ot_at_ >= ot_send_.size()) throw ProtocolError("dealer artifacts exhausted: OT");
  return ot_send_[ot_at_++];
}

OtReceiver FileDealerSource::next_ot_receiver() {
  if (party_ != PartyId::p1) throw ProtocolError("party 0 is never the OT receiver");
  if (ot_at_ >= ot_recv_.size()) throw ProtocolError("dealer artifacts exhausted: OT");
  return ot_recv_[ot_at_++];
}

u64 FileDealerSource::next_init(double) {
  // the bound only matters at generation time; shares are consumed in order
  if (init_at_ >= inits_.size())
    throw ProtocolError("dealer artifacts exhausted: parameter initializations");
  return inits_[init_at_++];
}

}  // namespace mpcnn
