#include "mpcnn/ot.hpp"

#include <cstring>

namespace mpcnn {

namespace {

Block pad_block(const OtPad& p) {
  Block b;
  std::memcpy(&b.lo, p.data(), 8);
  std::memcpy(&b.hi, p.data() + 8, 8);
  return b;
}

void append_block(std::vector<u8>& buf, Block b) {
  put_u64(buf, b.lo);
  put_u64(buf, b.hi);
}

Block read_block(const u8* p) { return Block{get_u64(p), get_u64(p + 8)}; }

}  // namespace

void ot_send_labels(Session& s, const std::vector<std::array<Block, 2>>& pairs, OtMode mode) {
  if (mode == OtMode::trusted_test) {
    std::vector<u8> payload;
    payload.reserve(pairs.size() * 32);
    for (const auto& p : pairs) {
      append_block(payload, p[0]);
      append_block(payload, p[1]);
    }
    s.send(kTagOt, MsgKind::ot, std::move(payload));
    return;
  }

  // receiver speaks first with its flipped choice bits
  Message m = s.recv(kTagOt, MsgKind::ot);
  if (m.payload.size() != (pairs.size() + 7) / 8)
    throw ProtocolError("ot: choice message has wrong size");

  std::vector<u8> payload;
  payload.reserve(pairs.size() * 32);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    u8 e = (m.payload[i / 8] >> (i % 8)) & 1;
    OtSender corr = s.triples().next_ot_sender();
    Block q0 = pad_block(corr.p0);
    Block q1 = pad_block(corr.p1);
    // c_i = m_i ^ p_(i^e); the receiver holds p_d with d = choice ^ e
    append_block(payload, pairs[i][0] ^ (e ? q1 : q0));
    append_block(payload, pairs[i][1] ^ (e ? q0 : q1));
  }
  s.send(kTagOt, MsgKind::ot, std::move(payload));
}

std::vector<Block> ot_recv_labels(Session& s, const std::vector<u8>& choices, OtMode mode) {
  if (mode == OtMode::trusted_test) {
    Message m = s.recv(kTagOt, MsgKind::ot);
    if (m.payload.size() != choices.size() * 32)
      throw ProtocolError("ot: label message has wrong size");
    std::vector<Block> out(choices.size());
    for (std::size_t i = 0; i < choices.size(); ++i)
      out[i] = read_block(m.payload.data() + i * 32 + (choices[i] & 1) * 16);
    return out;
  }

  std::vector<OtReceiver> corr(choices.size());
  std::vector<u8> flipped((choices.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < choices.size(); ++i) {
    corr[i] = s.triples().next_ot_receiver();
    u8 e = (choices[i] ^ corr[i].d) & 1;
    flipped[i / 8] |= u8(e << (i % 8));
  }
  s.send(kTagOt, MsgKind::ot, std::move(flipped));

  Message m = s.recv(kTagOt, MsgKind::ot);
  if (m.payload.size() != choices.size() * 32)
    throw ProtocolError("ot: label message has wrong size");
  std::vector<Block> out(choices.size());
  for (std::size_t i = 0; i < choices.size(); ++i) {
    Block c = read_block(m.payload.data() + i * 32 + (choices[i] & 1) * 16);
    out[i] = c ^ pad_block(corr[i].pd);
  }
  return out;
}

}  // namespace mpcnn
