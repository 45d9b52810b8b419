#pragma once

#include <chrono>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "mpcnn/common.hpp"

namespace mpcnn {

enum class MsgKind : u8 { open = 0, circuit = 1, labels = 2, ot = 3, control = 4 };

// Wire frame: length u32 LE | tag u8 | kind u8 | payload.
// length counts tag + kind + payload, i.e. payload size + 2.
struct Message {
  u8 tag = 0;
  MsgKind kind = MsgKind::control;
  std::vector<u8> payload;
};

std::vector<u8> frame_message(const Message& m);
// parses one frame; throws TransportError on malformed input
Message parse_frame(const u8* data, std::size_t len);

struct CommRecord {
  u64 bytes_sent = 0;
  u64 bytes_received = 0;
  u64 invocations = 0;
  double seconds = 0.0;
};

// Per-sub-protocol traffic accounting. Kb is kilobits: bytes * 8 / 1024.
struct CommStats {
  u64 total_sent = 0;
  u64 total_received = 0;
  std::map<std::string, CommRecord> records;

  static double kb(u64 bytes) { return double(bytes) * 8.0 / 1024.0; }
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual void send(const Message& m) = 0;
  virtual Message recv() = 0;
  u64 bytes_sent() const { return sent_; }
  u64 bytes_received() const { return received_; }
  std::chrono::milliseconds timeout{30000};

 protected:
  u64 sent_ = 0;
  u64 received_ = 0;
};

// Two of these, cross-wired over shared byte queues, make an in-process pair.
// Frames are serialized to bytes even in-process so that transcripts and
// byte counts are identical to the TCP path.
class InProcessTransport : public Transport {
 public:
  struct Queue {
    std::mutex mu;
    std::condition_variable cv;
    std::deque<std::vector<u8>> frames;
  };

  InProcessTransport(std::shared_ptr<Queue> out, std::shared_ptr<Queue> in)
      : out_(std::move(out)), in_(std::move(in)) {}

  void send(const Message& m) override;
  Message recv() override;

  static std::pair<std::unique_ptr<InProcessTransport>, std::unique_ptr<InProcessTransport>>
  make_pair();

 private:
  std::shared_ptr<Queue> out_, in_;
};

class TcpTransport : public Transport {
 public:
  // listen-or-connect; both block until the peer arrives or timeout
  static std::unique_ptr<TcpTransport> listen(const std::string& host, int port);
  static std::unique_ptr<TcpTransport> connect(const std::string& host, int port);
  ~TcpTransport() override;

  void send(const Message& m) override;
  Message recv() override;

 private:
  explicit TcpTransport(int fd) : fd_(fd) {}
  int fd_ = -1;
};

// little-endian scalar packing helpers shared by protocols and file formats
inline void put_u16(std::vector<u8>& b, u16 v) {
  b.push_back(u8(v)); b.push_back(u8(v >> 8));
}
inline void put_u32(std::vector<u8>& b, u32 v) {
  for (int i = 0; i < 4; ++i) b.push_back(u8(v >> (8 * i)));
}
inline void put_u64(std::vector<u8>& b, u64 v) {
  for (int i = 0; i < 8; ++i) b.push_back(u8(v >> (8 * i)));
}
inline u16 get_u16(const u8* p) { return u16(p[0]) | u16(p[1]) << 8; }
inline u32 get_u32(const u8* p) {
  u32 v = 0;
  for (int i = 0; i < 4; ++i) v |= u32(p[i]) << (8 * i);
  return v;
}
inline u64 get_u64(const u8* p) {
  u64 v = 0;
  for (int i = 0; i < 8; ++i) v |= u64(p[i]) << (8 * i);
  return v;
}

}  // namespace mpcnn
