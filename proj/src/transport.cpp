#include "mpcnn/transport.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace mpcnn {

std::vector<u8> frame_message(const Message& m) {
  if (m.payload.size() + 2 > 0xffffffffULL) throw TransportError("frame too large");
  std::vector<u8> out;
  out.reserve(6 + m.payload.size());
  put_u32(out, u32(m.payload.size() + 2));
  out.push_back(m.tag);
  out.push_back(u8(m.kind));
  out.insert(out.end(), m.payload.begin(), m.payload.end());
  return out;
}

Message parse_frame(const u8* data, std::size_t len) {
  if (len < 6) throw TransportError("truncated frame header");
  u32 body = get_u32(data);
  if (body < 2 || std::size_t(body) + 4 != len) throw TransportError("frame length mismatch");
  Message m;
  m.tag = data[4];
  u8 k = data[5];
  if (k > u8(MsgKind::control)) throw TransportError("unknown message kind");
  m.kind = MsgKind(k);
  m.payload.assign(data + 6, data + len);
  return m;
}

void InProcessTransport::send(const Message& m) {
  auto bytes = frame_message(m);
  sent_ += bytes.size();
  {
    std::lock_guard<std::mutex> lk(out_->mu);
    out_->frames.push_back(std::move(bytes));
  }
  out_->cv.notify_one();
}

Message InProcessTransport::recv() {
  std::unique_lock<std::mutex> lk(in_->mu);
  if (!in_->cv.wait_for(lk, timeout, [&] { return !in_->frames.empty(); }))
    throw TransportError("recv timeout after " + std::to_string(timeout.count()) + " ms");
  auto bytes = std::move(in_->frames.front());
  in_->frames.pop_front();
  lk.unlock();
  received_ += bytes.size();
  return parse_frame(bytes.data(), bytes.size());
}

std::pair<std::unique_ptr<InProcessTransport>, std::unique_ptr<InProcessTransport>>
InProcessTransport::make_pair() {
  auto q01 = std::make_shared<Queue>();
  auto q10 = std::make_shared<Queue>();
  auto a = std::make_unique<InProcessTransport>(q01, q10);
  auto b = std::make_unique<InProcessTransport>(q10, q01);
  return {std::move(a), std::move(b)};
}

namespace {

void write_all(int fd, const u8* p, std::size_t n) {
  while (n > 0) {
    ssize_t w = ::write(fd, p, n);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw TransportError(std::string("socket write: ") + std::strerror(errno));
    }
    p += w;
    n -= std::size_t(w);
  }
}

void read_all(int fd, u8* p, std::size_t n) {
  while (n > 0) {
    ssize_t r = ::read(fd, p, n);
    if (r < 0) {
      if (errno == EINTR) continue;
      if (errno == EAGAIN || errno == EWOULDBLOCK) throw TransportError("recv timeout");
      throw TransportError(std::string("socket read: ") + std::strerror(errno));
    }
    if (r == 0) throw TransportError("peer closed connection");
    p += r;
    n -= std::size_t(r);
  }
}

sockaddr_in make_addr(const std::string& host, int port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(u16(port));
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
    throw TransportError("bad host address: " + host);
  return addr;
}

void set_recv_timeout(int fd, std::chrono::milliseconds ms) {
  timeval tv{};
  tv.tv_sec = ms.count() / 1000;
  tv.tv_usec = (ms.count() % 1000) * 1000;
  ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
}

}  // namespace

std::unique_ptr<TcpTransport> TcpTransport::listen(const std::string& host, int port) {
  int srv = ::socket(AF_INET, SOCK_STREAM, 0);
  if (srv < 0) throw TransportError("socket() failed");
  int one = 1;
  ::setsockopt(srv, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  auto addr = make_addr(host, port);
  if (::bind(srv, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
    ::close(srv);
    throw TransportError("bind " + host + ":" + std::to_string(port) + " failed: " +
                         std::strerror(errno));
  }
  if (::listen(srv, 1) < 0) {
    ::close(srv);
    throw TransportError("listen failed");
  }
  int fd = ::accept(srv, nullptr, nullptr);
  ::close(srv);
  if (fd < 0) throw TransportError("accept failed");
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  auto t = std::unique_ptr<TcpTransport>(new TcpTransport(fd));
  set_recv_timeout(fd, t->timeout);
  return t;
}

std::unique_ptr<TcpTransport> TcpTransport::connect(const std::string& host, int port) {
  auto addr = make_addr(host, port);
  // retry briefly so the listener does not have to win the race
  for (int attempt = 0;; ++attempt) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw TransportError("socket() failed");
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0) {
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      auto t = std::unique_ptr<TcpTransport>(new TcpTransport(fd));
      set_recv_timeout(fd, t->timeout);
      return t;
    }
    ::close(fd);
    if (attempt >= 50) throw TransportError("connect " + host + ":" + std::to_string(port) +
                                            " failed: " + std::strerror(errno));
    ::usleep(100 * 1000);
  }
}

TcpTransport::~TcpTransport() {
  if (fd_ >= 0) ::close(fd_);
}

void TcpTransport::send(const Message& m) {
  auto bytes = frame_message(m);
  write_all(fd_, bytes.data(), bytes.size());
  sent_ += bytes.size();
}

Message TcpTransport::recv() {
  u8 hdr[6];
  read_all(fd_, hdr, 6);
  u32 body = get_u32(hdr);
  if (body < 2) throw TransportError("frame length mismatch");
  std::vector<u8> buf(4 + body);
  std::memcpy(buf.data(), hdr, 6);
  read_all(fd_, buf.data() + 6, body - 2);
  received_ += buf.size();
  return parse_frame(buf.data(), buf.size());
}

}  // namespace mpcnn
