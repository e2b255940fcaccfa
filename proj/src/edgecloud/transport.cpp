#include "edgeyolo/edgecloud/transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <vector>

namespace edgeyolo::edgecloud {

namespace {

struct PipeBuffer {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::uint8_t> bytes;
  bool closed = false;
};

class PipeStream : public ByteStream {
 public:
  PipeStream(std::shared_ptr<PipeBuffer> in, std::shared_ptr<PipeBuffer> out)
      : in_(std::move(in)), out_(std::move(out)) {}
  ~PipeStream() override { close(); }

  void write(std::span<const std::uint8_t> bytes) override {
    std::lock_guard lock(out_->mu);
    if (out_->closed) {
      throw TransportError("pipe closed");
    }
    out_->bytes.insert(out_->bytes.end(), bytes.begin(), bytes.end());
    out_->cv.notify_all();
  }

  std::size_t read(std::span<std::uint8_t> buf) override {
    std::unique_lock lock(in_->mu);
    in_->cv.wait(lock, [&] { return !in_->bytes.empty() || in_->closed; });
    const std::size_t n = std::min(buf.size(), in_->bytes.size());
    std::copy_n(in_->bytes.begin(), n, buf.begin());
    in_->bytes.erase(in_->bytes.begin(), in_->bytes.begin() + static_cast<std::ptrdiff_t>(n));
    return n;
  }

  void close() override {
    for (auto* b : {in_.get(), out_.get()}) {
      std::lock_guard lock(b->mu);
      b->closed = true;
      b->cv.notify_all();
    }
  }

 private:
  std::shared_ptr<PipeBuffer> in_;
  std::shared_ptr<PipeBuffer> out_;
};

class TcpStream : public ByteStream {
 public:
  explicit TcpStream(int fd) : fd_(fd) {
    const int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  }
  ~TcpStream() override {
    close();
    ::close(fd_);
  }

  void write(std::span<const std::uint8_t> bytes) override {
    std::size_t done = 0;
    while (done < bytes.size()) {
      const ssize_t n = ::send(fd_, bytes.data() + done, bytes.size() - done, MSG_NOSIGNAL);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) {
        throw TransportError(std::string("tcp send: ") + std::strerror(errno));
      }
      done += static_cast<std::size_t>(n);
    }
  }

  std::size_t read(std::span<std::uint8_t> buf) override {
    for (;;) {
      const ssize_t n = ::recv(fd_, buf.data(), buf.size(), 0);
      if (n < 0 && errno == EINTR) continue;
      if (n < 0) {
        throw TransportError(std::string("tcp recv: ") + std::strerror(errno));
      }
      return static_cast<std::size_t>(n);
    }
  }

  void close() override { ::shutdown(fd_, SHUT_RDWR); }

 private:
  int fd_;
};

}  // namespace

std::pair<std::unique_ptr<ByteStream>, std::unique_ptr<ByteStream>> make_pipe_pair() {
  auto a = std::make_shared<PipeBuffer>();
  auto b = std::make_shared<PipeBuffer>();
  return {std::make_unique<PipeStream>(a, b), std::make_unique<PipeStream>(b, a)};
}

std::unique_ptr<ByteStream> tcp_connect(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (const int rc = ::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res)) {
    throw TransportError("resolve " + host + ": " + ::gai_strerror(rc));
  }
  int fd = -1;
  for (addrinfo* ai = res; ai; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) {
    throw TransportError("cannot connect to " + host + ":" + std::to_string(port));
  }
  return std::make_unique<TcpStream>(fd);
}

TcpListener::TcpListener(std::uint16_t port, const std::string& host) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) {
    throw TransportError(std::string("socket: ") + std::strerror(errno));
  }
  const int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd_);
    throw TransportError("bad listen address " + host);
  }
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 ||
      ::listen(fd_, 4) != 0) {
    const std::string err = std::strerror(errno);
    ::close(fd_);
    throw TransportError("listen on " + host + ":" + std::to_string(port) + ": " + err);
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener() { ::close(fd_); }

std::unique_ptr<ByteStream> TcpListener::accept() {
  for (;;) {
    const int fd = ::accept(fd_, nullptr, nullptr);
    if (fd >= 0) {
      return std::make_unique<TcpStream>(fd);
    }
    if (errno != EINTR) {
      throw TransportError(std::string("accept: ") + std::strerror(errno));
    }
  }
}

Channel::Channel(std::unique_ptr<ByteStream> stream) : stream_(std::move(stream)) {
  reader_ = std::thread([this] { read_loop(); });
}

Channel::~Channel() {
  close();
  reader_.join();
}

void Channel::close() { stream_->close(); }

void Channel::send(const Message& m) {
  const auto bytes = encode_message(m);
  std::lock_guard lock(send_mu_);
  stream_->write(bytes);
}

bool Channel::read_exact(std::uint8_t* dst, std::size_t n) {
  std::size_t done = 0;
  while (done < n) {
    const std::size_t got = stream_->read({dst + done, n - done});
    if (got == 0) {
      return false;
    }
    done += got;
  }
  return true;
}

void Channel::read_loop() {
  std::string reason = "stream closed";
  try {
    std::vector<std::uint8_t> frame(kHeaderBytes);
    for (;;) {
      frame.resize(kHeaderBytes);
      if (!read_exact(frame.data(), kHeaderBytes)) break;
      const auto len = frame_length(frame);
      if (!len) throw ProtocolError(ProtocolError::Code::BadMagic, "bad frame header");
      frame.resize(*len);
      if (!read_exact(frame.data() + kHeaderBytes, *len - kHeaderBytes)) {
        reason = "stream closed inside a frame";
        break;
      }
      Inbound item = [&]() -> Inbound {
        try {
          return decode_message(frame);
        } catch (const ProtocolError& e) {
          if (e.code() != ProtocolError::Code::BadChecksum) throw;
          return e;
        }
      }();
      std::lock_guard lock(mu_);
      inbox_.push_back(std::move(item));
      cv_.notify_all();
    }
  } catch (const std::exception& e) {
    reason = e.what();
  }
  std::lock_guard lock(mu_);
  ended_ = true;
  end_reason_ = reason;
  cv_.notify_all();
}

std::optional<Channel::Inbound> Channel::receive(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  if (!cv_.wait_for(lock, timeout, [&] { return !inbox_.empty() || ended_; })) {
    return std::nullopt;
  }
  if (inbox_.empty()) {
    throw TransportError(end_reason_);
  }
  Inbound item = std::move(inbox_.front());
  inbox_.pop_front();
  return item;
}

}  // namespace edgeyolo::edgecloud
