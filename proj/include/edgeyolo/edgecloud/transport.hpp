#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <variant>

#include "edgeyolo/edgecloud/protocol.hpp"

namespace edgeyolo::edgecloud {

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Blocking, ordered, reliable byte stream.
class ByteStream {
 public:
  virtual ~ByteStream() = default;
  /// Writes everything or throws TransportError.
  virtual void write(std::span<const std::uint8_t> bytes) = 0;
  /// Reads at least one byte; 0 means the peer closed the stream.
  virtual std::size_t read(std::span<std::uint8_t> buf) = 0;
  /// Unblocks pending reads on both ends; later writes fail.
  virtual void close() = 0;
};

/// Two connected in-memory endpoints.
std::pair<std::unique_ptr<ByteStream>, std::unique_ptr<ByteStream>> make_pipe_pair();

std::unique_ptr<ByteStream> tcp_connect(const std::string& host, std::uint16_t port);

class TcpListener {
 public:
  /// Port 0 picks a free port.
  explicit TcpListener(std::uint16_t port, const std::string& host = "127.0.0.1");
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const { return port_; }
  std::unique_ptr<ByteStream> accept();

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

/// Message framing over a stream. A reader thread decodes frames into an
/// inbox; a frame with a bad checksum is reported and skipped, any other
/// framing error ends the channel.
class Channel {
 public:
  explicit Channel(std::unique_ptr<ByteStream> stream);
  ~Channel();
  Channel(const Channel&) = delete;
  Channel& operator=(const Channel&) = delete;

  void send(const Message& m);

  /// A message, or the ProtocolError of a skipped frame.
  using Inbound = std::variant<Message, ProtocolError>;

  /// Waits up to `timeout`; nullopt on timeout. Throws TransportError once
  /// the stream has ended and the inbox is drained.
  std::optional<Inbound> receive(std::chrono::milliseconds timeout);

  void close();

 private:
  void read_loop();
  bool read_exact(std::uint8_t* dst, std::size_t n);

  std::unique_ptr<ByteStream> stream_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Inbound> inbox_;
  bool ended_ = false;
  std::string end_reason_;
  std::mutex send_mu_;
  std::thread reader_;
};

}  // namespace edgeyolo::edgecloud
