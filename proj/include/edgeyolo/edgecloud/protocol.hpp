#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace edgeyolo::edgecloud {

enum class MessageType : std::uint8_t {
  FrameUpload = 1,
  DetectRequest = 2,
  DetectResult = 3,
  WeightPush = 4,
  Ack = 5,
};

std::string_view type_name(MessageType t);

struct Message {
  MessageType type = MessageType::Ack;
  std::uint32_t version = 0;
  std::vector<std::uint8_t> payload;

  bool operator==(const Message&) const = default;
};

/// Frame layout (little-endian): "EYP1", type u8, pad u8 (0), version u32,
/// payload length u32, payload, CRC-32 of the payload u32.
inline constexpr std::size_t kHeaderBytes = 14;
inline constexpr std::size_t kFrameOverhead = kHeaderBytes + 4;

class ProtocolError : public std::runtime_error {
 public:
  enum class Code { BadMagic, BadChecksum, Truncated, Malformed };
  ProtocolError(Code code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

std::vector<std::uint8_t> encode_message(const Message& m);

/// Decodes exactly one frame; trailing bytes are Malformed.
Message decode_message(std::span<const std::uint8_t> bytes);

/// Total frame length announced by a header, once kHeaderBytes are
/// available; checks magic, type and padding.
std::optional<std::size_t> frame_length(std::span<const std::uint8_t> prefix);

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

}  // namespace edgeyolo::edgecloud
