#include "edgeyolo/edgecloud/protocol.hpp"

#include <algorithm>
#include <cstring>

#include <zlib.h>

namespace edgeyolo::edgecloud {

namespace {

constexpr std::uint8_t kMagic[4] = {'E', 'Y', 'P', '1'};
constexpr std::uint32_t kMaxPayload = 0xFFFFFFFFu;

void put_u32(std::uint8_t* p, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    p[i] = static_cast<std::uint8_t>(v >> (8 * i));
  }
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

bool valid_type(std::uint8_t t) { return t >= 1 && t <= 5; }

}  // namespace

std::string_view type_name(MessageType t) {
  switch (t) {
    case MessageType::FrameUpload: return "FRAME_UPLOAD";
    case MessageType::DetectRequest: return "DETECT_REQUEST";
    case MessageType::DetectResult: return "DETECT_RESULT";
    case MessageType::WeightPush: return "WEIGHT_PUSH";
    case MessageType::Ack: return "ACK";
  }
  return "?";
}

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong c = ::crc32(0L, Z_NULL, 0);
  std::size_t done = 0;
  while (done < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - done, 1u << 30));
    c = ::crc32(c, bytes.data() + done, chunk);
    done += chunk;
  }
  return static_cast<std::uint32_t>(c);
}

std::vector<std::uint8_t> encode_message(const Message& m) {
  if (m.payload.size() > kMaxPayload) {
    throw ProtocolError(ProtocolError::Code::Malformed, "payload exceeds 2^32-1 bytes");
  }
  if (!valid_type(static_cast<std::uint8_t>(m.type))) {
    throw ProtocolError(ProtocolError::Code::Malformed, "unknown message type");
  }
  const std::size_t n = m.payload.size();
  std::vector<std::uint8_t> out(kFrameOverhead + n);
  std::memcpy(out.data(), kMagic, 4);
  out[4] = static_cast<std::uint8_t>(m.type);
  out[5] = 0;
  put_u32(out.data() + 6, m.version);
  put_u32(out.data() + 10, static_cast<std::uint32_t>(n));
  if (n > 0) {
    std::memcpy(out.data() + kHeaderBytes, m.payload.data(), n);
  }
  put_u32(out.data() + kHeaderBytes + n, crc32(m.payload));
  return out;
}

std::optional<std::size_t> frame_length(std::span<const std::uint8_t> prefix) {
  const std::size_t have = std::min<std::size_t>(prefix.size(), 4);
  if (std::memcmp(prefix.data(), kMagic, have) != 0) {
    throw ProtocolError(ProtocolError::Code::BadMagic, "bad frame magic");
  }
  if (prefix.size() < kHeaderBytes) {
    return std::nullopt;
  }
  if (!valid_type(prefix[4]) || prefix[5] != 0) {
    throw ProtocolError(ProtocolError::Code::Malformed,
                        "bad message type " + std::to_string(prefix[4]) + " or padding");
  }
  return kFrameOverhead + get_u32(prefix.data() + 10);
}

Message decode_message(std::span<const std::uint8_t> bytes) {
  const auto len = frame_length(bytes);
  if (!len) {
    throw ProtocolError(ProtocolError::Code::Truncated,
                        "frame truncated: " + std::to_string(bytes.size()) + " header bytes");
  }
  if (bytes.size() < *len) {
    throw ProtocolError(ProtocolError::Code::Truncated,
                        "frame truncated: have " + std::to_string(bytes.size()) +
                            " of " + std::to_string(*len) + " bytes");
  }
  if (bytes.size() > *len) {
    throw ProtocolError(ProtocolError::Code::Malformed,
                        std::to_string(bytes.size() - *len) + " bytes after the frame");
  }
  Message m;
  m.type = static_cast<MessageType>(bytes[4]);
  m.version = get_u32(bytes.data() + 6);
  const auto payload = bytes.subspan(kHeaderBytes, *len - kFrameOverhead);
  const std::uint32_t want = get_u32(bytes.data() + *len - 4);
  if (crc32(payload) != want) {
    throw ProtocolError(ProtocolError::Code::BadChecksum, "payload checksum mismatch");
  }
  m.payload.assign(payload.begin(), payload.end());
  return m;
}

}  // namespace edgeyolo::edgecloud
