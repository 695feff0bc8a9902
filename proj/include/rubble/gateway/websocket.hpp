// Minimal RFC 6455 pieces: handshake accept key and text/control frames.
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <openssl/evp.h>
#include <openssl/sha.h>

namespace rubble::gateway::ws {

inline constexpr std::string_view kGuid = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";

enum Opcode : std::uint8_t { continuation = 0x0, text = 0x1, binary = 0x2, close = 0x8, ping = 0x9, pong = 0xA };

inline std::string accept_key(std::string_view client_key) {
  const std::string in = std::string(client_key) + std::string(kGuid);
  std::array<unsigned char, SHA_DIGEST_LENGTH> digest{};
  SHA1(reinterpret_cast<const unsigned char*>(in.data()), in.size(), digest.data());
  std::array<unsigned char, 4 * ((SHA_DIGEST_LENGTH + 2) / 3) + 1> b64{};
  const int n = EVP_EncodeBlock(b64.data(), digest.data(), SHA_DIGEST_LENGTH);
  return {reinterpret_cast<const char*>(b64.data()), static_cast<std::size_t>(n)};
}

/// Unmasked server frame.
inline std::string frame(std::string_view payload, Opcode op = text) {
  std::string out;
  out.push_back(static_cast<char>(0x80 | op));
  const auto n = payload.size();
  if (n < 126) {
    out.push_back(static_cast<char>(n));
  } else if (n <= 0xffff) {
    out.push_back(static_cast<char>(126));
    out.push_back(static_cast<char>(n >> 8));
    out.push_back(static_cast<char>(n & 0xff));
  } else {
    out.push_back(static_cast<char>(127));
    for (int i = 7; i >= 0; --i) out.push_back(static_cast<char>((static_cast<std::uint64_t>(n) >> (8 * i)) & 0xff));
  }
  out.append(payload);
  return out;
}

/// Client frame with the given mask (clients must mask).
inline std::string masked_frame(std::string_view payload, std::array<std::uint8_t, 4> mask, Opcode op = text) {
  std::string out(1, static_cast<char>(0x80 | op));
  const auto n = payload.size();
  if (n < 126) {
    out.push_back(static_cast<char>(0x80 | n));
  } else if (n <= 0xffff) {
    out.push_back(static_cast<char>(0x80 | 126));
    out.push_back(static_cast<char>(n >> 8));
    out.push_back(static_cast<char>(n & 0xff));
  } else {
    out.push_back(static_cast<char>(0x80 | 127));
    for (int i = 7; i >= 0; --i) out.push_back(static_cast<char>((static_cast<std::uint64_t>(n) >> (8 * i)) & 0xff));
  }
  for (auto m : mask) out.push_back(static_cast<char>(m));
  for (std::size_t i = 0; i < n; ++i) out.push_back(static_cast<char>(static_cast<std::uint8_t>(payload[i]) ^ mask[i % 4]));
  return out;
}

struct Frame {
  bool fin = true;
  Opcode opcode = text;
  std::string payload;
};

class FrameError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses one frame from the front of `buf`, consuming it. nullopt when more bytes are needed.
inline std::optional<Frame> parse_frame(std::string& buf, std::size_t max_payload) {
  if (buf.size() < 2) return std::nullopt;
  const auto b0 = static_cast<std::uint8_t>(buf[0]);
  const auto b1 = static_cast<std::uint8_t>(buf[1]);
  std::size_t pos = 2;
  std::uint64_t len = b1 & 0x7f;
  if (len == 126) {
    if (buf.size() < 4) return std::nullopt;
    len = (static_cast<std::uint64_t>(static_cast<std::uint8_t>(buf[2])) << 8) | static_cast<std::uint8_t>(buf[3]);
    pos = 4;
  } else if (len == 127) {
    if (buf.size() < 10) return std::nullopt;
    len = 0;
    for (int i = 0; i < 8; ++i) len = (len << 8) | static_cast<std::uint8_t>(buf[2 + static_cast<std::size_t>(i)]);
    pos = 10;
  }
  if (len > max_payload) throw FrameError("frame payload too large");
  const bool masked = (b1 & 0x80) != 0;
  std::array<std::uint8_t, 4> mask{};
  if (masked) {
    if (buf.size() < pos + 4) return std::nullopt;
    for (std::size_t i = 0; i < 4; ++i) mask[i] = static_cast<std::uint8_t>(buf[pos + i]);
    pos += 4;
  }
  if (buf.size() < pos + len) return std::nullopt;
  Frame f;
  f.fin = (b0 & 0x80) != 0;
  f.opcode = static_cast<Opcode>(b0 & 0x0f);
  f.payload = buf.substr(pos, static_cast<std::size_t>(len));
  if (masked) {
    for (std::size_t i = 0; i < f.payload.size(); ++i) f.payload[i] = static_cast<char>(static_cast<std::uint8_t>(f.payload[i]) ^ mask[i % 4]);
  }
  buf.erase(0, pos + static_cast<std::size_t>(len));
  return f;
}

}  // namespace rubble::gateway::ws
