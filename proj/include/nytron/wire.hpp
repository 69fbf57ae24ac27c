#pragma once

#include <cstdint>

#include "nytron/bytes.hpp"

namespace nytron::comm::wire {

// Frame layout on the socket:
//   magic "ART1" (4 bytes) | op (u8) | round id (u64 LE) | payload length
//   (u64 LE) | payload bytes.
// Reduce payloads are little-endian float64 arrays; broadcast/gather payloads
// are raw bytes.
inline constexpr char kMagic[4] = {'A', 'R', 'T', '1'};
inline constexpr std::size_t kHeaderSize = 4 + 1 + 8 + 8;
inline constexpr std::uint64_t kMaxPayload = 1ULL << 33;

enum class Op : std::uint8_t {
  broadcast = 1,
  reduce = 2,
  gather = 3,
  barrier = 4,
  shutdown = 5,
};

const char* op_name(Op op);

struct Frame {
  Op op = Op::barrier;
  std::uint64_t round = 0;
  Bytes payload;
};

Bytes encode(const Frame& f);

// Parses a complete frame from `bytes`; throws ProtocolError on bad magic,
// unknown op, oversized or truncated payload.
Frame decode(const Bytes& bytes);

// Header-only decode for streaming reads: returns (frame sans payload,
// payload length).
struct Header {
  Op op;
  std::uint64_t round;
  std::uint64_t payload_len;
};
Header decode_header(const std::uint8_t* buf);

}  // namespace nytron::comm::wire
