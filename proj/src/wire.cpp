#include "nytron/wire.hpp"

#include "nytron/error.hpp"

namespace nytron::comm::wire {

const char* op_name(Op op) {
  switch (op) {
    case Op::broadcast: return "BROADCAST";
    case Op::reduce: return "REDUCE";
    case Op::gather: return "GATHER";
    case Op::barrier: return "BARRIER";
    case Op::shutdown: return "SHUTDOWN";
  }
  return "?";
}

Bytes encode(const Frame& f) {
  Bytes b;
  b.reserve(kHeaderSize + f.payload.size());
  for (char c : kMagic) b.push_back(static_cast<std::uint8_t>(c));
  put_u8(b, static_cast<std::uint8_t>(f.op));
  put_u64(b, f.round);
  put_u64(b, f.payload.size());
  b.insert(b.end(), f.payload.begin(), f.payload.end());
  return b;
}

Header decode_header(const std::uint8_t* buf) {
  for (int i = 0; i < 4; ++i)
    if (buf[i] != static_cast<std::uint8_t>(kMagic[i]))
      throw ProtocolError("wire: bad frame magic");
  const std::uint8_t op = buf[4];
  if (op < 1 || op > 5) throw ProtocolError("wire: unknown op code " + std::to_string(op));
  Header h;
  h.op = static_cast<Op>(op);
  std::uint64_t round = 0, len = 0;
  for (int i = 0; i < 8; ++i) round |= static_cast<std::uint64_t>(buf[5 + i]) << (8 * i);
  for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(buf[13 + i]) << (8 * i);
  h.round = round;
  h.payload_len = len;
  if (len > kMaxPayload) throw ProtocolError("wire: oversized payload");
  return h;
}

Frame decode(const Bytes& bytes) {
  if (bytes.size() < kHeaderSize) throw ProtocolError("wire: truncated frame header");
  const Header h = decode_header(bytes.data());
  if (bytes.size() != kHeaderSize + h.payload_len)
    throw ProtocolError("wire: payload length mismatch");
  Frame f;
  f.op = h.op;
  f.round = h.round;
  f.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(kHeaderSize), bytes.end());
  return f;
}

}  // namespace nytron::comm::wire
