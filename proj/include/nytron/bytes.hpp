#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "nytron/error.hpp"
#include "nytron/sparse.hpp"

namespace nytron {

// Little-endian byte packing used by the wire protocol, binary file payloads
// and the in-memory serialization of sparse points.
using Bytes = std::vector<std::uint8_t>;

inline void put_u8(Bytes& b, std::uint8_t v) { b.push_back(v); }

inline void put_u32(Bytes& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_u64(Bytes& b, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_i32(Bytes& b, std::int32_t v) { put_u32(b, static_cast<std::uint32_t>(v)); }

inline void put_f64(Bytes& b, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  put_u64(b, u);
}

class ByteReader {
 public:
  ByteReader(const std::uint8_t* data, std::size_t size) : p_(data), end_(data + size) {}
  explicit ByteReader(const Bytes& b) : ByteReader(b.data(), b.size()) {}

  std::uint8_t u8() { return *take(1); }

  std::uint32_t u32() {
    const std::uint8_t* p = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
  }

  std::uint64_t u64() {
    const std::uint8_t* p = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
  }

  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }

  double f64() {
    const std::uint64_t u = u64();
    double v;
    std::memcpy(&v, &u, 8);
    return v;
  }

  std::size_t remaining() const { return static_cast<std::size_t>(end_ - p_); }
  bool done() const { return p_ == end_; }

 private:
  const std::uint8_t* take(std::size_t n) {
    if (remaining() < n) throw ProtocolError("payload truncated");
    const std::uint8_t* r = p_;
    p_ += n;
    return r;
  }

  const std::uint8_t* p_;
  const std::uint8_t* end_;
};

inline void put_sparse_vec(Bytes& b, const SparseVec& v) {
  put_u32(b, static_cast<std::uint32_t>(v.nnz()));
  for (std::size_t k = 0; k < v.nnz(); ++k) {
    put_i32(b, v.idx[k]);
    put_f64(b, v.val[k]);
  }
}

inline SparseVec get_sparse_vec(ByteReader& r) {
  SparseVec v;
  const std::uint32_t nnz = r.u32();
  v.idx.reserve(nnz);
  v.val.reserve(nnz);
  for (std::uint32_t k = 0; k < nnz; ++k) {
    v.idx.push_back(r.i32());
    v.val.push_back(r.f64());
  }
  return v;
}

}  // namespace nytron
