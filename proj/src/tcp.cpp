#include "nytron/tcp.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <fstream>
#include <thread>

#include "nytron/error.hpp"
#include "nytron/wire.hpp"

namespace nytron::comm {

namespace {

constexpr char kPreambleMagic[4] = {'N', 'Y', 'H', 'I'};

void close_quiet(int fd) {
  if (fd >= 0) ::close(fd);
}

void set_recv_timeout(int fd, double seconds) {
  timeval tv;
  tv.tv_sec = static_cast<long>(seconds);
  tv.tv_usec = static_cast<long>((seconds - static_cast<double>(tv.tv_sec)) * 1e6);
  ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

bool write_exact(int fd, const std::uint8_t* buf, std::size_t len) {
  while (len > 0) {
    const ssize_t n = ::send(fd, buf, len, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    buf += n;
    len -= static_cast<std::size_t>(n);
  }
  return true;
}

// false on timeout/EOF/error; errno preserved for the caller's message.
bool read_exact(int fd, std::uint8_t* buf, std::size_t len) {
  while (len > 0) {
    const ssize_t n = ::recv(fd, buf, len, 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    if (n == 0) {
      errno = ECONNRESET;
      return false;
    }
    buf += n;
    len -= static_cast<std::size_t>(n);
  }
  return true;
}

sockaddr_in resolve(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const int rc = ::getaddrinfo(host.c_str(), nullptr, &hints, &res);
  if (rc != 0 || !res)
    throw TransportError("cannot resolve host " + host + ": " + gai_strerror(rc));
  sockaddr_in addr{};
  std::memcpy(&addr, res->ai_addr, sizeof(addr));
  addr.sin_port = htons(port);
  ::freeaddrinfo(res);
  return addr;
}

}  // namespace

std::vector<HostPort> parse_hosts_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open hosts file " + path);
  std::vector<HostPort> hosts;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t a = line.find_first_not_of(" \t\r\n");
    if (a == std::string::npos || line[a] == '#') continue;
    const std::size_t colon = line.rfind(':');
    if (colon == std::string::npos || colon <= a)
      throw ParseError("hosts file line " + std::to_string(line_no) + ": expected host:port");
    HostPort hp;
    hp.host = line.substr(a, colon - a);
    const long port = std::strtol(line.c_str() + colon + 1, nullptr, 10);
    if (port < 1 || port > 65535)
      throw ParseError("hosts file line " + std::to_string(line_no) + ": bad port");
    hp.port = static_cast<std::uint16_t>(port);
    hosts.push_back(std::move(hp));
  }
  if (hosts.empty()) throw ParseError("hosts file " + path + " lists no workers");
  return hosts;
}

int TcpCommunicator::bind_listener(const std::string& host, std::uint16_t port, int backlog) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw TransportError("socket: " + std::string(std::strerror(errno)));
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr = resolve(host, port);
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    const std::string err = std::strerror(errno);
    close_quiet(fd);
    throw TransportError("bind " + host + ":" + std::to_string(port) + ": " + err);
  }
  if (::listen(fd, backlog) != 0) {
    const std::string err = std::strerror(errno);
    close_quiet(fd);
    throw TransportError("listen: " + err);
  }
  return fd;
}

std::uint16_t TcpCommunicator::listener_port(int fd) {
  sockaddr_in addr{};
  socklen_t len = sizeof(addr);
  if (::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len) != 0)
    throw TransportError("getsockname failed");
  return ntohs(addr.sin_port);
}

TcpCommunicator::TcpCommunicator(TreeTopology topo, std::vector<HostPort> hosts, int rank,
                                 TcpOptions opts, int listen_fd)
    : topo_(std::move(topo)), rank_(rank), opts_(opts) {
  if (hosts.size() != static_cast<std::size_t>(topo_.size()))
    throw ConfigError("hosts list has " + std::to_string(hosts.size()) + " entries for " +
                      std::to_string(topo_.size()) + " workers");
  if (rank_ < 0 || rank_ >= topo_.size()) throw ConfigError("bad rank");
  establish(std::move(hosts), listen_fd);
}

void TcpCommunicator::establish(std::vector<HostPort> hosts, int listen_fd) {
  const auto& kids = topo_.children(rank_);
  int lfd = listen_fd;
  if (lfd < 0 && !kids.empty())
    lfd = bind_listener(hosts[static_cast<std::size_t>(rank_)].host,
                        hosts[static_cast<std::size_t>(rank_)].port,
                        static_cast<int>(kids.size()) + 1);

  // Upward edge first; retry while the parent's listener comes up.
  const int par = topo_.parent(rank_);
  if (par >= 0) {
    const sockaddr_in addr =
        resolve(hosts[static_cast<std::size_t>(par)].host, hosts[static_cast<std::size_t>(par)].port);
    const auto deadline = std::chrono::steady_clock::now() +
                          std::chrono::milliseconds(
                              static_cast<long>(opts_.connect_timeout_seconds * 1000.0));
    int fd = -1;
    while (true) {
      fd = ::socket(AF_INET, SOCK_STREAM, 0);
      if (fd < 0) throw TransportError("socket: " + std::string(std::strerror(errno)));
      if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) == 0) break;
      close_quiet(fd);
      fd = -1;
      if (std::chrono::steady_clock::now() >= deadline) {
        close_quiet(lfd);
        throw TransportError("worker " + std::to_string(rank_) + " cannot reach parent " +
                             std::to_string(par) + ": " + std::strerror(errno));
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    set_nodelay(fd);
    set_recv_timeout(fd, opts_.timeout_seconds);
    Bytes pre;
    for (char c : kPreambleMagic) pre.push_back(static_cast<std::uint8_t>(c));
    put_u32(pre, static_cast<std::uint32_t>(rank_));
    if (!write_exact(fd, pre.data(), pre.size())) {
      close_quiet(fd);
      close_quiet(lfd);
      throw TransportError("preamble send to parent " + std::to_string(par) + " failed");
    }
    parent_.peer = par;
    parent_.fd = fd;
  }

  // Accept every child, identified by its preamble.
  if (!kids.empty()) {
    set_recv_timeout(lfd, opts_.connect_timeout_seconds);
    std::vector<Edge> accepted;
    for (std::size_t k = 0; k < kids.size(); ++k) {
      const int fd = ::accept(lfd, nullptr, nullptr);
      if (fd < 0) {
        close_quiet(lfd);
        throw TransportError("worker " + std::to_string(rank_) + " timed out accepting children");
      }
      set_nodelay(fd);
      set_recv_timeout(fd, opts_.timeout_seconds);
      std::uint8_t pre[8];
      if (!read_exact(fd, pre, sizeof(pre))) {
        close_quiet(fd);
        close_quiet(lfd);
        throw TransportError("child preamble read failed at worker " + std::to_string(rank_));
      }
      for (int i = 0; i < 4; ++i)
        if (pre[i] != static_cast<std::uint8_t>(kPreambleMagic[i]))
          throw ProtocolError("bad connection preamble at worker " + std::to_string(rank_));
      std::uint32_t child = 0;
      for (int i = 0; i < 4; ++i) child |= static_cast<std::uint32_t>(pre[4 + i]) << (8 * i);
      bool expected = false;
      for (int c : kids) expected = expected || static_cast<std::uint32_t>(c) == child;
      if (!expected)
        throw ProtocolError("worker " + std::to_string(child) + " is not a child of worker " +
                            std::to_string(rank_));
      Edge e;
      e.peer = static_cast<int>(child);
      e.fd = fd;
      accepted.push_back(e);
    }
    std::sort(accepted.begin(), accepted.end(),
              [](const Edge& a, const Edge& b) { return a.peer < b.peer; });
    children_ = std::move(accepted);
  }
  close_quiet(lfd);
}

TcpCommunicator::~TcpCommunicator() {
  close_quiet(parent_.fd);
  for (auto& e : children_) close_quiet(e.fd);
}

void TcpCommunicator::edge_fail(const Edge& e, const std::string& what) {
  throw TransportError("edge (" + std::to_string(rank_) + "," + std::to_string(e.peer) + "): " +
                       what + (errno ? std::string(": ") + std::strerror(errno) : ""));
}

void TcpCommunicator::send_frame(const Edge& e, std::uint8_t op, std::uint64_t round,
                                 const Bytes& payload) {
  wire::Frame f;
  f.op = static_cast<wire::Op>(op);
  f.round = round;
  f.payload = payload;
  const Bytes raw = wire::encode(f);
  if (!write_exact(e.fd, raw.data(), raw.size())) edge_fail(e, "send failed");
}

void TcpCommunicator::recv_frame(const Edge& e, std::uint8_t expected_op, std::uint64_t round,
                                 Bytes& payload, std::uint8_t* actual_op) {
  std::uint8_t head[wire::kHeaderSize];
  if (!read_exact(e.fd, head, sizeof(head))) edge_fail(e, "recv failed");
  const wire::Header h = wire::decode_header(head);
  payload.resize(h.payload_len);
  if (h.payload_len > 0 && !read_exact(e.fd, payload.data(), payload.size()))
    edge_fail(e, "recv payload failed");
  if (h.round != round)
    throw ProtocolError("edge (" + std::to_string(rank_) + "," + std::to_string(e.peer) +
                        "): round id mismatch, expected " + std::to_string(round) + " got " +
                        std::to_string(h.round));
  if (actual_op) {
    *actual_op = static_cast<std::uint8_t>(h.op);
    return;
  }
  if (static_cast<std::uint8_t>(h.op) != expected_op)
    throw ProtocolError("edge (" + std::to_string(rank_) + "," + std::to_string(e.peer) +
                        "): expected " + wire::op_name(static_cast<wire::Op>(expected_op)) +
                        " got " + wire::op_name(h.op));
}

std::optional<Bytes> TcpCommunicator::broadcast(const Bytes& buf, int root) {
  if (root != topo_.root()) throw ContractError("tcp broadcast runs from the tree root");
  counters.broadcasts++;
  const std::uint64_t round = round_++;
  Bytes payload;
  if (rank_ == root) {
    payload = buf;
  } else {
    std::uint8_t op = 0;
    recv_frame(parent_, static_cast<std::uint8_t>(wire::Op::broadcast), round, payload, &op);
    if (op == static_cast<std::uint8_t>(wire::Op::shutdown)) {
      for (const auto& e : children_)
        send_frame(e, static_cast<std::uint8_t>(wire::Op::shutdown), round, {});
      closed_ = true;
      return std::nullopt;
    }
    if (op != static_cast<std::uint8_t>(wire::Op::broadcast))
      throw ProtocolError("edge (" + std::to_string(rank_) + "," +
                          std::to_string(parent_.peer) + "): expected BROADCAST got " +
                          wire::op_name(static_cast<wire::Op>(op)));
  }
  for (const auto& e : children_)
    send_frame(e, static_cast<std::uint8_t>(wire::Op::broadcast), round, payload);
  counters.bytes_payload += payload.size();
  return payload;
}

void TcpCommunicator::shutdown() {
  if (rank_ != topo_.root()) throw ContractError("shutdown: root only");
  const std::uint64_t round = round_++;
  for (const auto& e : children_)
    send_frame(e, static_cast<std::uint8_t>(wire::Op::shutdown), round, {});
  closed_ = true;
}

void TcpCommunicator::allreduce_sum(std::vector<double>& v) {
  counters.reduces++;
  counters.bytes_payload += v.size() * sizeof(double);
  const std::uint64_t round = round_++;
  const std::size_t len = v.size();
  const auto& sub = topo_.subtree(rank_);

  // Upward bundle: the subtree's vectors laid out in ascending-rank order.
  std::vector<double> bundle(sub.size() * len);
  auto slot_of = [&](int r) {
    const auto it = std::lower_bound(sub.begin(), sub.end(), r);
    return static_cast<std::size_t>(it - sub.begin());
  };
  std::copy(v.begin(), v.end(), bundle.begin() + static_cast<std::ptrdiff_t>(slot_of(rank_) * len));
  Bytes child_payload;
  for (const auto& e : children_) {
    recv_frame(e, static_cast<std::uint8_t>(wire::Op::reduce), round, child_payload);
    const auto& csub = topo_.subtree(e.peer);
    if (child_payload.size() != csub.size() * len * sizeof(double))
      throw ProtocolError("edge (" + std::to_string(rank_) + "," + std::to_string(e.peer) +
                          "): reduce length mismatch, expected " +
                          std::to_string(csub.size() * len * sizeof(double)) + " bytes got " +
                          std::to_string(child_payload.size()));
    ByteReader r(child_payload);
    for (std::size_t j = 0; j < csub.size(); ++j) {
      double* dst = bundle.data() + slot_of(csub[j]) * len;
      for (std::size_t i = 0; i < len; ++i) dst[i] = r.f64();
    }
  }

  if (rank_ == topo_.root()) {
    // Pinned accumulation: one accumulator visiting ranks 0..p-1 in order.
    std::vector<double> out(len, 0.0);
    for (std::size_t rnk = 0; rnk < sub.size(); ++rnk) {
      const double* in = bundle.data() + rnk * len;
      for (std::size_t i = 0; i < len; ++i) out[i] += in[i];
    }
    v = std::move(out);
  } else {
    Bytes up;
    up.reserve(bundle.size() * sizeof(double));
    for (double x : bundle) put_f64(up, x);
    send_frame(parent_, static_cast<std::uint8_t>(wire::Op::reduce), round, up);
    Bytes down;
    recv_frame(parent_, static_cast<std::uint8_t>(wire::Op::broadcast), round, down);
    if (down.size() != len * sizeof(double))
      throw ProtocolError("allreduce result length mismatch");
    ByteReader r(down);
    for (std::size_t i = 0; i < len; ++i) v[i] = r.f64();
  }
  Bytes down;
  down.reserve(len * sizeof(double));
  for (double x : v) put_f64(down, x);
  for (const auto& e : children_)
    send_frame(e, static_cast<std::uint8_t>(wire::Op::broadcast), round, down);
}

std::vector<Bytes> TcpCommunicator::gather(const Bytes& payload, int root) {
  if (root != topo_.root()) throw ContractError("tcp gather collects at the tree root");
  counters.gathers++;
  counters.bytes_payload += payload.size();
  const std::uint64_t round = round_++;
  // Entries (rank, bytes) merged in ascending rank order on the way up.
  std::vector<std::pair<std::uint32_t, Bytes>> entries;
  entries.emplace_back(static_cast<std::uint32_t>(rank_), payload);
  Bytes child_payload;
  for (const auto& e : children_) {
    recv_frame(e, static_cast<std::uint8_t>(wire::Op::gather), round, child_payload);
    ByteReader r(child_payload);
    const std::uint32_t count = r.u32();
    for (std::uint32_t k = 0; k < count; ++k) {
      const std::uint32_t rnk = r.u32();
      const std::uint64_t blen = r.u64();
      Bytes b(blen);
      for (auto& byte : b) byte = r.u8();
      entries.emplace_back(rnk, std::move(b));
    }
  }
  std::sort(entries.begin(), entries.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  if (rank_ == topo_.root()) {
    if (entries.size() != static_cast<std::size_t>(topo_.size()))
      throw ProtocolError("gather: missing worker payloads");
    std::vector<Bytes> out;
    out.reserve(entries.size());
    for (auto& [rnk, b] : entries) out.push_back(std::move(b));
    return out;
  }
  Bytes up;
  put_u32(up, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [rnk, b] : entries) {
    put_u32(up, rnk);
    put_u64(up, b.size());
    up.insert(up.end(), b.begin(), b.end());
  }
  send_frame(parent_, static_cast<std::uint8_t>(wire::Op::gather), round, up);
  return {};
}

void TcpCommunicator::barrier() {
  counters.barriers++;
  const std::uint64_t round = round_++;
  Bytes empty;
  Bytes scratch;
  for (const auto& e : children_)
    recv_frame(e, static_cast<std::uint8_t>(wire::Op::barrier), round, scratch);
  if (rank_ != topo_.root()) {
    send_frame(parent_, static_cast<std::uint8_t>(wire::Op::barrier), round, empty);
    recv_frame(parent_, static_cast<std::uint8_t>(wire::Op::barrier), round, scratch);
  }
  for (const auto& e : children_)
    send_frame(e, static_cast<std::uint8_t>(wire::Op::barrier), round, empty);
}

}  // namespace nytron::comm
