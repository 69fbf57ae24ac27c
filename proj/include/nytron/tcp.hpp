#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nytron/allreduce.hpp"

namespace nytron::comm {

struct HostPort {
  std::string host;
  std::uint16_t port = 0;
};

// One "host:port" line per worker rank.
std::vector<HostPort> parse_hosts_file(const std::string& path);

struct TcpOptions {
  double timeout_seconds = 60.0;
  double connect_timeout_seconds = 30.0;
};

// Socket transport over the tree edges: every non-root rank holds one
// connection to its parent, every inner rank accepts its children. Rooted
// collectives (broadcast/gather/shutdown) run from the tree root. Reduce
// payloads travel up as rank-ordered bundles and the root applies the same
// pinned ascending-rank accumulation as the in-process transport, so reduced
// values agree bit-for-bit across transports.
class TcpCommunicator : public Communicator {
 public:
  // Binds hosts[rank] unless a pre-bound listener fd is supplied (used by
  // tests that bind port 0 first and collect the chosen ports).
  TcpCommunicator(TreeTopology topo, std::vector<HostPort> hosts, int rank,
                  TcpOptions opts = {}, int listen_fd = -1);
  ~TcpCommunicator() override;

  TcpCommunicator(const TcpCommunicator&) = delete;
  TcpCommunicator& operator=(const TcpCommunicator&) = delete;

  int rank() const override { return rank_; }
  int size() const override { return topo_.size(); }
  const TreeTopology& topology() const override { return topo_; }

  std::optional<Bytes> broadcast(const Bytes& buf, int root) override;
  void shutdown() override;
  void allreduce_sum(std::vector<double>& v) override;
  std::vector<Bytes> gather(const Bytes& payload, int root) override;
  void barrier() override;

  static int bind_listener(const std::string& host, std::uint16_t port, int backlog);
  static std::uint16_t listener_port(int fd);

 private:
  struct Edge {
    int peer = -1;
    int fd = -1;
  };

  void establish(std::vector<HostPort> hosts, int listen_fd);
  void send_frame(const Edge& e, std::uint8_t op, std::uint64_t round, const Bytes& payload);
  void recv_frame(const Edge& e, std::uint8_t expected_op, std::uint64_t round, Bytes& payload,
                  std::uint8_t* actual_op = nullptr);
  [[noreturn]] void edge_fail(const Edge& e, const std::string& what);

  TreeTopology topo_;
  int rank_ = 0;
  TcpOptions opts_;
  Edge parent_;
  std::vector<Edge> children_;  // ascending child rank
  std::uint64_t round_ = 0;
  bool closed_ = false;
};

}  // namespace nytron::comm
