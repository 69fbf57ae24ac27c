#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "nytron/bytes.hpp"

namespace nytron::comm {

// Reduction tree over worker ids. The tree fixes message routing and fan-in;
// the floating-point accumulation order is pinned separately (ascending worker
// id at the root), so reduced values are identical across topologies and
// transports.
class TreeTopology {
 public:
  TreeTopology() = default;
  // parent[i] = parent rank, -1 for the root.
  TreeTopology(std::vector<int> parent, int fanout);

  static TreeTopology regular(int p, int fanout = 2);

  int size() const { return static_cast<int>(parent_.size()); }
  int fanout() const { return fanout_; }
  int root() const { return root_; }
  int parent(int rank) const { return parent_.at(static_cast<std::size_t>(rank)); }
  const std::vector<int>& children(int rank) const {
    return children_.at(static_cast<std::size_t>(rank));
  }
  // Ranks of the subtree rooted at `rank`, ascending.
  const std::vector<int>& subtree(int rank) const {
    return subtree_.at(static_cast<std::size_t>(rank));
  }

 private:
  void finish();  // builds children/subtree tables and validates

  std::vector<int> parent_;
  std::vector<std::vector<int>> children_;
  std::vector<std::vector<int>> subtree_;
  int fanout_ = 2;
  int root_ = 0;
};

struct CollectiveCounters {
  std::uint64_t broadcasts = 0;
  std::uint64_t reduces = 0;
  std::uint64_t gathers = 0;
  std::uint64_t barriers = 0;
  std::uint64_t bytes_payload = 0;  // payload bytes this rank contributed or received
};

// Per-rank handle to the collective machinery. All ranks must issue the same
// sequence of collective calls; violations surface as protocol errors.
class Communicator {
 public:
  virtual ~Communicator() = default;

  virtual int rank() const = 0;
  virtual int size() const = 0;
  virtual const TreeTopology& topology() const = 0;

  // Root passes the payload; every rank gets the root's bytes back. A nullopt
  // at non-root ranks means the root announced shutdown instead.
  virtual std::optional<Bytes> broadcast(const Bytes& buf, int root) = 0;

  // Root-initiated teardown announcement (pairs with a worker's pending
  // broadcast receive).
  virtual void shutdown() = 0;

  // In-place sum over all ranks, accumulated left-to-right in worker-id order;
  // every rank receives the identical (bitwise) result.
  virtual void allreduce_sum(std::vector<double>& v) = 0;

  // Collects every rank's payload at `root`, ordered by rank; other ranks get
  // an empty vector.
  virtual std::vector<Bytes> gather(const Bytes& payload, int root) = 0;

  virtual void barrier() = 0;

  CollectiveCounters counters;
};

// Intra-process transport: p communicator handles over shared state, one per
// worker thread. The reduce deposits every rank's vector and sums them in
// ascending rank order, matching the wire transport bit-for-bit.
class LocalCluster {
 public:
  explicit LocalCluster(TreeTopology topo, double timeout_seconds = 120.0);
  ~LocalCluster();

  Communicator& comm(int rank);

  // Test hook: observes every reduce round (inputs by rank, pinned-order sum).
  using ReduceObserver = std::function<void(std::uint64_t round,
                                            const std::vector<std::vector<double>>& inputs,
                                            const std::vector<double>& result)>;
  void set_reduce_observer(ReduceObserver fn);

  // Fail-fast: wakes every blocked collective with a transport error.
  void abort(int rank, const std::string& why);

  struct Impl;

 private:
  std::unique_ptr<Impl> impl_;
};

// Per-call communication cost: latency C seconds plus D seconds/byte over B
// bytes.
struct CommCostModel {
  double latency_per_call = 0.0;   // C
  double per_byte = 0.0;           // D
  double bytes_per_call = 0.0;     // B
};

// Total modeled time for n_iters optimization iterations issuing
// calls_per_iter collective calls each, evaluated exactly as
// calls_per_iter * n_iters * (C + D*B) in that association order.
double estimate_comm_cost(std::uint64_t n_iters, std::uint64_t calls_per_iter,
                          const CommCostModel& model);

}  // namespace nytron::comm
