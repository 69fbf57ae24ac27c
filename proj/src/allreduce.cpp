#include "nytron/allreduce.hpp"

#include <algorithm>
#include <chrono>

#include "nytron/error.hpp"

namespace nytron::comm {

TreeTopology::TreeTopology(std::vector<int> parent, int fanout)
    : parent_(std::move(parent)), fanout_(fanout) {
  finish();
}

TreeTopology TreeTopology::regular(int p, int fanout) {
  if (p < 1) throw ConfigError("topology: worker count must be >= 1");
  if (fanout < 1) throw ConfigError("topology: fanout must be >= 1");
  std::vector<int> parent(static_cast<std::size_t>(p));
  parent[0] = -1;
  for (int i = 1; i < p; ++i) parent[static_cast<std::size_t>(i)] = (i - 1) / fanout;
  return TreeTopology(std::move(parent), fanout);
}

void TreeTopology::finish() {
  const int p = size();
  if (p < 1) throw ConfigError("topology: empty");
  if (fanout_ < 1) throw ConfigError("topology: fanout must be >= 1");
  int roots = 0;
  for (int i = 0; i < p; ++i) {
    const int par = parent_[static_cast<std::size_t>(i)];
    if (par == -1) {
      roots++;
      root_ = i;
    } else if (par < 0 || par >= p || par == i) {
      throw ConfigError("topology: bad parent for worker " + std::to_string(i));
    }
  }
  if (roots != 1) throw ConfigError("topology: exactly one root required");
  children_.assign(static_cast<std::size_t>(p), {});
  for (int i = 0; i < p; ++i) {
    const int par = parent_[static_cast<std::size_t>(i)];
    if (par >= 0) children_[static_cast<std::size_t>(par)].push_back(i);
    // Walk to the root to reject cycles; a valid chain ends within p hops.
    int cur = i, hops = 0;
    while (cur != root_) {
      cur = parent_[static_cast<std::size_t>(cur)];
      if (cur < 0 || ++hops > p) throw ConfigError("topology: cycle reaching worker " +
                                                   std::to_string(i));
    }
  }
  for (auto& ch : children_) std::sort(ch.begin(), ch.end());
  // Subtree rank lists, ascending; computed children-first.
  subtree_.assign(static_cast<std::size_t>(p), {});
  for (int i = p - 1; i >= 0; --i) {
    auto& sub = subtree_[static_cast<std::size_t>(i)];
    sub.push_back(i);
    for (int c : children_[static_cast<std::size_t>(i)]) {
      const auto& cs = subtree_[static_cast<std::size_t>(c)];
      sub.insert(sub.end(), cs.begin(), cs.end());
    }
    std::sort(sub.begin(), sub.end());
  }
  // Heap order guarantees children have larger ids; reject layouts where a
  // subtree is not fully below its root in construction order.
  for (int i = 0; i < p; ++i)
    for (int c : children_[static_cast<std::size_t>(i)])
      if (c == root_) throw ConfigError("topology: root cannot be a child");
}

double estimate_comm_cost(std::uint64_t n_iters, std::uint64_t calls_per_iter,
                          const CommCostModel& model) {
  return static_cast<double>(calls_per_iter) * static_cast<double>(n_iters) *
         (model.latency_per_call + model.per_byte * model.bytes_per_call);
}

namespace {

enum class Op : std::uint8_t { none, broadcast, reduce, gather, barrier, shutdown };

const char* op_name(Op op) {
  switch (op) {
    case Op::broadcast: return "broadcast";
    case Op::reduce: return "reduce";
    case Op::gather: return "gather";
    case Op::barrier: return "barrier";
    case Op::shutdown: return "shutdown";
    default: return "none";
  }
}

}  // namespace

struct LocalCluster::Impl {
  explicit Impl(TreeTopology t, double timeout) : topo(std::move(t)), timeout_s(timeout) {
    const std::size_t p = static_cast<std::size_t>(topo.size());
    arrived_flags.assign(p, false);
    red_in.assign(p, {});
    gat_in.assign(p, {});
  }

  TreeTopology topo;
  double timeout_s;

  std::mutex mu;
  std::condition_variable cv;
  std::uint64_t round = 0;
  enum Phase { collect, distribute } phase = collect;
  int arrived = 0;
  int departed = 0;
  Op op = Op::none;
  int op_root = -1;
  std::vector<bool> arrived_flags;

  std::vector<std::vector<double>> red_in;
  std::vector<double> red_out;
  Bytes bc_buf;
  std::vector<Bytes> gat_in;

  ReduceObserver observer;
  bool aborted = false;
  std::string abort_why;

  std::vector<std::unique_ptr<Communicator>> comms;

  void check_abort() const {
    if (aborted) throw TransportError(abort_why);
  }

  template <class Pred>
  void wait(std::unique_lock<std::mutex>& lk, Pred pred, const char* what) {
    const auto deadline =
        std::chrono::steady_clock::now() +
        std::chrono::milliseconds(static_cast<long>(timeout_s * 1000.0));
    while (!pred()) {
      check_abort();
      if (cv.wait_until(lk, deadline) == std::cv_status::timeout && !pred()) {
        std::string missing;
        for (std::size_t r = 0; r < arrived_flags.size(); ++r)
          if (!arrived_flags[r]) missing += (missing.empty() ? "" : ",") + std::to_string(r);
        throw TransportError(std::string("collective timeout during ") + what +
                             " waiting for workers {" + missing + "}");
      }
    }
    check_abort();
  }
};

namespace {

class LocalComm : public Communicator {
 public:
  LocalComm(LocalCluster::Impl* s, int rank) : s_(s), rank_(rank) {}

  int rank() const override { return rank_; }
  int size() const override { return s_->topo.size(); }
  const TreeTopology& topology() const override { return s_->topo; }

  std::optional<Bytes> broadcast(const Bytes& buf, int root) override {
    counters.broadcasts++;
    Op seen = Op::none;
    Bytes out;
    run(rank_ == root ? Op::broadcast : Op::none, root,
        [&](LocalCluster::Impl& s) {
          if (rank_ == root) s.bc_buf = buf;
        },
        [&](LocalCluster::Impl& s) {
          seen = s.op;
          out = s.bc_buf;
        });
    if (seen != Op::broadcast && seen != Op::shutdown)
      throw ProtocolError("broadcast receive paired with " + std::string(op_name(seen)));
    if (seen == Op::shutdown) return std::nullopt;
    counters.bytes_payload += out.size();
    return out;
  }

  void shutdown() override {
    if (rank_ != s_->topo.root()) throw ContractError("shutdown: root only");
    run(Op::shutdown, rank_, [](LocalCluster::Impl&) {}, [](LocalCluster::Impl&) {});
  }

  void allreduce_sum(std::vector<double>& v) override {
    counters.reduces++;
    counters.bytes_payload += v.size() * sizeof(double);
    run(Op::reduce, s_->topo.root(),
        [&](LocalCluster::Impl& s) { s.red_in[static_cast<std::size_t>(rank_)] = v; },
        [&](LocalCluster::Impl& s) { v = s.red_out; });
  }

  std::vector<Bytes> gather(const Bytes& payload, int root) override {
    counters.gathers++;
    counters.bytes_payload += payload.size();
    std::vector<Bytes> out;
    run(Op::gather, root,
        [&](LocalCluster::Impl& s) { s.gat_in[static_cast<std::size_t>(rank_)] = payload; },
        [&](LocalCluster::Impl& s) {
          if (rank_ == root) out = s.gat_in;
        });
    return out;
  }

  void barrier() override {
    counters.barriers++;
    run(Op::barrier, s_->topo.root(), [](LocalCluster::Impl&) {}, [](LocalCluster::Impl&) {});
  }

 private:
  // One rendezvous round: deposit under the collect phase, read under
  // distribute; the last depositor performs the root-side computation.
  template <class Deposit, class Read>
  void run(Op op, int root, const Deposit& deposit, const Read& read) {
    LocalCluster::Impl& s = *s_;
    const int p = s.topo.size();
    std::unique_lock<std::mutex> lk(s.mu);
    const std::uint64_t my_round = next_round_++;
    s.wait(lk, [&] { return s.round == my_round && s.phase == LocalCluster::Impl::collect; },
           "entry");

    // Op::none marks a passive downstream receiver (broadcast/shutdown).
    if (s.arrived == 0) {
      s.op = op;
      s.op_root = root;
    } else if (op != Op::none && s.op != op) {
      if (s.op == Op::none) {
        s.op = op;
        s.op_root = root;
      } else {
        const std::string msg = "collective mismatch in round " + std::to_string(my_round) +
                                ": worker " + std::to_string(rank_) + " issued " + op_name(op) +
                                " while " + op_name(s.op) + " is in flight";
        s.aborted = true;
        s.abort_why = msg;
        s.cv.notify_all();
        throw ProtocolError(msg);
      }
    }
    deposit(s);
    s.arrived_flags[static_cast<std::size_t>(rank_)] = true;
    if (++s.arrived == p) {
      try {
        finish_round(s);
      } catch (const std::exception& e) {
        s.aborted = true;
        s.abort_why = e.what();
        s.cv.notify_all();
        throw;
      }
      s.phase = LocalCluster::Impl::distribute;
      s.cv.notify_all();
    } else {
      s.wait(lk,
             [&] { return s.round == my_round && s.phase == LocalCluster::Impl::distribute; },
             op_name(op));
    }
    read(s);
    if (++s.departed == p) {
      s.arrived = 0;
      s.departed = 0;
      s.op = Op::none;
      s.op_root = -1;
      std::fill(s.arrived_flags.begin(), s.arrived_flags.end(), false);
      for (auto& in : s.red_in) in.clear();
      for (auto& in : s.gat_in) in.clear();
      s.bc_buf.clear();
      s.red_out.clear();
      s.phase = LocalCluster::Impl::collect;
      ++s.round;
      s.cv.notify_all();
    }
  }

  static void finish_round(LocalCluster::Impl& s) {
    if (s.op == Op::reduce) {
      const std::size_t p = s.red_in.size();
      const std::size_t len = s.red_in[0].size();
      for (std::size_t r = 1; r < p; ++r)
        if (s.red_in[r].size() != len)
          throw ProtocolError("reduce length mismatch: worker " + std::to_string(r) + " sent " +
                              std::to_string(s.red_in[r].size()) + " values, worker 0 sent " +
                              std::to_string(len));
      // The pinned order: a single accumulator visiting workers 0,1,...,p-1.
      s.red_out.assign(len, 0.0);
      for (std::size_t r = 0; r < p; ++r) {
        const double* in = s.red_in[r].data();
        for (std::size_t i = 0; i < len; ++i) s.red_out[i] += in[i];
      }
      if (s.observer) s.observer(s.round, s.red_in, s.red_out);
    }
  }

  LocalCluster::Impl* s_;
  int rank_;
  std::uint64_t next_round_ = 0;
};

}  // namespace

LocalCluster::LocalCluster(TreeTopology topo, double timeout_seconds)
    : impl_(std::make_unique<Impl>(std::move(topo), timeout_seconds)) {
  const int p = impl_->topo.size();
  impl_->comms.reserve(static_cast<std::size_t>(p));
  for (int r = 0; r < p; ++r) impl_->comms.push_back(std::make_unique<LocalComm>(impl_.get(), r));
}

LocalCluster::~LocalCluster() = default;

Communicator& LocalCluster::comm(int rank) {
  return *impl_->comms.at(static_cast<std::size_t>(rank));
}

void LocalCluster::set_reduce_observer(ReduceObserver fn) {
  std::lock_guard<std::mutex> lk(impl_->mu);
  impl_->observer = std::move(fn);
}

void LocalCluster::abort(int rank, const std::string& why) {
  std::lock_guard<std::mutex> lk(impl_->mu);
  impl_->aborted = true;
  impl_->abort_why = "worker " + std::to_string(rank) + " failed: " + why;
  impl_->cv.notify_all();
}

}  // namespace nytron::comm
