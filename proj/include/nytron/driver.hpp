#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nytron/allreduce.hpp"
#include "nytron/basis.hpp"
#include "nytron/data.hpp"
#include "nytron/kernel.hpp"
#include "nytron/objective.hpp"
#include "nytron/tcp.hpp"
#include "nytron/tron.hpp"

namespace nytron::driver {

struct JobConfig {
  HyperParams params;
  std::size_t m = 100;
  std::vector<std::size_t> stages;  // basis schedule; empty means {m}
  BasisSource source = BasisSource::random;
  Loss loss = Loss::squared_hinge;
  std::uint64_t seed = 1;
  tron::TronConfig tron;
  basis::KmeansOptions kmeans;
  std::string basis_file;    // pre-selected basis; skips stage-one selection
  std::string kernel_cache;  // per-worker block cache path prefix

  // stages (or {m}), validated: strictly increasing, ending at m.
  std::vector<std::size_t> schedule() const;
};

struct StageReport {
  std::size_t m = 0;
  double f_start = 0.0;  // objective at the zero-padded warm start
  tron::TronTrace trace;
  // Command rounds the objective actually issued; must equal the trace's
  // n_fg / n_hd exactly.
  std::uint64_t oracle_n_fg = 0;
  std::uint64_t oracle_n_hd = 0;
};

struct TrainReport {
  // Wall-clock seconds of the four pipeline steps: 0 data loading/sharding,
  // 1 basis communication, 2 kernel blocks, 3 optimization.
  std::array<double, 4> step_seconds{};
  double kmeans_seconds = 0.0;  // clustering billed apart from step 2
  std::vector<StageReport> stages;
  double final_objective = 0.0;
  std::optional<double> test_accuracy;
  comm::CollectiveCounters collectives;
  std::vector<std::string> warnings;

  // config echo
  std::size_t m = 0;
  int p = 1;
  double lambda = 0.0;
  double sigma = 0.0;
  std::string basis_source;
  std::string loss_name;
  std::string transport;
  std::uint64_t seed = 0;
  std::size_t n_train = 0;
  int dim = 0;
};

std::string report_json(const TrainReport& r);

// One rank's body of the training job: staged basis growth, kernel blocks,
// then the minimizer driven from the tree root with workers answering fused
// f/g and Hessian-product rounds. Every rank returns the identical model.
ModelState run_job(comm::Communicator& comm, const Shard& shard, int dim, const JobConfig& cfg,
                   TrainReport& report);

struct TrainResult {
  ModelState model;
  TrainReport report;
};

// In-process cluster: shards the data, runs p worker threads over the local
// transport, evaluates on `test` when given.
TrainResult train_dataset(const Dataset& train, const Dataset* test, const JobConfig& cfg, int p,
                          int fanout = 2);

TrainResult train(const std::string& train_path, const std::string& test_path,
                  const JobConfig& cfg, int p, int fanout = 2);

// One rank of a socket-transport job. Every process loads the data and keeps
// its own shard; rank 0 gets the report and test evaluation.
TrainResult train_tcp_rank(const Dataset& train, const Dataset* test, const JobConfig& cfg,
                           const std::vector<comm::HostPort>& hosts, int rank, int fanout = 2,
                           comm::TcpOptions opts = {});

// o(x) = sum_k beta_k k(x, xbar_k); labels resolve ties at 0 toward +1.
std::vector<double> decision_values(const ModelState& model,
                                    const std::vector<SparseExample>& xs);
inline int label_of(double o) { return o >= 0.0 ? 1 : -1; }
double accuracy(const ModelState& model, const std::vector<SparseExample>& xs);

struct Preset {
  std::string name;
  double lambda = 1.0;
  double sigma = 1.0;
};

const std::vector<Preset>& presets();
const Preset* find_preset(const std::string& name);

}  // namespace nytron::driver
