#include "nytron/driver.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <thread>
#include <utility>

#include <json.hpp>

#include "nytron/bytes.hpp"
#include "nytron/error.hpp"

namespace nytron::driver {

namespace {

using Clock = std::chrono::steady_clock;

double secs_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Worker-loop commands carried in broadcast payloads during step 4.
constexpr std::uint8_t kCmdEvalFg = 1;
constexpr std::uint8_t kCmdHessVec = 2;
constexpr std::uint8_t kCmdStageDone = 3;

void put_vec(Bytes& b, std::span<const double> v) {
  for (double x : v) put_f64(b, x);
}

std::vector<double> read_vec(ByteReader& r, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = r.f64();
  return v;
}

// Rank 0's view of the objective: every call broadcasts a command so the
// other ranks mirror the same local computation, then the partials meet in
// allreduces. One broadcast + two reduces per fused f/g, one broadcast + one
// reduce per Hessian product.
class DistributedObjective final : public tron::Oracle {
 public:
  DistributedObjective(comm::Communicator& comm, const KernelBlock& block, HyperParams params,
                       Loss loss, std::size_t m)
      : comm_(comm), block_(block), params_(params), loss_(loss), m_(m) {}

  std::size_t dim() const override { return m_; }

  double eval_fg(std::span<const double> beta, std::span<double> g) override {
    Bytes b;
    b.reserve(1 + 8 * m_);
    put_u8(b, kCmdEvalFg);
    put_vec(b, beta);
    comm_.broadcast(b, comm_.topology().root());

    LocalPartials lp;
    trial_ = local_eval_fused(block_, beta, loss_, params_.lambda, lp);
    std::vector<double> fparts{lp.f_reg, lp.f_loss};
    comm_.allreduce_sum(fparts);
    comm_.allreduce_sum(lp.g);
    std::copy(lp.g.begin(), lp.g.end(), g.begin());
    ++n_fg_;
    return 0.5 * params_.lambda * fparts[0] + fparts[1];
  }

  void hess_vec(std::span<const double> d, bool adopt_last_eval, std::span<double> out) override {
    Bytes b;
    b.reserve(2 + 8 * m_);
    put_u8(b, kCmdHessVec);
    put_u8(b, adopt_last_eval ? 1 : 0);
    put_vec(b, d);
    comm_.broadcast(b, comm_.topology().root());

    if (adopt_last_eval) cur_ = trial_;
    LocalPartials lp;
    local_hessian_vec(block_, cur_, d, params_.lambda, lp);
    comm_.allreduce_sum(lp.hd);
    std::copy(lp.hd.begin(), lp.hd.end(), out.begin());
    ++n_hd_;
  }

  std::uint64_t n_fg() const { return n_fg_; }
  std::uint64_t n_hd() const { return n_hd_; }

 private:
  comm::Communicator& comm_;
  const KernelBlock& block_;
  HyperParams params_;
  Loss loss_;
  std::size_t m_;
  LossState trial_;
  LossState cur_;
  std::uint64_t n_fg_ = 0;
  std::uint64_t n_hd_ = 0;
};

// Non-root ranks answer commands until the root announces the stage's final
// coefficients.
std::vector<double> worker_stage(comm::Communicator& comm, const KernelBlock& block,
                                 const HyperParams& params, Loss loss, std::size_t m) {
  const int root = comm.topology().root();
  LossState trial;
  LossState cur;
  while (true) {
    const auto msg = comm.broadcast({}, root);
    if (!msg) throw TransportError("job shut down in the middle of a stage");
    ByteReader r(*msg);
    switch (r.u8()) {
      case kCmdEvalFg: {
        const auto beta = read_vec(r, m);
        LocalPartials lp;
        trial = local_eval_fused(block, beta, loss, params.lambda, lp);
        std::vector<double> fparts{lp.f_reg, lp.f_loss};
        comm.allreduce_sum(fparts);
        comm.allreduce_sum(lp.g);
        break;
      }
      case kCmdHessVec: {
        const bool adopt = r.u8() != 0;
        const auto d = read_vec(r, m);
        if (adopt) cur = trial;
        LocalPartials lp;
        local_hessian_vec(block, cur, d, params.lambda, lp);
        comm.allreduce_sum(lp.hd);
        break;
      }
      case kCmdStageDone:
        return read_vec(r, m);
      default:
        throw ProtocolError("unknown worker command");
    }
  }
}

// Config exchange for socket jobs: the root's JobConfig is authoritative and
// travels as JSON in the first broadcast, so worker processes only need data,
// hosts and a rank.
Bytes config_bytes(const JobConfig& cfg) {
  nlohmann::json j;
  j["lambda"] = cfg.params.lambda;
  j["sigma"] = cfg.params.sigma;
  j["m"] = cfg.m;
  j["stages"] = cfg.stages;
  j["source"] = to_string(cfg.source);
  j["loss"] = to_string(cfg.loss);
  j["seed"] = cfg.seed;
  j["eps_rel"] = cfg.tron.eps_rel;
  j["max_iter"] = cfg.tron.max_iter;
  j["cg_tol"] = cfg.tron.cg_tol;
  j["cg_max"] = cfg.tron.cg_max;
  j["delta0"] = cfg.tron.delta0;
  j["kmeans_iters"] = cfg.kmeans.iters;
  j["basis_file"] = cfg.basis_file;
  j["kernel_cache"] = cfg.kernel_cache;
  const std::string s = j.dump();
  return Bytes(s.begin(), s.end());
}

JobConfig config_from_bytes(const Bytes& b) {
  const auto j = nlohmann::json::parse(std::string(b.begin(), b.end()));
  JobConfig cfg;
  cfg.params.lambda = j.at("lambda").get<double>();
  cfg.params.sigma = j.at("sigma").get<double>();
  cfg.m = j.at("m").get<std::size_t>();
  cfg.stages = j.at("stages").get<std::vector<std::size_t>>();
  cfg.source = basis_source_from(j.at("source").get<std::string>());
  cfg.loss = loss_from(j.at("loss").get<std::string>());
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.tron.eps_rel = j.at("eps_rel").get<double>();
  cfg.tron.max_iter = j.at("max_iter").get<int>();
  cfg.tron.cg_tol = j.at("cg_tol").get<double>();
  cfg.tron.cg_max = j.at("cg_max").get<int>();
  cfg.tron.delta0 = j.at("delta0").get<double>();
  cfg.kmeans.iters = j.at("kmeans_iters").get<int>();
  cfg.basis_file = j.at("basis_file").get<std::string>();
  cfg.kernel_cache = j.at("kernel_cache").get<std::string>();
  return cfg;
}

std::uint64_t cache_tag(const BasisSet& bs, std::uint64_t seed, int p, int rank) {
  std::uint64_t h = basis_hash(bs);
  h ^= 0x9E3779B97F4A7C15ULL * (seed + 1);
  h ^= 0xBF58476D1CE4E5B9ULL * ((static_cast<std::uint64_t>(p) << 8) | static_cast<std::uint64_t>(rank));
  return h;
}

template <typename Fn>
auto with_step(const char* label, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const std::exception& e) {
    throw Error(std::string(label) + ": " + e.what());
  }
}

}  // namespace

std::vector<std::size_t> JobConfig::schedule() const {
  std::vector<std::size_t> s = stages.empty() ? std::vector<std::size_t>{m} : stages;
  std::size_t prev = 0;
  for (std::size_t v : s) {
    if (v <= prev) throw ConfigError("stage sizes must be positive and strictly increasing");
    prev = v;
  }
  if (s.back() != m) throw ConfigError("stage schedule must end at the requested basis size");
  return s;
}

ModelState run_job(comm::Communicator& comm, const Shard& shard, int dim, const JobConfig& cfg,
                   TrainReport& report) {
  cfg.params.validate();
  cfg.tron.validate();
  const auto sched = cfg.schedule();
  const int rank = comm.rank();
  const int p = comm.size();
  const int root = comm.topology().root();

  report.m = cfg.m;
  report.p = p;
  report.lambda = cfg.params.lambda;
  report.sigma = cfg.params.sigma;
  report.basis_source = cfg.basis_file.empty() ? to_string(cfg.source) : "file";
  report.loss_name = to_string(cfg.loss);
  report.seed = cfg.seed;
  report.dim = dim;

  BasisSet bs;
  bs.source = cfg.source;
  bs.sigma = cfg.params.sigma;
  bs.seed = cfg.seed;
  KernelBlock block;
  std::vector<double> beta;
  std::size_t old_m = 0;

  comm.barrier();
  for (std::size_t stage = 0; stage < sched.size(); ++stage) {
    const std::size_t target = sched[stage];

    const auto t2 = Clock::now();
    bool clustered = false;
    with_step("step 2 (basis)", [&] {
      if (stage == 0 && !cfg.basis_file.empty()) {
        bs = basis::load_basis(cfg.basis_file);
        if (bs.size() != target)
          throw ConfigError("basis file holds " + std::to_string(bs.size()) +
                            " points but the stage wants " + std::to_string(target));
        bs.sigma = cfg.params.sigma;  // hyperparameters stay authoritative
        bs.seed = cfg.seed;
      } else if (stage == 0 && cfg.source == BasisSource::kmeans) {
        clustered = true;
        bs = basis::select_kmeans_spmd(shard, target, dim, cfg.params.sigma, cfg.seed, comm,
                                       cfg.kmeans);
      } else {
        auto pts = basis::pick_random_spmd(shard, old_m, target, cfg.seed, comm);
        if (stage == 0) {
          for (auto& pt : pts) bs.append(pt);
        } else {
          // Extension keeps the basis duplicate-free so W stays better
          // conditioned; identical inputs keep the skips identical per rank.
          std::size_t skipped = 0;
          for (auto& pt : pts) {
            bool dup = false;
            for (const auto& q : bs.points)
              if (q == pt) {
                dup = true;
                break;
              }
            if (dup) {
              ++skipped;
              continue;
            }
            bs.append(pt);
          }
          if (skipped > 0 && rank == root)
            report.warnings.push_back("stage " + std::to_string(stage + 1) + ": skipped " +
                                      std::to_string(skipped) + " duplicate basis points");
        }
      }
      comm.barrier();
    });
    if (clustered)
      report.kmeans_seconds += secs_since(t2);
    else
      report.step_seconds[1] += secs_since(t2);

    const auto t3 = Clock::now();
    const std::size_t m_now = bs.size();
    with_step("step 3 (kernel blocks)", [&] {
      if (stage == 0) {
        const RowRange wr = w_range_for(rank, p, m_now);
        const bool use_cache = !cfg.kernel_cache.empty() && sched.size() == 1;
        const std::string path = cfg.kernel_cache + ".r" + std::to_string(rank);
        const std::uint64_t tag = use_cache ? cache_tag(bs, cfg.seed, p, rank) : 0;
        bool loaded = false;
        if (use_cache)
          loaded = load_block_cache(path, shard.size(), m_now, cfg.params.sigma, tag, &block);
        if (!loaded) {
          block = build_kernel_block(shard, bs, cfg.params, wr);
          if (use_cache) save_block_cache(path, block, cfg.params.sigma, tag);
        }
      } else {
        const std::size_t q = m_now - old_m;
        RowRange nr = w_range_for(rank, p, q);
        nr.begin += static_cast<std::int32_t>(old_m);
        nr.end += static_cast<std::int32_t>(old_m);
        extend_kernel_block(block, shard, bs, old_m, cfg.params, nr);
      }
      comm.barrier();
    });
    report.step_seconds[2] += secs_since(t3);

    const auto t4 = Clock::now();
    beta.resize(m_now, 0.0);
    StageReport sr;
    sr.m = m_now;
    with_step("step 4 (optimization)", [&] {
      if (rank == root) {
        DistributedObjective oracle(comm, block, cfg.params, cfg.loss, m_now);
        auto res = tron::minimize(oracle, beta, cfg.tron);
        beta = std::move(res.beta);
        sr.trace = std::move(res.trace);
        sr.f_start = sr.trace.f0;
        sr.oracle_n_fg = oracle.n_fg();
        sr.oracle_n_hd = oracle.n_hd();
        Bytes done;
        done.reserve(1 + 8 * m_now);
        put_u8(done, kCmdStageDone);
        put_vec(done, beta);
        comm.broadcast(done, root);
      } else {
        beta = worker_stage(comm, block, cfg.params, cfg.loss, m_now);
      }
      comm.barrier();
    });
    report.step_seconds[3] += secs_since(t4);
    report.stages.push_back(std::move(sr));
    old_m = m_now;
  }

  report.final_objective = report.stages.back().trace.f_final;
  report.collectives = comm.counters;

  ModelState model;
  model.beta = std::move(beta);
  model.basis = std::move(bs);
  model.params = cfg.params;
  model.loss = cfg.loss;
  model.dim = dim;
  return model;
}

TrainResult train_dataset(const Dataset& train, const Dataset* test, const JobConfig& cfg, int p,
                          int fanout) {
  if (p < 1) throw ConfigError("worker count must be positive");
  const auto t0 = Clock::now();
  auto shards = shard_random(train, p, cfg.seed);
  const double shard_secs = secs_since(t0);

  comm::LocalCluster cluster(comm::TreeTopology::regular(p, fanout));
  std::vector<TrainReport> reports(static_cast<std::size_t>(p));
  std::vector<ModelState> models(static_cast<std::size_t>(p));
  std::vector<std::exception_ptr> errs(static_cast<std::size_t>(p));
  std::atomic<int> first_fail{-1};
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(p));
  for (int r = 0; r < p; ++r)
    threads.emplace_back([&, r] {
      const auto ri = static_cast<std::size_t>(r);
      try {
        models[ri] = run_job(cluster.comm(r), shards[ri], train.dim, cfg, reports[ri]);
      } catch (const std::exception& e) {
        errs[ri] = std::current_exception();
        int none = -1;
        first_fail.compare_exchange_strong(none, r);
        cluster.abort(r, e.what());
      }
    });
  for (auto& t : threads) t.join();
  if (first_fail.load() >= 0) std::rethrow_exception(errs[static_cast<std::size_t>(first_fail)]);

  TrainResult out;
  out.model = std::move(models[0]);
  out.report = std::move(reports[0]);
  out.report.step_seconds[0] += shard_secs;
  out.report.transport = "local";
  out.report.n_train = train.examples.size();
  if (test) out.report.test_accuracy = accuracy(out.model, test->examples);
  return out;
}

TrainResult train(const std::string& train_path, const std::string& test_path,
                  const JobConfig& cfg, int p, int fanout) {
  const auto t0 = Clock::now();
  const Dataset tr = with_step("step 1 (data)", [&] { return parse_dataset(train_path); });
  Dataset te;
  if (!test_path.empty()) te = with_step("step 1 (data)", [&] { return parse_dataset(test_path); });
  const double load_secs = secs_since(t0);
  auto out = train_dataset(tr, test_path.empty() ? nullptr : &te, cfg, p, fanout);
  out.report.step_seconds[0] += load_secs;
  return out;
}

TrainResult train_tcp_rank(const Dataset& train, const Dataset* test, const JobConfig& cfg,
                           const std::vector<comm::HostPort>& hosts, int rank, int fanout,
                           comm::TcpOptions opts) {
  const int p = static_cast<int>(hosts.size());
  comm::TreeTopology topo = comm::TreeTopology::regular(p, fanout);
  comm::TcpCommunicator comm(topo, hosts, rank, opts);

  // The root's config is authoritative; workers adopt it before sharding so
  // the seed-driven layout agrees everywhere.
  JobConfig job = cfg;
  const Bytes sent = rank == topo.root() ? config_bytes(cfg) : Bytes{};
  const auto got = comm.broadcast(sent, topo.root());
  if (!got) throw TransportError("job shut down before the config exchange");
  if (rank != topo.root()) job = config_from_bytes(*got);

  const auto t0 = Clock::now();
  auto shards = shard_random(train, p, job.seed);
  const double shard_secs = secs_since(t0);

  TrainResult out;
  out.model = run_job(comm, shards[static_cast<std::size_t>(rank)], train.dim, job, out.report);
  out.report.step_seconds[0] += shard_secs;
  out.report.transport = "tcp";
  out.report.n_train = train.examples.size();
  if (rank == topo.root() && test) out.report.test_accuracy = accuracy(out.model, test->examples);
  return out;
}

std::vector<double> decision_values(const ModelState& model,
                                    const std::vector<SparseExample>& xs) {
  if (model.beta.size() != model.basis.size())
    throw ContractError("model: coefficient count does not match basis size");
  const BasisSet& bs = model.basis;
  const double inv2s2 = 1.0 / (2.0 * bs.sigma * bs.sigma);
  std::vector<double> out(xs.size());
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const SparseVec& x = xs[i].x;
    const double x_sq = sparse_sq_norm(x);
    double o = 0.0;
    for (std::size_t k = 0; k < bs.size(); ++k) {
      const double d2 = sparse_sq_dist(x, x_sq, bs.points[k], bs.sq_norms[k]);
      o += model.beta[k] * std::exp(-d2 * inv2s2);
    }
    out[i] = o;
  }
  return out;
}

double accuracy(const ModelState& model, const std::vector<SparseExample>& xs) {
  if (xs.empty()) throw ConfigError("accuracy: empty evaluation set");
  const auto o = decision_values(model, xs);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (label_of(o[i]) == xs[i].label) ++correct;
  return static_cast<double>(correct) / static_cast<double>(xs.size());
}

const std::vector<Preset>& presets() {
  static const std::vector<Preset> kPresets = {
      {"vehicle", 8.0, 2.0},
      {"covtype", 0.005, 0.09},
      {"ccat", 8.0, 0.7},
      {"mnist8m", 8.0, 7.0},
  };
  return kPresets;
}

const Preset* find_preset(const std::string& name) {
  for (const auto& p : presets())
    if (p.name == name) return &p;
  return nullptr;
}

std::string report_json(const TrainReport& r) {
  nlohmann::ordered_json j;
  j["steps"]["1_data"] = r.step_seconds[0];
  j["steps"]["2_basis_comm"] = r.step_seconds[1];
  j["steps"]["3_kernel"] = r.step_seconds[2];
  j["steps"]["4_optimize"] = r.step_seconds[3];
  j["kmeans_seconds"] = r.kmeans_seconds;
  j["final_objective"] = r.final_objective;
  if (r.test_accuracy)
    j["test_accuracy"] = *r.test_accuracy;
  else
    j["test_accuracy"] = nullptr;
  j["stages"] = nlohmann::ordered_json::array();
  for (const auto& s : r.stages) {
    nlohmann::ordered_json js;
    js["m"] = s.m;
    js["f_start"] = s.f_start;
    js["f_final"] = s.trace.f_final;
    js["gnorm0"] = s.trace.gnorm0;
    js["gnorm_final"] = s.trace.gnorm_final;
    js["accepted"] = s.trace.accepted;
    js["rejected"] = s.trace.rejected;
    js["n_fg"] = s.trace.n_fg;
    js["n_hd"] = s.trace.n_hd;
    js["oracle_n_fg"] = s.oracle_n_fg;
    js["oracle_n_hd"] = s.oracle_n_hd;
    js["converged"] = s.trace.converged;
    j["stages"].push_back(std::move(js));
  }
  j["collectives"]["broadcasts"] = r.collectives.broadcasts;
  j["collectives"]["reduces"] = r.collectives.reduces;
  j["collectives"]["gathers"] = r.collectives.gathers;
  j["collectives"]["barriers"] = r.collectives.barriers;
  j["collectives"]["payload_bytes"] = r.collectives.bytes_payload;
  j["config"]["m"] = r.m;
  j["config"]["p"] = r.p;
  j["config"]["lambda"] = r.lambda;
  j["config"]["sigma"] = r.sigma;
  j["config"]["basis"] = r.basis_source;
  j["config"]["loss"] = r.loss_name;
  j["config"]["transport"] = r.transport;
  j["config"]["seed"] = r.seed;
  j["data"]["n_train"] = r.n_train;
  j["data"]["dim"] = r.dim;
  j["warnings"] = r.warnings;
  return j.dump(2);
}

}  // namespace nytron::driver
