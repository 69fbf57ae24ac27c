// Acceptance checks: one line per criterion, exit code = number of failures.
// Each check is self-contained and prints PASS/FAIL with the measured values
// so a regression is diagnosable from the test log alone.

#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

#include "helpers.hpp"
#include "nytron/allreduce.hpp"
#include "nytron/basis.hpp"
#include "nytron/data.hpp"
#include "nytron/driver.hpp"
#include "nytron/kernel.hpp"
#include "nytron/objective.hpp"
#include "nytron/reference.hpp"
#include "nytron/tron.hpp"

using namespace nytron;

namespace {

using Clock = std::chrono::steady_clock;

double secs_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// pinned tolerances
constexpr double kGradTol = 1e-6;        // criterion 1
constexpr double kGradBudget = 5.0;      // seconds
constexpr double kHessTol = 1e-12;       // criterion 2
constexpr double kHessBudget = 5.0;      // seconds
constexpr double kEquivObjTol = 1e-6;    // criterion 3
constexpr double kExactFrobTol = 1e-8;   // criterion 4
constexpr double kExactObjTol = 1e-6;    // criterion 4
constexpr double kParityObjTol = 1e-8;   // criterion 5
constexpr double kWarmStartTol = 1e-12;  // criterion 6
constexpr double kStagedVsColdTol = 1e-6;
constexpr double kTrendSlack = 0.005;    // criterion 7: 0.5 percentage points
constexpr double kOracleGap = 0.01;      // criterion 7: 1 percentage point
constexpr double kTrendBudget = 120.0;   // seconds
constexpr double kClusterGap = 0.01;     // criterion 8
constexpr double kTimeRatioCap = 3.0;    // criterion 9

struct Outcome {
  bool pass = true;
  std::string detail;

  void fail(const std::string& why) {
    pass = false;
    if (!detail.empty()) detail += "; ";
    detail += why;
  }
};

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), format, v);
  return buf;
}

std::vector<double> labels_of(const Dataset& ds) {
  std::vector<double> y(ds.examples.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = ds.examples[i].label;
  return y;
}

double block_objective(const KernelBlock& block, const std::vector<double>& beta, double lambda,
                       LocalPartials& lp) {
  local_eval_fused(block, beta, Loss::squared_hinge, lambda, lp);
  return 0.5 * lambda * lp.f_reg + lp.f_loss;
}

// ---------------------------------------------------------------- criterion 1

Outcome check_gradient() {
  Outcome out;
  const auto t0 = Clock::now();
  const double h = 1e-6;
  double worst = 0.0;

  for (int inst = 0; inst < 20; ++inst) {
    const std::uint64_t seed = 100 + static_cast<std::uint64_t>(inst);
    const Dataset ds = testing::planted(50, 5, seed);
    const BasisSet bs = testing::basis_prefix(ds, 10, 1.2);
    const double lambda = 0.3 + 0.1 * inst;
    const KernelBlock block =
        build_kernel_block(testing::whole_shard(ds), bs, {lambda, 1.2}, w_range_for(0, 1, 10));

    // keep the trial point away from hinge boundaries so the finite
    // difference never straddles a kink
    testing::Rng64 rng(seed * 7 + 1);
    std::vector<double> beta(10);
    for (int tries = 0;; ++tries) {
      for (auto& v : beta) v = 0.5 * testing::gauss_draw(rng);
      const LossState st = local_outputs(block, beta, Loss::squared_hinge);
      double closest = 1e300;
      for (std::size_t i = 0; i < st.outputs.size(); ++i)
        closest = std::min(closest,
                           std::fabs(1.0 - ds.examples[i].label * st.outputs[i]));
      if (closest > 1e-3) break;
      if (tries > 50) {
        out.fail("instance " + std::to_string(inst) + ": no interior point found");
        return out;
      }
    }

    LocalPartials lp;
    block_objective(block, beta, lambda, lp);
    const std::vector<double> g = lp.g;

    for (int dir = 0; dir < 3; ++dir) {
      std::vector<double> d(10);
      double nrm = 0.0;
      for (auto& v : d) {
        v = testing::gauss_draw(rng);
        nrm += v * v;
      }
      nrm = std::sqrt(nrm);
      double gd = 0.0;
      std::vector<double> bp = beta, bm = beta;
      for (std::size_t k = 0; k < 10; ++k) {
        d[k] /= nrm;
        gd += g[k] * d[k];
        bp[k] += h * d[k];
        bm[k] -= h * d[k];
      }
      LocalPartials tmp;
      const double fp = block_objective(block, bp, lambda, tmp);
      const double fm = block_objective(block, bm, lambda, tmp);
      const double fd = (fp - fm) / (2.0 * h);
      worst = std::max(worst, testing::rel_diff(fd, gd));
    }
  }

  const double secs = secs_since(t0);
  if (worst > kGradTol) out.fail("max relative error " + fmt("%.3e", worst));
  if (secs > kGradBudget) out.fail("took " + fmt("%.2f", secs) + "s");
  if (out.pass)
    out.detail = "max rel err " + fmt("%.3e", worst) + ", " + fmt("%.2f", secs) + "s";
  return out;
}

// ---------------------------------------------------------------- criterion 2

Outcome check_hessian_product() {
  Outcome out;
  const auto t0 = Clock::now();
  double worst = 0.0;

  for (int inst = 0; inst < 20; ++inst) {
    const std::uint64_t seed = 300 + static_cast<std::uint64_t>(inst);
    const Dataset ds = testing::planted(30, 5, seed);
    const BasisSet bs = testing::basis_prefix(ds, 6, 1.1);
    const double lambda = 0.4 + 0.05 * inst;

    // the distributed path: per-worker blocks, pinned-order partial sums
    const int p = 3;
    const auto shards = shard_random(ds, p, seed);
    std::vector<KernelBlock> blocks;
    for (int r = 0; r < p; ++r)
      blocks.push_back(build_kernel_block(shards[static_cast<std::size_t>(r)], bs, {lambda, 1.1},
                                          w_range_for(r, p, 6)));

    const testing::DenseInstance di = testing::dense_instance(ds, bs, 1.1);
    testing::Rng64 rng(seed * 5 + 3);

    for (int dir = 0; dir < 3; ++dir) {
      std::vector<double> beta(6), d(6);
      for (auto& v : beta) v = 0.6 * testing::gauss_draw(rng);
      for (auto& v : d) v = testing::gauss_draw(rng);

      std::vector<double> hd(6, 0.0);
      for (int r = 0; r < p; ++r) {
        LocalPartials lp;
        const LossState st =
            local_eval_fused(blocks[static_cast<std::size_t>(r)], beta, Loss::squared_hinge,
                             lambda, lp);
        local_hessian_vec(blocks[static_cast<std::size_t>(r)], st, d, lambda, lp);
        for (std::size_t k = 0; k < 6; ++k) hd[k] += lp.hd[k];
      }

      const auto want = testing::dense_hess_vec(di, beta, d, lambda, true);
      worst = std::max(worst, testing::rel_vec_diff(want, hd));
    }
  }

  const double secs = secs_since(t0);
  if (worst > kHessTol) out.fail("max relative error " + fmt("%.3e", worst));
  if (secs > kHessBudget) out.fail("took " + fmt("%.2f", secs) + "s");
  if (out.pass)
    out.detail = "max rel err " + fmt("%.3e", worst) + ", " + fmt("%.2f", secs) + "s";
  return out;
}

// ------------------------------------------------------- criteria 3 and 10

struct EquivInstance {
  ref::DenseMat c, w;
  std::vector<double> y;
  BasisSet basis;
  Dataset train;
  double lambda = 0.0;
};

std::uint64_t seed_of(int inst) { return 700 + static_cast<std::uint64_t>(inst); }

EquivInstance equiv_instance(int inst) {
  const std::uint64_t seed = 500 + static_cast<std::uint64_t>(inst);
  EquivInstance e;
  e.train = testing::planted(200, 5, seed);
  e.basis = testing::basis_prefix(e.train, 50, 1.3);
  e.c = ref::cross_gram(e.train.examples, e.basis);
  e.w = ref::basis_gram(e.basis);
  e.y = labels_of(e.train);
  e.lambda = 0.5 + 0.1 * inst;
  return e;
}

Outcome check_formulation_equivalence() {
  Outcome out;
  double worst_obj = 0.0;
  std::size_t disagreements = 0;

  tron::TronConfig cfg;
  cfg.eps_rel = 1e-10;

  for (int inst = 0; inst < 10; ++inst) {
    const EquivInstance e = equiv_instance(inst);

    const ref::RefSolution lin =
        ref::solve_linearized(e.c, e.w, e.y, e.lambda, Loss::squared_hinge, 1e-12, cfg);

    ref::DenseObjectiveOracle direct(e.c, e.w, e.y, e.lambda, Loss::squared_hinge);
    const tron::TronResult res = tron::minimize(direct, std::vector<double>(50, 0.0), cfg);

    worst_obj = std::max(worst_obj, testing::rel_diff(lin.objective, res.trace.f_final));

    const Dataset test = testing::planted(100, 5, seed_of(inst));
    const ref::DenseMat ct = ref::cross_gram(test.examples, e.basis);
    const ref::DenseMat at = ref::matmul(ct, lin.transform);
    const auto o_lin = ref::matvec(at, lin.coef);
    const auto o_direct = ref::matvec(ct, res.beta);
    for (std::size_t i = 0; i < 100; ++i)
      if (driver::label_of(o_lin[i]) != driver::label_of(o_direct[i])) ++disagreements;
  }

  if (worst_obj > kEquivObjTol) out.fail("objective gap " + fmt("%.3e", worst_obj));
  if (disagreements > 0)
    out.fail(std::to_string(disagreements) + " of 1000 test signs disagree");
  if (out.pass) out.detail = "max objective gap " + fmt("%.3e", worst_obj) + ", signs 1000/1000";
  return out;
}

Outcome check_tron_contract() {
  Outcome out;

  // counting wrapper around the dense oracle
  struct Counting : tron::Oracle {
    ref::DenseObjectiveOracle* inner;
    std::uint64_t n_fg = 0, n_hd = 0;
    std::size_t dim() const override { return inner->dim(); }
    double eval_fg(std::span<const double> beta, std::span<double> g) override {
      ++n_fg;
      return inner->eval_fg(beta, g);
    }
    void hess_vec(std::span<const double> d, bool adopt, std::span<double> o) override {
      ++n_hd;
      inner->hess_vec(d, adopt, o);
    }
  };

  tron::TronConfig cfg;
  cfg.eps_rel = 1e-6;

  for (int inst = 0; inst < 10; ++inst) {
    const EquivInstance e = equiv_instance(inst);
    ref::DenseObjectiveOracle oracle(e.c, e.w, e.y, e.lambda, Loss::squared_hinge);
    Counting counting;
    counting.inner = &oracle;
    const tron::TronResult res = tron::minimize(counting, std::vector<double>(50, 0.0), cfg);
    const tron::TronTrace& tr = res.trace;

    double last = tr.f0;
    for (const auto& it : tr.iters)
      if (it.accepted) {
        if (!(it.f < last)) out.fail("instance " + std::to_string(inst) + ": accepted f did not decrease");
        last = it.f;
      }
    if (!tr.converged || tr.gnorm_final > cfg.eps_rel * tr.gnorm0)
      out.fail("instance " + std::to_string(inst) + ": gradient-norm target missed");
    if (tr.n_fg != counting.n_fg || tr.n_hd != counting.n_hd)
      out.fail("instance " + std::to_string(inst) + ": trace counters " +
               std::to_string(tr.n_fg) + "/" + std::to_string(tr.n_hd) + " vs oracle " +
               std::to_string(counting.n_fg) + "/" + std::to_string(counting.n_hd));
    if (out.pass && inst == 9)
      out.detail = "10 instances: strict descent, gnorm target, counters exact (last run " +
                   std::to_string(tr.n_fg) + " f/g, " + std::to_string(tr.n_hd) + " Hd rounds)";
  }
  return out;
}

// ---------------------------------------------------------------- criterion 4

Outcome check_nystrom_exactness() {
  Outcome out;
  const Dataset ds = testing::planted(100, 4, 900);
  const double sigma = 1.1, lambda = 0.8;

  const ref::DenseMat k = ref::gram(ds.examples, sigma);
  const BasisSet bs = testing::basis_prefix(ds, 100, sigma);
  const ref::DenseMat c = ref::cross_gram(ds.examples, bs);
  const ref::DenseMat w = ref::basis_gram(bs);
  const ref::DenseMat kt = ref::nystrom_reconstruct(c, ref::pseudo_inverse(w));
  const ref::ApproxError err = ref::approx_error(k, kt);
  if (err.frobenius_rel > kExactFrobTol)
    out.fail("Frobenius error " + fmt("%.3e", err.frobenius_rel));

  tron::TronConfig cfg;
  cfg.eps_rel = 1e-10;
  const std::vector<double> y = labels_of(ds);
  const ref::RefSolution full = ref::solve_full_kernel(k, y, lambda, Loss::squared_hinge, cfg);
  ref::DenseObjectiveOracle approx(c, w, y, lambda, Loss::squared_hinge);
  const tron::TronResult res = tron::minimize(approx, std::vector<double>(100, 0.0), cfg);
  const double gap = testing::rel_diff(full.objective, res.trace.f_final);
  if (gap > kExactObjTol) out.fail("objective gap " + fmt("%.3e", gap));

  if (out.pass)
    out.detail = "Frobenius " + fmt("%.3e", err.frobenius_rel) + ", objective gap " +
                 fmt("%.3e", gap);
  return out;
}

// ---------------------------------------------------------------- criterion 5

Outcome check_serial_distributed_parity() {
  Outcome out;
  const Dataset ds = testing::two_blobs(400, 71);
  const std::string basis_path =
      "/tmp/nytron_acc_basis_" + std::to_string(::getpid());
  basis::save_basis(basis_path, testing::basis_prefix(ds, 12, 1.5));

  driver::JobConfig cfg;
  cfg.params = {1.0, 1.5};
  cfg.m = 12;
  cfg.seed = 71;
  cfg.basis_file = basis_path;
  cfg.tron.eps_rel = 1e-8;

  double serial_obj = 0.0;
  std::atomic<std::uint64_t> mismatched_rounds{0};
  std::uint64_t observed_rounds = 0;

  for (int p : {1, 2, 4, 8}) {
    const auto shards = shard_random(ds, p, cfg.seed);
    comm::LocalCluster cluster(comm::TreeTopology::regular(p, 2));
    cluster.set_reduce_observer([&](std::uint64_t, const std::vector<std::vector<double>>& ins,
                                    const std::vector<double>& result) {
      // serial pinned-order sum over the same per-rank inputs
      std::vector<double> want(result.size(), 0.0);
      for (const auto& in : ins)
        for (std::size_t i = 0; i < in.size(); ++i) want[i] += in[i];
      if (want != result) mismatched_rounds.fetch_add(1);
    });

    std::vector<driver::TrainReport> reports(static_cast<std::size_t>(p));
    std::vector<std::exception_ptr> errs(static_cast<std::size_t>(p));
    std::vector<std::thread> threads;
    for (int r = 0; r < p; ++r)
      threads.emplace_back([&, r] {
        try {
          driver::run_job(cluster.comm(r), shards[static_cast<std::size_t>(r)], ds.dim, cfg,
                          reports[static_cast<std::size_t>(r)]);
        } catch (...) {
          errs[static_cast<std::size_t>(r)] = std::current_exception();
          cluster.abort(r, "acceptance worker failed");
        }
      });
    for (auto& t : threads) t.join();
    for (auto& e : errs)
      if (e) std::rethrow_exception(e);

    observed_rounds += reports[0].collectives.reduces;
    const double obj = reports[0].final_objective;
    if (p == 1) {
      serial_obj = obj;
    } else {
      const double gap = testing::rel_diff(obj, serial_obj);
      if (gap > kParityObjTol)
        out.fail("p=" + std::to_string(p) + " objective gap " + fmt("%.3e", gap));
    }
  }
  std::remove(basis_path.c_str());

  if (mismatched_rounds.load() > 0)
    out.fail(std::to_string(mismatched_rounds.load()) + " reduce rounds not bitwise-pinned");
  if (out.pass)
    out.detail = "p in {1,2,4,8} agree at 1e-8; " + std::to_string(observed_rounds) +
                 " reduce rounds bitwise equal to pinned serial sums";
  return out;
}

// ---------------------------------------------------------------- criterion 6

Outcome check_warm_start() {
  Outcome out;
  const Dataset ds = testing::planted(150, 4, 41);

  driver::JobConfig cfg;
  cfg.params = {0.5, 1.4};
  cfg.m = 32;
  cfg.stages = {8, 16, 32};
  cfg.seed = 17;
  cfg.tron.eps_rel = 1e-8;
  const driver::TrainResult staged = driver::train_dataset(ds, nullptr, cfg, 1);

  for (std::size_t s = 1; s < staged.report.stages.size(); ++s) {
    const double gap = testing::rel_diff(staged.report.stages[s].f_start,
                                         staged.report.stages[s - 1].trace.f_final);
    if (gap > kWarmStartTol)
      out.fail("stage " + std::to_string(s + 1) + " warm-start gap " + fmt("%.3e", gap));
  }

  driver::JobConfig cold = cfg;
  cold.stages.clear();
  const driver::TrainResult direct = driver::train_dataset(ds, nullptr, cold, 1);
  const double gap =
      testing::rel_diff(staged.report.final_objective, direct.report.final_objective);
  if (gap > kStagedVsColdTol) out.fail("staged vs cold objective gap " + fmt("%.3e", gap));

  if (out.pass)
    out.detail = "warm starts exact to 1e-12, staged vs cold gap " + fmt("%.3e", gap);
  return out;
}

// ---------------------------------------------------------------- criterion 7

Outcome check_accuracy_trend() {
  Outcome out;
  const auto t0 = Clock::now();
  const std::vector<std::size_t> ms = {4, 16, 64, 256};
  const double lambda = 0.5, sigma = 0.8;
  const int blobs = 16;

  std::vector<double> mean_acc(ms.size(), 0.0);
  double mean_oracle = 0.0;

  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Dataset train = testing::ring_blobs(5000, blobs, seed, 0.35);
    const Dataset test = testing::ring_blobs(2000, blobs, seed + 500, 0.35);

    for (std::size_t mi = 0; mi < ms.size(); ++mi) {
      driver::JobConfig cfg;
      cfg.params = {lambda, sigma};
      cfg.m = ms[mi];
      cfg.seed = seed;
      const driver::TrainResult res = driver::train_dataset(train, &test, cfg, 1);
      mean_acc[mi] += *res.report.test_accuracy / 5.0;
    }

    // full-kernel machine on a 1000-point subsample
    Dataset sub;
    sub.dim = train.dim;
    sub.examples.assign(train.examples.begin(), train.examples.begin() + 1000);
    const ref::DenseMat k = ref::gram(sub.examples, sigma);
    const ref::RefSolution sol = ref::solve_full_kernel(k, labels_of(sub), lambda);

    BasisSet all;
    all.sigma = sigma;
    for (const auto& ex : sub.examples) all.append(ex.x);
    const auto o = ref::matvec(ref::cross_gram(test.examples, all), sol.coef);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < o.size(); ++i)
      if (driver::label_of(o[i]) == test.examples[i].label) ++correct;
    mean_oracle += static_cast<double>(correct) / static_cast<double>(o.size()) / 5.0;
  }

  for (std::size_t mi = 1; mi < ms.size(); ++mi)
    if (mean_acc[mi] < mean_acc[mi - 1] - kTrendSlack)
      out.fail("mean accuracy dropped " + fmt("%.4f", mean_acc[mi - 1]) + " -> " +
               fmt("%.4f", mean_acc[mi]) + " at m=" + std::to_string(ms[mi]));
  const double gap = std::fabs(mean_acc.back() - mean_oracle);
  if (gap > kOracleGap)
    out.fail("m=256 mean " + fmt("%.4f", mean_acc.back()) + " vs full-kernel " +
             fmt("%.4f", mean_oracle));
  const double secs = secs_since(t0);
  if (secs > kTrendBudget) out.fail("took " + fmt("%.1f", secs) + "s");

  if (out.pass) {
    out.detail = "means";
    for (std::size_t mi = 0; mi < ms.size(); ++mi)
      out.detail += " m=" + std::to_string(ms[mi]) + ":" + fmt("%.4f", mean_acc[mi]);
    out.detail += " oracle:" + fmt("%.4f", mean_oracle) + ", " + fmt("%.1f", secs) + "s";
  }
  return out;
}

// ---------------------------------------------------------------- criterion 8

Outcome check_kmeans_vs_random() {
  Outcome out;
  const double lambda = 0.5, sigma = 1.0;

  auto mean_accuracy = [&](std::size_t m, BasisSource source) {
    double acc = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const Dataset train = testing::ring_blobs(5000, 10, seed + 40, 0.35);
      const Dataset test = testing::ring_blobs(2000, 10, seed + 540, 0.35);
      driver::JobConfig cfg;
      cfg.params = {lambda, sigma};
      cfg.m = m;
      cfg.seed = seed;
      cfg.source = source;
      cfg.kmeans.iters = 5;
      const driver::TrainResult res = driver::train_dataset(train, &test, cfg, 1);
      acc += *res.report.test_accuracy / 5.0;
    }
    return acc;
  };

  const double rand_small = mean_accuracy(10, BasisSource::random);
  const double km_small = mean_accuracy(10, BasisSource::kmeans);
  const double rand_large = mean_accuracy(500, BasisSource::random);
  const double km_large = mean_accuracy(500, BasisSource::kmeans);

  if (km_small < rand_small)
    out.fail("m=10: kmeans " + fmt("%.4f", km_small) + " < random " + fmt("%.4f", rand_small));
  if (std::fabs(km_large - rand_large) >= kClusterGap)
    out.fail("m=500 gap " + fmt("%.4f", std::fabs(km_large - rand_large)));

  if (out.pass)
    out.detail = "m=10 kmeans " + fmt("%.4f", km_small) + " vs random " + fmt("%.4f", rand_small) +
                 "; m=500 gap " + fmt("%.4f", std::fabs(km_large - rand_large));
  return out;
}

// ---------------------------------------------------------------- criterion 9

Outcome check_cost_scaling() {
  Outcome out;

  // total training time against basis size; dense mid-dimensional features
  // (like the real datasets this machinery targets), pinned iteration caps and
  // a forced-deep CG keep the two runs on the same round schedule so the
  // comparison isolates the per-round and per-entry cost
  const Dataset ds = testing::planted(20000, 80, 91, 18.0);
  auto train_secs = [&](std::size_t m, std::uint64_t& rounds) {
    driver::JobConfig cfg;
    cfg.params = {0.02, 7.0};
    cfg.m = m;
    cfg.seed = 7;
    cfg.tron.eps_rel = 1e-14;  // out of reach: the iteration caps govern
    cfg.tron.max_iter = 6;
    cfg.tron.cg_max = 4;
    cfg.tron.cg_tol = 1e-10;  // inner loop always runs its full budget
    const driver::TrainResult res = driver::train_dataset(ds, nullptr, cfg, 1);
    rounds = res.report.stages[0].trace.n_fg + res.report.stages[0].trace.n_hd;
    double total = res.report.kmeans_seconds;
    for (double s : res.report.step_seconds) total += s;
    return total;
  };

  std::uint64_t rounds_1k = 0, rounds_2k = 0;
  train_secs(1000, rounds_1k);  // warmup discarded
  const double t1k = std::min(train_secs(1000, rounds_1k), train_secs(1000, rounds_1k));
  const double t2k = std::min(train_secs(2000, rounds_2k), train_secs(2000, rounds_2k));
  const double ratio = t2k / t1k;
  if (ratio > kTimeRatioCap)
    out.fail("m=2000 training time " + fmt("%.2f", t2k) + "s (" + std::to_string(rounds_2k) +
             " rounds) is " + fmt("%.2f", ratio) + "x m=1000's " + fmt("%.2f", t1k) + "s (" +
             std::to_string(rounds_1k) + " rounds)");

  // the dense pipeline spends a growing share of its time building the
  // transformed design matrix as m grows; run the two phases of the pipeline
  // with a clock between them so the fraction comes from a single run
  const Dataset small = testing::planted(2000, 5, 93);
  const std::vector<double> y = labels_of(small);
  tron::TronConfig cfg;
  cfg.eps_rel = 1e-10;
  double last_fraction = -1.0;
  std::string fractions;
  bool monotone = true;
  for (std::size_t m : {100u, 400u, 800u}) {
    const BasisSet bs = testing::basis_prefix(small, m, 1.3);
    const ref::DenseMat c = ref::cross_gram(small.examples, bs);
    const ref::DenseMat w = ref::basis_gram(bs);

    const auto build0 = Clock::now();
    const ref::EigenSym e = ref::eigen_sym(w);
    std::size_t kept = 0;
    const double cutoff = 1e-12 * e.eig[0];
    while (kept < m && e.eig[kept] > cutoff && e.eig[kept] > 0.0) ++kept;
    ref::DenseMat t(m, kept);
    for (std::size_t tc = 0; tc < kept; ++tc) {
      const double inv_sqrt = 1.0 / std::sqrt(e.eig[tc]);
      for (std::size_t j = 0; j < m; ++j) t.at(j, tc) = e.v.at(j, tc) * inv_sqrt;
    }
    const ref::DenseMat a = ref::matmul(c, t);
    const double t_build = secs_since(build0);
    if (a.rows != 2000) out.fail("design matrix shape off");

    const auto solve0 = Clock::now();
    ref::DenseObjectiveOracle oracle(a, ref::DenseMat::identity(kept), y, 0.5,
                                     Loss::squared_hinge);
    tron::minimize(oracle, std::vector<double>(kept, 0.0), cfg);
    const double t_solve = secs_since(solve0);

    const double fraction = t_build / (t_build + t_solve);
    fractions += " m=" + std::to_string(m) + ":" + fmt("%.3f", fraction);
    if (fraction <= last_fraction) monotone = false;
    last_fraction = fraction;
  }
  if (!monotone) out.fail("construction fraction not strictly increasing:" + fractions);

  if (out.pass)
    out.detail = "train " + fmt("%.2f", t1k) + "s@m=1000 (" + std::to_string(rounds_1k) +
                 " rounds) -> " + fmt("%.2f", t2k) + "s@m=2000 (" + std::to_string(rounds_2k) +
                 " rounds), ratio " + fmt("%.2f", ratio) + "; fractions" + fractions;
  return out;
}

// --------------------------------------------------------------- criterion 11

Outcome check_cost_model() {
  Outcome out;
  testing::Rng64 rng(111);
  auto uniform = [&](double lo, double hi) {
    const double u = static_cast<double>(rng.next() >> 11) * 0x1.0p-53;
    return lo + u * (hi - lo);
  };

  for (int t = 0; t < 10; ++t) {
    comm::CommCostModel model;
    model.latency_per_call = uniform(1e-6, 1e-2);
    model.per_byte = uniform(1e-10, 1e-6);
    model.bytes_per_call = std::floor(uniform(8.0, 1e7));
    const std::uint64_t n_iters = 1 + (rng.next() % 5000);

    const double got = comm::estimate_comm_cost(n_iters, 5, model);
    const double want = 5.0 * static_cast<double>(n_iters) *
                        (model.latency_per_call + model.per_byte * model.bytes_per_call);
    if (got != want) {
      out.fail("draw " + std::to_string(t) + ": " + fmt("%.17g", got) + " != " +
               fmt("%.17g", want));
      return out;
    }
  }
  if (out.pass) out.detail = "10 random draws bitwise equal to 5N(C+DB)";
  return out;
}

}  // namespace

int main() {
  struct Entry {
    int id;
    const char* name;
    Outcome (*fn)();
  };
  const Entry entries[] = {
      {1, "gradient vs central differences", check_gradient},
      {2, "Hessian product vs assembled matrix", check_hessian_product},
      {3, "formulation equivalence", check_formulation_equivalence},
      {4, "exact recovery with a full basis", check_nystrom_exactness},
      {5, "serial vs distributed parity", check_serial_distributed_parity},
      {6, "staged warm starts", check_warm_start},
      {7, "accuracy vs basis size trend", check_accuracy_trend},
      {8, "clustered vs random basis", check_kmeans_vs_random},
      {9, "cost scaling in the basis size", check_cost_scaling},
      {10, "trust-region trace contract", check_tron_contract},
      {11, "communication cost model", check_cost_model},
  };

  int failures = 0;
  for (const auto& e : entries) {
    Outcome res;
    try {
      res = e.fn();
    } catch (const std::exception& ex) {
      res.pass = false;
      res.detail = std::string("exception: ") + ex.what();
    }
    if (!res.pass) ++failures;
    std::printf("criterion %2d [%s]: %s%s%s\n", e.id, e.name, res.pass ? "PASS" : "FAIL",
                res.detail.empty() ? "" : " - ", res.detail.c_str());
    std::fflush(stdout);
  }
  if (failures > 0) std::printf("%d criterion(s) failed\n", failures);
  return failures;
}
