#include <omp.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nytron/basis.hpp"
#include "nytron/data.hpp"
#include "nytron/driver.hpp"
#include "nytron/error.hpp"
#include "nytron/reference.hpp"
#include "nytron/tcp.hpp"
#include "nytron/tron.hpp"

namespace {

using namespace nytron;

std::vector<std::size_t> parse_size_list(const std::string& s, const char* what) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      out.push_back(static_cast<std::size_t>(std::stoull(tok)));
    } catch (const std::exception&) {
      throw ConfigError(std::string(what) + ": bad entry '" + tok + "'");
    }
  }
  if (out.empty()) throw ConfigError(std::string(what) + ": empty list");
  return out;
}

struct TrainArgs {
  std::string data, test, report_path, model_path, trace_path;
  std::string basis = "random";
  std::string basis_file, save_basis_path, kernel_cache, stages, preset, hosts_path;
  std::string transport = "local";
  std::string loss = "squared_hinge";
  double lambda = 1.0, sigma = 1.0;
  std::size_t m = 100;
  int p = 1, fanout = 2, threads = 0, kmeans_iters = 3, rank = 0;
  std::uint64_t seed = 1;
  double eps_rel = 1e-4, cg_tol = 0.1;
  int max_iter = 1000, cg_max = -1;
};

void print_summary(const driver::TrainReport& r) {
  std::printf("n=%zu d=%d m=%zu p=%d basis=%s\n", r.n_train, r.dim, r.m, r.p,
              r.basis_source.c_str());
  std::printf("step seconds: data=%.3f basis=%.3f kernel=%.3f optimize=%.3f\n",
              r.step_seconds[0], r.step_seconds[1], r.step_seconds[2], r.step_seconds[3]);
  if (r.kmeans_seconds > 0.0) std::printf("kmeans seconds: %.3f\n", r.kmeans_seconds);
  for (const auto& s : r.stages)
    std::printf("stage m=%zu: f %.10g -> %.10g, %d accepted / %d rejected, %s\n", s.m, s.f_start,
                s.trace.f_final, s.trace.accepted, s.trace.rejected,
                s.trace.converged ? "converged" : "iteration cap");
  std::printf("final objective: %.10g\n", r.final_objective);
  if (r.test_accuracy) std::printf("test accuracy: %.4f\n", *r.test_accuracy);
  for (const auto& w : r.warnings) std::printf("warning: %s\n", w.c_str());
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
}

int cmd_train(const TrainArgs& a) {
  driver::JobConfig cfg;
  cfg.params.lambda = a.lambda;
  cfg.params.sigma = a.sigma;
  cfg.m = a.m;
  cfg.loss = loss_from(a.loss);
  cfg.seed = a.seed;
  cfg.tron.eps_rel = a.eps_rel;
  cfg.tron.max_iter = a.max_iter;
  cfg.tron.cg_tol = a.cg_tol;
  cfg.tron.cg_max = a.cg_max;
  cfg.kmeans.iters = a.kmeans_iters;
  cfg.basis_file = a.basis_file;
  cfg.kernel_cache = a.kernel_cache;
  if (!a.stages.empty()) cfg.stages = parse_size_list(a.stages, "--stages");
  if (a.threads > 0) omp_set_num_threads(a.threads);

  Dataset train = parse_dataset(a.data);
  Dataset test;
  if (!a.test.empty()) test = parse_dataset(a.test);

  if (a.basis == "auto")
    cfg.source = basis::choose_source(cfg.m, train.dim);
  else
    cfg.source = basis_source_from(a.basis);

  driver::TrainResult res;
  if (a.transport == "local") {
    res = driver::train_dataset(train, a.test.empty() ? nullptr : &test, cfg, a.p, a.fanout);
  } else if (a.transport == "tcp") {
    if (a.hosts_path.empty()) throw ConfigError("--transport tcp needs --hosts");
    const auto hosts = comm::parse_hosts_file(a.hosts_path);
    res = driver::train_tcp_rank(train, a.test.empty() ? nullptr : &test, cfg, hosts, 0,
                                 a.fanout);
  } else {
    throw ConfigError("unknown transport: " + a.transport);
  }

  print_summary(res.report);
  if (!a.report_path.empty()) write_text(a.report_path, driver::report_json(res.report));
  if (!a.model_path.empty()) save_model(a.model_path, res.model);
  if (!a.save_basis_path.empty()) basis::save_basis(a.save_basis_path, res.model.basis);
  if (!a.trace_path.empty()) {
    std::ofstream out(a.trace_path, std::ios::binary);
    if (!out) throw IoError("cannot write " + a.trace_path);
    tron::write_trace_csv(res.report.stages.back().trace, out);
  }
  return 0;
}

int cmd_worker(const std::string& hosts_path, int rank, const std::string& data,
               const std::string& test) {
  const auto hosts = comm::parse_hosts_file(hosts_path);
  if (rank <= 0 || rank >= static_cast<int>(hosts.size()))
    throw ConfigError("worker rank must be in [1, hosts)");
  Dataset train = parse_dataset(data);
  Dataset te;
  if (!test.empty()) te = parse_dataset(test);
  driver::train_tcp_rank(train, test.empty() ? nullptr : &te, driver::JobConfig{}, hosts, rank);
  return 0;
}

int cmd_predict(const std::string& model_path, const std::string& data, const std::string& out) {
  const ModelState model = load_model(model_path);
  const Dataset ds = parse_dataset(data);
  const auto o = driver::decision_values(model, ds.examples);
  std::ofstream f(out, std::ios::binary);
  if (!f) throw IoError("cannot write " + out);
  for (double v : o) f << (driver::label_of(v) > 0 ? "+1" : "-1") << '\n';
  return 0;
}

int cmd_evaluate(const std::string& model_path, const std::string& data) {
  const ModelState model = load_model(model_path);
  const Dataset ds = parse_dataset(data);
  std::printf("accuracy: %.6f on %zu examples\n", driver::accuracy(model, ds.examples),
              ds.examples.size());
  return 0;
}

int cmd_approx_error(const std::string& data, double sigma, const std::string& m_list,
                     std::uint64_t seed, std::size_t limit, const std::string& out_path) {
  Dataset ds = parse_dataset(data);
  if (ds.examples.size() > limit) ds.examples.resize(limit);
  const auto ms = parse_size_list(m_list, "-m");

  const ref::DenseMat k = ref::gram(ds.examples, sigma);
  std::vector<Shard> pool(1);
  pool[0].worker_id = 0;
  pool[0].examples = ds.examples;
  pool[0].global_ids.resize(ds.examples.size());
  for (std::size_t i = 0; i < ds.examples.size(); ++i)
    pool[0].global_ids[i] = static_cast<std::uint32_t>(i);

  std::ostringstream csv;
  csv << "m,frobenius_rel,spectral_rel\n";
  for (std::size_t m : ms) {
    const BasisSet bs = basis::select_random(pool, m, sigma, seed);
    const ref::DenseMat c = ref::cross_gram(ds.examples, bs);
    const ref::DenseMat w = ref::basis_gram(bs);
    const ref::DenseMat kt = ref::nystrom_reconstruct(c, ref::pseudo_inverse(w));
    const auto err = ref::approx_error(k, kt);
    char row[96];
    std::snprintf(row, sizeof(row), "%zu,%.6e,%.6e\n", m, err.frobenius_rel, err.spectral_rel);
    csv << row;
  }
  if (out_path.empty())
    std::fputs(csv.str().c_str(), stdout);
  else
    write_text(out_path, csv.str());
  return 0;
}

int cmd_bench(const std::string& data, const std::string& test, const std::string& sweep,
              double lambda, double sigma, int p, std::uint64_t seed,
              const std::string& out_path) {
  std::string sizes = sweep;
  if (sizes.rfind("m=", 0) == 0) sizes = sizes.substr(2);
  const auto ms = parse_size_list(sizes, "--sweep");
  Dataset train = parse_dataset(data);
  Dataset te;
  if (!test.empty()) te = parse_dataset(test);

  std::ostringstream csv;
  csv << "m,step1_data,step2_basis,step3_kernel,step4_optimize,total,objective,accuracy,n_fg,"
         "n_hd\n";
  for (std::size_t m : ms) {
    driver::JobConfig cfg;
    cfg.params.lambda = lambda;
    cfg.params.sigma = sigma;
    cfg.m = m;
    cfg.seed = seed;
    const auto res =
        driver::train_dataset(train, test.empty() ? nullptr : &te, cfg, p);
    const auto& r = res.report;
    const double total =
        r.step_seconds[0] + r.step_seconds[1] + r.step_seconds[2] + r.step_seconds[3];
    char row[256];
    std::snprintf(row, sizeof(row), "%zu,%.4f,%.4f,%.4f,%.4f,%.4f,%.10g,%s,%llu,%llu\n", m,
                  r.step_seconds[0], r.step_seconds[1], r.step_seconds[2], r.step_seconds[3],
                  total, r.final_objective,
                  r.test_accuracy ? std::to_string(*r.test_accuracy).c_str() : "",
                  static_cast<unsigned long long>(r.stages.back().trace.n_fg),
                  static_cast<unsigned long long>(r.stages.back().trace.n_hd));
    csv << row;
    std::fputs(row, stderr);
  }
  if (out_path.empty())
    std::fputs(csv.str().c_str(), stdout);
  else
    write_text(out_path, csv.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nystrom kernel machines trained by a distributed trust-region solver"};
  app.require_subcommand(1);

  TrainArgs t;
  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--data", t.data, "training file (libsvm text, optionally gzip)")
      ->required();
  train->add_option("--test", t.test, "held-out evaluation file");
  train->add_option("--lambda", t.lambda, "regularization weight");
  train->add_option("--sigma", t.sigma, "gaussian kernel width");
  train->add_option("-m,--basis-size", t.m, "number of basis points");
  train->add_option("--basis", t.basis, "basis selection: random, kmeans or auto");
  train->add_option("--basis-file", t.basis_file, "load the basis from a file instead");
  train->add_option("--save-basis", t.save_basis_path, "write the selected basis to a file");
  train->add_option("--kmeans-iters", t.kmeans_iters, "clustering iterations");
  train->add_option("-p,--workers", t.p, "worker count");
  train->add_option("--transport", t.transport, "local or tcp");
  train->add_option("--hosts", t.hosts_path, "hosts file for tcp (host:port per rank)");
  train->add_option("--fanout", t.fanout, "reduction tree fanout");
  train->add_option("--seed", t.seed, "random seed");
  train->add_option("--stages", t.stages, "staged basis schedule, e.g. 100,200,400");
  train->add_option("--loss", t.loss, "squared_hinge or squared_error");
  train->add_option("--preset", t.preset, "hyperparameter preset (vehicle, covtype, ccat, mnist8m)");
  train->add_option("--eps", t.eps_rel, "relative gradient-norm stop");
  train->add_option("--max-iter", t.max_iter, "outer iteration cap");
  train->add_option("--cg-tol", t.cg_tol, "inner CG tolerance");
  train->add_option("--cg-max", t.cg_max, "inner CG step cap (-1: dimension)");
  train->add_option("--threads", t.threads, "OpenMP threads (0: library default)");
  train->add_option("--kernel-cache", t.kernel_cache, "kernel block cache path prefix");
  train->add_option("--report", t.report_path, "write the JSON run report here");
  train->add_option("--model", t.model_path, "write the trained model here");
  train->add_option("--trace", t.trace_path, "write the optimizer trace CSV here");

  std::string w_hosts, w_data, w_test;
  int w_rank = 0;
  auto* worker = app.add_subcommand("worker", "Serve one rank of a tcp training job");
  worker->add_option("--hosts", w_hosts, "hosts file (host:port per rank)")->required();
  worker->add_option("--rank", w_rank, "this worker's rank (1..p-1)")->required();
  worker->add_option("--data", w_data, "training file")->required();
  worker->add_option("--test", w_test, "held-out evaluation file");

  std::string p_model, p_data, p_out;
  auto* predict = app.add_subcommand("predict", "Label a dataset with a trained model");
  predict->add_option("--model", p_model, "model file")->required();
  predict->add_option("--data", p_data, "input examples")->required();
  predict->add_option("--out", p_out, "output label file")->required();

  std::string e_model, e_data;
  auto* evaluate = app.add_subcommand("evaluate", "Accuracy of a model on labeled data");
  evaluate->add_option("--model", e_model, "model file")->required();
  evaluate->add_option("--data", e_data, "labeled examples")->required();

  std::string a_data, a_mlist, a_out;
  double a_sigma = 1.0;
  std::uint64_t a_seed = 1;
  std::size_t a_limit = 2000;
  auto* approx = app.add_subcommand("approx-error",
                                    "Low-rank reconstruction error of the kernel matrix");
  approx->add_option("--data", a_data, "dataset")->required();
  approx->add_option("--sigma", a_sigma, "gaussian kernel width");
  approx->add_option("-m,--basis-sizes", a_mlist, "comma-separated basis sizes")->required();
  approx->add_option("--seed", a_seed, "random seed");
  approx->add_option("--limit", a_limit, "cap on rows (dense n x n work)");
  approx->add_option("--out", a_out, "CSV output path (default stdout)");

  std::string b_data, b_test, b_sweep, b_out;
  double b_lambda = 1.0, b_sigma = 1.0;
  int b_p = 1;
  std::uint64_t b_seed = 1;
  auto* bench = app.add_subcommand("bench", "Step-time sweep over basis sizes (CSV)");
  bench->add_option("--data", b_data, "training file")->required();
  bench->add_option("--test", b_test, "held-out evaluation file");
  bench->add_option("--sweep", b_sweep, "basis sizes, e.g. m=200,400,800")->required();
  bench->add_option("--lambda", b_lambda, "regularization weight");
  bench->add_option("--sigma", b_sigma, "gaussian kernel width");
  bench->add_option("-p,--workers", b_p, "worker count");
  bench->add_option("--seed", b_seed, "random seed");
  bench->add_option("--out", b_out, "CSV output path (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      if (!t.preset.empty()) {
        const auto* pre = driver::find_preset(t.preset);
        if (!pre) throw ConfigError("unknown preset: " + t.preset);
        if (train->count("--lambda") == 0) t.lambda = pre->lambda;
        if (train->count("--sigma") == 0) t.sigma = pre->sigma;
      }
      return cmd_train(t);
    }
    if (*worker) return cmd_worker(w_hosts, w_rank, w_data, w_test);
    if (*predict) return cmd_predict(p_model, p_data, p_out);
    if (*evaluate) return cmd_evaluate(e_model, e_data);
    if (*approx) return cmd_approx_error(a_data, a_sigma, a_mlist, a_seed, a_limit, a_out);
    if (*bench) return cmd_bench(b_data, b_test, b_sweep, b_lambda, b_sigma, b_p, b_seed, b_out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
