#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

namespace nytron::tron {

struct TronConfig {
  double eps_rel = 1e-4;  // stop when ||g|| <= eps_rel * ||g(beta0)||
  int max_iter = 1000;    // cap on accepted outer iterations
  double cg_tol = 0.1;    // inner solve: ||r|| <= cg_tol * ||g||
  int cg_max = -1;        // cap on CG steps; -1 means the problem dimension
  double eta0 = 1e-4, eta1 = 0.25, eta2 = 0.75;
  double sigma1 = 0.25, sigma2 = 0.5, sigma3 = 4.0;
  double delta0 = 0.0;  // initial radius; 0 means ||g(beta0)||

  void validate() const;
};

struct TronIter {
  int iter = 0;
  double f = 0.0;
  double gnorm = 0.0;
  double delta = 0.0;
  int cg_steps = 0;
  bool accepted = false;
};

struct TronTrace {
  std::vector<TronIter> iters;
  std::uint64_t n_fg = 0;  // fused function+gradient evaluations
  std::uint64_t n_hd = 0;  // Hessian-vector products
  int accepted = 0;
  int rejected = 0;
  double f0 = 0.0;  // objective at the starting point
  double f_final = 0.0;
  double gnorm0 = 0.0;
  double gnorm_final = 0.0;
  bool converged = false;
};

// The objective seen by the minimizer. eval_fg computes f and g together (one
// distributed round in the cluster implementation). hess_vec multiplies by the
// Gauss-Newton matrix whose curvature mask was frozen at the last *adopted*
// evaluation point; adopt_last_eval promotes the most recent eval_fg point,
// which the minimizer sets on the first product after an accepted step.
class Oracle {
 public:
  virtual ~Oracle() = default;
  virtual std::size_t dim() const = 0;
  virtual double eval_fg(std::span<const double> beta, std::span<double> g) = 0;
  virtual void hess_vec(std::span<const double> d, bool adopt_last_eval,
                        std::span<double> out) = 0;
};

enum class CgStatus : std::uint8_t { converged, boundary, neg_curvature, max_iter };

struct CgResult {
  std::vector<double> step;
  std::vector<double> residual;  // r = -g - H s at exit
  int steps = 0;
  CgStatus status = CgStatus::converged;
};

using HvFn = std::function<void(std::span<const double>, std::span<double>)>;

CgResult cg_steihaug(const HvFn& hv, std::span<const double> g, double delta, double cg_tol,
                     int cg_max);

struct TronResult {
  std::vector<double> beta;
  TronTrace trace;
};

TronResult minimize(Oracle& oracle, std::vector<double> beta0, const TronConfig& cfg);

void write_trace_csv(const TronTrace& trace, std::ostream& out);

}  // namespace nytron::tron
