#include "nytron/tron.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include "nytron/error.hpp"

namespace nytron::tron {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double nrm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

// Positive root of ||s + tau d|| = delta.
double boundary_tau(std::span<const double> s, std::span<const double> d, double delta) {
  const double std_ = dot(s, d);
  const double sts = dot(s, s);
  const double dtd = dot(d, d);
  const double dsq = delta * delta;
  const double rad = std::sqrt(std_ * std_ + dtd * (dsq - sts));
  if (std_ >= 0.0) return (dsq - sts) / (std_ + rad);
  return (rad - std_) / dtd;
}

}  // namespace

void TronConfig::validate() const {
  if (!(eps_rel > 0.0)) throw ConfigError("tron: eps_rel must be positive");
  if (max_iter < 1) throw ConfigError("tron: max_iter must be >= 1");
  if (!(cg_tol > 0.0 && cg_tol < 1.0)) throw ConfigError("tron: cg_tol must be in (0,1)");
  if (cg_max == 0 || cg_max < -1) throw ConfigError("tron: cg_max must be positive or -1");
  if (!(0.0 < eta0 && eta0 <= eta1 && eta1 < eta2 && eta2 < 1.0))
    throw ConfigError("tron: need 0 < eta0 <= eta1 < eta2 < 1");
  if (!(0.0 < sigma1 && sigma1 < sigma2 && sigma2 < 1.0 && 1.0 < sigma3))
    throw ConfigError("tron: need 0 < sigma1 < sigma2 < 1 < sigma3");
  if (delta0 < 0.0) throw ConfigError("tron: delta0 must be >= 0");
}

CgResult cg_steihaug(const HvFn& hv, std::span<const double> g, double delta, double cg_tol,
                     int cg_max) {
  const std::size_t n = g.size();
  CgResult res;
  res.step.assign(n, 0.0);
  res.residual.resize(n);
  for (std::size_t i = 0; i < n; ++i) res.residual[i] = -g[i];

  std::span<double> s(res.step);
  std::span<double> r(res.residual);
  double rtr = dot(r, r);
  const double gnorm = std::sqrt(rtr);
  if (gnorm == 0.0) {
    res.status = CgStatus::converged;
    return res;
  }
  const double tol = cg_tol * gnorm;
  std::vector<double> d(res.residual);
  std::vector<double> hd(n);

  while (res.steps < cg_max) {
    hv(d, hd);
    ++res.steps;
    const double dhd = dot(d, hd);
    if (dhd <= 0.0) {
      const double tau = boundary_tau(s, d, delta);
      axpy(tau, d, s);
      axpy(-tau, hd, r);
      res.status = CgStatus::neg_curvature;
      return res;
    }
    const double alpha = rtr / dhd;
    axpy(alpha, d, s);
    if (nrm2(s) > delta) {
      axpy(-alpha, d, s);
      const double tau = boundary_tau(s, d, delta);
      axpy(tau, d, s);
      axpy(-tau, hd, r);
      res.status = CgStatus::boundary;
      return res;
    }
    axpy(-alpha, hd, r);
    const double rtr_new = dot(r, r);
    if (std::sqrt(rtr_new) <= tol) {
      res.status = CgStatus::converged;
      return res;
    }
    const double beta = rtr_new / rtr;
    for (std::size_t i = 0; i < n; ++i) d[i] = r[i] + beta * d[i];
    rtr = rtr_new;
  }
  res.status = CgStatus::max_iter;
  return res;
}

TronResult minimize(Oracle& oracle, std::vector<double> beta0, const TronConfig& cfg) {
  cfg.validate();
  const std::size_t n = oracle.dim();
  if (beta0.size() != n) throw ContractError("tron: beta0 length mismatch");
  const int cg_max = cfg.cg_max < 0 ? static_cast<int>(n) : cfg.cg_max;

  TronResult out;
  out.beta = std::move(beta0);
  TronTrace& trace = out.trace;
  std::vector<double> g(n), g_new(n), beta_new(n);

  double f = oracle.eval_fg(out.beta, g);
  ++trace.n_fg;
  if (!std::isfinite(f)) throw NumericalError("tron: objective not finite at start");
  double gnorm = nrm2(g);
  trace.f0 = f;
  trace.gnorm0 = gnorm;
  const double stop = cfg.eps_rel * gnorm;
  double delta = cfg.delta0 > 0.0 ? cfg.delta0 : gnorm;

  // adopt_pending: the last eval_fg point becomes the Hessian mask point on
  // the next CG round (true after init and after every accepted step).
  bool adopt_pending = true;
  bool before_first_accept = true;
  int trial = 0;
  int iter = 1;

  while (iter <= cfg.max_iter && gnorm > stop) {
    bool adopt = adopt_pending;
    adopt_pending = false;
    auto hv = [&](std::span<const double> d, std::span<double> hd) {
      oracle.hess_vec(d, adopt, hd);
      adopt = false;
      ++trace.n_hd;
    };
    CgResult cg = cg_steihaug(hv, g, delta, cfg.cg_tol, cg_max);

    for (std::size_t i = 0; i < n; ++i) beta_new[i] = out.beta[i] + cg.step[i];
    const double gs = dot(g, cg.step);
    const double prered = -0.5 * (gs - dot(cg.step, cg.residual));
    const double f_new = oracle.eval_fg(beta_new, g_new);
    ++trace.n_fg;
    if (!std::isfinite(f_new)) throw NumericalError("tron: objective not finite");
    const double actred = f - f_new;
    const double snorm = nrm2(cg.step);
    if (before_first_accept) delta = std::min(delta, snorm);

    // Step-length update on the quadratic fit through f, f_new and gs.
    double alpha;
    if (f_new - f - gs <= 0)
      alpha = cfg.sigma3;
    else
      alpha = std::max(cfg.sigma1, -0.5 * (gs / (f_new - f - gs)));

    if (actred < cfg.eta0 * prered)
      delta = std::min(std::max(alpha, cfg.sigma1) * snorm, cfg.sigma2 * delta);
    else if (actred < cfg.eta1 * prered)
      delta = std::max(cfg.sigma1 * delta, std::min(alpha * snorm, cfg.sigma2 * delta));
    else if (actred < cfg.eta2 * prered)
      delta = std::max(cfg.sigma1 * delta, std::min(alpha * snorm, cfg.sigma3 * delta));
    else
      delta = std::max(delta, std::min(alpha * snorm, cfg.sigma3 * delta));

    ++trial;
    const bool accept = actred > cfg.eta0 * prered;
    if (accept) {
      out.beta.swap(beta_new);
      f = f_new;
      g.swap(g_new);
      gnorm = nrm2(g);
      adopt_pending = true;
      before_first_accept = false;
      ++trace.accepted;
      ++iter;
    } else {
      ++trace.rejected;
    }
    trace.iters.push_back({trial, f, gnorm, delta, cg.steps, accept});

    if (f < -1.0e32) break;
    if (std::fabs(actred) <= 0.0 && prered <= 0.0) break;
    if (std::fabs(actred) <= 1.0e-12 * std::fabs(f) && std::fabs(prered) <= 1.0e-12 * std::fabs(f))
      break;
  }

  trace.f_final = f;
  trace.gnorm_final = gnorm;
  trace.converged = gnorm <= stop;
  return out;
}

void write_trace_csv(const TronTrace& trace, std::ostream& out) {
  out << "iter,f,gnorm,delta,cg_steps,accepted\n";
  char buf[160];
  for (const auto& it : trace.iters) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%d,%d\n", it.iter, it.f, it.gnorm,
                  it.delta, it.cg_steps, it.accepted ? 1 : 0);
    out << buf;
  }
}

}  // namespace nytron::tron
