#include "nytron/reference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nytron/error.hpp"

namespace nytron::ref {

DenseMat DenseMat::identity(std::size_t n) {
  DenseMat m(n, n);
  for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
  return m;
}

DenseMat matmul(const DenseMat& x, const DenseMat& y) {
  if (x.cols != y.rows) throw ContractError("matmul: inner dimensions differ");
  DenseMat out(x.rows, y.cols);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t k = 0; k < x.cols; ++k) {
      const double xv = x.at(i, k);
      if (xv == 0.0) continue;
      for (std::size_t j = 0; j < y.cols; ++j) out.at(i, j) += xv * y.at(k, j);
    }
  return out;
}

DenseMat transpose(const DenseMat& x) {
  DenseMat out(x.cols, x.rows);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < x.cols; ++j) out.at(j, i) = x.at(i, j);
  return out;
}

std::vector<double> matvec(const DenseMat& x, const std::vector<double>& v) {
  if (x.cols != v.size()) throw ContractError("matvec: dimension mismatch");
  std::vector<double> out(x.rows, 0.0);
  for (std::size_t i = 0; i < x.rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) s += x.at(i, j) * v[j];
    out[i] = s;
  }
  return out;
}

EigenSym eigen_sym(DenseMat a, int max_sweeps) {
  if (a.rows != a.cols) throw ContractError("eigen_sym: square matrix required");
  const std::size_t n = a.rows;
  double scale = 0.0;
  for (double v : a.a) scale = std::max(scale, std::fabs(v));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      if (std::fabs(a.at(i, j) - a.at(j, i)) > 1e-12 * std::max(1.0, scale))
        throw ContractError("eigen_sym: matrix is not symmetric");
      const double avg = 0.5 * (a.at(i, j) + a.at(j, i));
      a.at(i, j) = avg;
      a.at(j, i) = avg;
    }

  DenseMat v = DenseMat::identity(n);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        total += a.at(i, j) * a.at(i, j);
        if (i != j) off += a.at(i, j) * a.at(i, j);
      }
    if (off <= 1e-28 * std::max(total, 1e-300)) break;

    for (std::size_t p = 0; p + 1 < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a.at(p, q);
        if (apq == 0.0) continue;
        const double app = a.at(p, p);
        const double aqq = a.at(q, q);
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          if (k == p || k == q) continue;
          const double akp = a.at(k, p);
          const double akq = a.at(k, q);
          a.at(k, p) = c * akp - s * akq;
          a.at(p, k) = a.at(k, p);
          a.at(k, q) = s * akp + c * akq;
          a.at(q, k) = a.at(k, q);
        }
        a.at(p, p) = c * c * app - 2.0 * s * c * apq + s * s * aqq;
        a.at(q, q) = s * s * app + 2.0 * s * c * apq + c * c * aqq;
        a.at(p, q) = 0.0;
        a.at(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v.at(k, p);
          const double vkq = v.at(k, q);
          v.at(k, p) = c * vkp - s * vkq;
          v.at(k, q) = s * vkp + c * vkq;
        }
      }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return a.at(x, x) > a.at(y, y); });
  EigenSym out;
  out.eig.resize(n);
  out.v = DenseMat(n, n);
  for (std::size_t t = 0; t < n; ++t) {
    out.eig[t] = a.at(order[t], order[t]);
    for (std::size_t k = 0; k < n; ++k) out.v.at(k, t) = v.at(k, order[t]);
  }
  return out;
}

DenseMat pseudo_inverse(const DenseMat& w, double cutoff_rel) {
  const EigenSym e = eigen_sym(w);
  const std::size_t n = w.rows;
  DenseMat out(n, n);
  if (e.eig.empty() || e.eig[0] <= 0.0) return out;
  const double cutoff = cutoff_rel * e.eig[0];
  for (std::size_t t = 0; t < n; ++t) {
    if (e.eig[t] <= cutoff) continue;
    const double inv = 1.0 / e.eig[t];
    for (std::size_t i = 0; i < n; ++i) {
      const double ui = e.v.at(i, t) * inv;
      if (ui == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out.at(i, j) += ui * e.v.at(j, t);
    }
  }
  return out;
}

DenseMat nystrom_reconstruct(const DenseMat& c, const DenseMat& w_plus) {
  return matmul(matmul(c, w_plus), transpose(c));
}

namespace {

double frob(const DenseMat& x) {
  double s = 0.0;
  for (double v : x.a) s += v * v;
  return std::sqrt(s);
}

double spectral_sym(const DenseMat& x) {
  const EigenSym e = eigen_sym(x);
  double mx = 0.0;
  for (double l : e.eig) mx = std::max(mx, std::fabs(l));
  return mx;
}

}  // namespace

ApproxError approx_error(const DenseMat& k, const DenseMat& k_tilde) {
  if (k.rows != k_tilde.rows || k.cols != k_tilde.cols)
    throw ContractError("approx_error: shape mismatch");
  DenseMat diff(k.rows, k.cols);
  for (std::size_t i = 0; i < k.a.size(); ++i) diff.a[i] = k.a[i] - k_tilde.a[i];
  // Both inputs are symmetric up to rounding; symmetrize so the spectral norm
  // can come from the eigensolver.
  for (std::size_t i = 0; i < diff.rows; ++i)
    for (std::size_t j = i + 1; j < diff.cols; ++j) {
      const double avg = 0.5 * (diff.at(i, j) + diff.at(j, i));
      diff.at(i, j) = avg;
      diff.at(j, i) = avg;
    }
  ApproxError err;
  err.frobenius_rel = frob(diff) / frob(k);
  err.spectral_rel = spectral_sym(diff) / spectral_sym(k);
  return err;
}

namespace {

double sq_dist(const SparseVec& a, double a_sq, const SparseVec& b, double b_sq) {
  return sparse_sq_dist(a, a_sq, b, b_sq);
}

}  // namespace

DenseMat gram(const std::vector<SparseExample>& xs, double sigma) {
  const std::size_t n = xs.size();
  std::vector<double> sq(n);
  for (std::size_t i = 0; i < n; ++i) sq[i] = sparse_sq_norm(xs[i].x);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  DenseMat k(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) {
      const double v = std::exp(-sq_dist(xs[i].x, sq[i], xs[j].x, sq[j]) * inv);
      k.at(i, j) = v;
      k.at(j, i) = v;
    }
  return k;
}

DenseMat basis_gram(const BasisSet& basis) {
  const std::size_t m = basis.size();
  const double inv = 1.0 / (2.0 * basis.sigma * basis.sigma);
  DenseMat w(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j <= i; ++j) {
      const double v = std::exp(
          -sq_dist(basis.points[i], basis.sq_norms[i], basis.points[j], basis.sq_norms[j]) * inv);
      w.at(i, j) = v;
      w.at(j, i) = v;
    }
  return w;
}

DenseMat cross_gram(const std::vector<SparseExample>& xs, const BasisSet& basis) {
  const std::size_t n = xs.size();
  const std::size_t m = basis.size();
  const double inv = 1.0 / (2.0 * basis.sigma * basis.sigma);
  DenseMat c(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    const double xi_sq = sparse_sq_norm(xs[i].x);
    for (std::size_t j = 0; j < m; ++j)
      c.at(i, j) =
          std::exp(-sq_dist(xs[i].x, xi_sq, basis.points[j], basis.sq_norms[j]) * inv);
  }
  return c;
}

DenseObjectiveOracle::DenseObjectiveOracle(DenseMat c, DenseMat w, std::vector<double> y,
                                           double lambda, Loss loss)
    : c_(std::move(c)), w_(std::move(w)), y_(std::move(y)), lambda_(lambda), loss_(loss) {
  if (w_.rows != w_.cols) throw ContractError("objective oracle: W must be square");
  if (c_.cols != w_.rows) throw ContractError("objective oracle: C and W disagree");
  if (c_.rows != y_.size()) throw ContractError("objective oracle: label count mismatch");
  trial_active_.assign(y_.size(), 1);
  active_.assign(y_.size(), 1);
}

double DenseObjectiveOracle::eval_fg(std::span<const double> beta, std::span<double> g) {
  const std::size_t n = y_.size();
  const std::size_t m = w_.rows;
  std::vector<double> o(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += c_.at(i, j) * beta[j];
    o[i] = s;
  }
  std::vector<double> wb(m);
  double f_reg = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    double s = 0.0;
    for (std::size_t k = 0; k < m; ++k) s += w_.at(j, k) * beta[k];
    wb[j] = s;
    f_reg += beta[j] * s;
  }
  double f_loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const bool on = loss_ == Loss::squared_error || y_[i] * o[i] < 1.0;
    trial_active_[i] = on ? 1 : 0;
    const double z = on ? o[i] - y_[i] : 0.0;
    f_loss += 0.5 * z * z;
    o[i] = z;  // reuse as the residual
  }
  for (std::size_t j = 0; j < m; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += c_.at(i, j) * o[i];
    g[j] = lambda_ * wb[j] + s;
  }
  return 0.5 * lambda_ * f_reg + f_loss;
}

void DenseObjectiveOracle::hess_vec(std::span<const double> d, bool adopt_last_eval,
                                    std::span<double> out) {
  if (adopt_last_eval) active_ = trial_active_;
  const std::size_t n = y_.size();
  const std::size_t m = w_.rows;
  std::vector<double> t(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!active_[i]) continue;
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += c_.at(i, j) * d[j];
    t[i] = s;
  }
  for (std::size_t j = 0; j < m; ++j) {
    double s = 0.0;
    for (std::size_t k = 0; k < m; ++k) s += w_.at(j, k) * d[k];
    double u = 0.0;
    for (std::size_t i = 0; i < n; ++i) u += c_.at(i, j) * t[i];
    out[j] = lambda_ * s + u;
  }
}

RefSolution solve_full_kernel(const DenseMat& k, const std::vector<double>& y, double lambda,
                              Loss loss, const tron::TronConfig& cfg) {
  DenseObjectiveOracle oracle(k, k, y, lambda, loss);
  auto res = tron::minimize(oracle, std::vector<double>(k.cols, 0.0), cfg);
  RefSolution sol;
  sol.coef = std::move(res.beta);
  sol.objective = res.trace.f_final;
  sol.trace = std::move(res.trace);
  return sol;
}

RefSolution solve_linearized(const DenseMat& c, const DenseMat& w, const std::vector<double>& y,
                             double lambda, Loss loss, double cutoff_rel,
                             const tron::TronConfig& cfg) {
  const EigenSym e = eigen_sym(w);
  const std::size_t m = w.rows;
  std::size_t kept = 0;
  const double top = e.eig.empty() ? 0.0 : e.eig[0];
  const double cutoff = cutoff_rel * top;
  while (kept < m && e.eig[kept] > cutoff && e.eig[kept] > 0.0) ++kept;

  DenseMat t(m, kept);
  for (std::size_t tcol = 0; tcol < kept; ++tcol) {
    const double inv_sqrt = 1.0 / std::sqrt(e.eig[tcol]);
    for (std::size_t j = 0; j < m; ++j) t.at(j, tcol) = e.v.at(j, tcol) * inv_sqrt;
  }
  const DenseMat a = matmul(c, t);

  RefSolution sol;
  sol.transform = t;
  if (kept == 0) {
    // Degenerate basis: the model is identically zero.
    double f = 0.0;
    for (double yi : y) f += 0.5 * yi * yi;
    sol.objective = f;
    return sol;
  }
  DenseObjectiveOracle oracle(a, DenseMat::identity(kept), y, lambda, loss);
  auto res = tron::minimize(oracle, std::vector<double>(kept, 0.0), cfg);
  sol.coef = std::move(res.beta);
  sol.objective = res.trace.f_final;
  sol.trace = std::move(res.trace);
  return sol;
}

}  // namespace nytron::ref
