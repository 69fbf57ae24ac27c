#pragma once

#include <cstddef>
#include <vector>

#include "nytron/data.hpp"
#include "nytron/kernel.hpp"
#include "nytron/objective.hpp"
#include "nytron/tron.hpp"

// Desk-scale dense oracles: full-kernel training, pseudo-inverse
// reconstruction and the linearized machine. Everything here is O(n^2) memory
// or worse and meant for tests and small diagnostics, never the distributed
// path.
namespace nytron::ref {

struct DenseMat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> a;  // row-major

  DenseMat() = default;
  DenseMat(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

  double& at(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return a[i * cols + j]; }

  static DenseMat identity(std::size_t n);
};

DenseMat matmul(const DenseMat& x, const DenseMat& y);
DenseMat transpose(const DenseMat& x);
std::vector<double> matvec(const DenseMat& x, const std::vector<double>& v);

// A = V diag(eig) V^T by cyclic Jacobi rotations; eigenvalues descending.
// Input must be symmetric to 1e-12 (relative); sized for n <= ~2000.
struct EigenSym {
  DenseMat v;               // columns are eigenvectors
  std::vector<double> eig;
};
EigenSym eigen_sym(DenseMat a, int max_sweeps = 100);

// U diag(1/eig) U^T over eigenvalues above cutoff_rel * eig_max; the rest are
// zeroed. A rank-0 input comes back as the zero matrix.
DenseMat pseudo_inverse(const DenseMat& w, double cutoff_rel = 1e-12);

// C W^+ C^T
DenseMat nystrom_reconstruct(const DenseMat& c, const DenseMat& w_plus);

struct ApproxError {
  double frobenius_rel = 0.0;
  double spectral_rel = 0.0;
};
// Norm differences ||K - K_tilde|| / ||K||, Frobenius and spectral.
ApproxError approx_error(const DenseMat& k, const DenseMat& k_tilde);

// Dense Gaussian kernel builders (independent of the block-based production
// path; used as its oracle).
DenseMat gram(const std::vector<SparseExample>& xs, double sigma);
DenseMat basis_gram(const BasisSet& basis);
DenseMat cross_gram(const std::vector<SparseExample>& xs, const BasisSet& basis);

// f(beta) = (lambda/2) beta^T W beta + sum_i l(y_i, (C beta)_i) over dense
// matrices, with the same frozen-curvature contract as the distributed
// objective.
class DenseObjectiveOracle : public tron::Oracle {
 public:
  DenseObjectiveOracle(DenseMat c, DenseMat w, std::vector<double> y, double lambda, Loss loss);

  std::size_t dim() const override { return w_.rows; }
  double eval_fg(std::span<const double> beta, std::span<double> g) override;
  void hess_vec(std::span<const double> d, bool adopt_last_eval, std::span<double> out) override;

 private:
  DenseMat c_;
  DenseMat w_;
  std::vector<double> y_;
  double lambda_ = 1.0;
  Loss loss_ = Loss::squared_hinge;
  std::vector<std::uint8_t> trial_active_;
  std::vector<std::uint8_t> active_;
};

struct RefSolution {
  std::vector<double> coef;
  double objective = 0.0;
  tron::TronTrace trace;
  // Linearized solve only: basis-to-feature map U diag(eig^{-1/2}) over the
  // kept eigenvalues, so a kernel row c(x) predicts as (c(x) T) . coef.
  DenseMat transform;
};

// min (lambda/2) a^T K a + L(K a, y): the machine over all training points.
RefSolution solve_full_kernel(const DenseMat& k, const std::vector<double>& y, double lambda,
                              Loss loss = Loss::squared_hinge, const tron::TronConfig& cfg = {});

// min (lambda/2) ||w||^2 + L(A w, y) with A = C U diag(eig^{-1/2}) over
// eigenvalues above cutoff_rel * eig_max.
RefSolution solve_linearized(const DenseMat& c, const DenseMat& w, const std::vector<double>& y,
                             double lambda, Loss loss = Loss::squared_hinge,
                             double cutoff_rel = 1e-12, const tron::TronConfig& cfg = {});

}  // namespace nytron::ref
