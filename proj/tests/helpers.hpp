#pragma once

// Shared fixtures for the test suites: synthetic datasets, dense reference
// computations written against plain loops (independent of the library code
// under test), and small linear-algebra utilities.

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "nytron/data.hpp"
#include "nytron/kernel.hpp"
#include "nytron/rng.hpp"
#include "nytron/sparse.hpp"

namespace testing {

using nytron::BasisSet;
using nytron::Dataset;
using nytron::KernelBlock;
using nytron::Rng64;
using nytron::Shard;
using nytron::SparseExample;
using nytron::SparseVec;

inline SparseVec sparse_of(const std::vector<double>& dense) {
  SparseVec v;
  for (std::size_t i = 0; i < dense.size(); ++i) {
    if (dense[i] == 0.0) continue;
    v.idx.push_back(static_cast<std::int32_t>(i));
    v.val.push_back(dense[i]);
  }
  return v;
}

inline std::vector<double> dense_of(const SparseVec& v, std::size_t dim) {
  std::vector<double> out(dim, 0.0);
  for (std::size_t t = 0; t < v.nnz(); ++t) out[static_cast<std::size_t>(v.idx[t])] = v.val[t];
  return out;
}

inline double gauss_draw(Rng64& rng) {
  // Box-Muller; next_unit() is in [0,1), shift away from log(0).
  const double u1 = rng.next_unit() + 1e-300;
  const double u2 = rng.next_unit();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

// Scalar Gaussian kernel written independently of the library: dense
// subtraction, explicit squared distance.
inline double gaussian_ref(const SparseVec& a, const SparseVec& b, std::size_t dim,
                           double sigma) {
  const auto da = dense_of(a, dim);
  const auto db = dense_of(b, dim);
  double d2 = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    const double t = da[i] - db[i];
    d2 += t * t;
  }
  return std::exp(-d2 / (2.0 * sigma * sigma));
}

// Two Gaussian blobs at +-(2,2), labels by blob.
inline Dataset two_blobs(std::size_t n, std::uint64_t seed, double spread = 1.0) {
  Dataset ds;
  ds.dim = 2;
  Rng64 rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = rng.next_unit() < 0.5 ? 1 : -1;
    const double cx = label > 0 ? 2.0 : -2.0;
    SparseExample ex;
    ex.label = label;
    ex.x = sparse_of({cx + spread * gauss_draw(rng), cx + spread * gauss_draw(rng)});
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

// k blobs on a circle of radius 6, alternating labels, tight spread so the
// class structure needs one center per blob to resolve.
inline Dataset ring_blobs(std::size_t n, int k, std::uint64_t seed, double spread = 0.35) {
  Dataset ds;
  ds.dim = 2;
  Rng64 rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const int blob = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(k)));
    const double ang = 2.0 * M_PI * blob / k;
    SparseExample ex;
    ex.label = blob % 2 == 0 ? 1 : -1;
    ex.x = sparse_of({6.0 * std::cos(ang) + spread * gauss_draw(rng),
                      6.0 * std::sin(ang) + spread * gauss_draw(rng)});
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

// Random dense-ish examples with labels planted by a hidden kernel expansion,
// filtered so every kept point has |score| >= margin. Gives random-looking
// instances whose optimal decision values stay away from zero.
inline Dataset planted(std::size_t n, std::size_t dim, std::uint64_t seed, double sigma = 1.5,
                       double margin = 0.15, std::size_t hidden = 12) {
  Rng64 rng(seed);
  std::vector<SparseVec> centers;
  std::vector<double> weights;
  for (std::size_t k = 0; k < hidden; ++k) {
    std::vector<double> c(dim);
    for (auto& v : c) v = 2.0 * gauss_draw(rng);
    centers.push_back(sparse_of(c));
    weights.push_back(rng.next_unit() < 0.5 ? 1.0 : -1.0);
  }
  Dataset ds;
  ds.dim = static_cast<std::int32_t>(dim);
  while (ds.examples.size() < n) {
    std::vector<double> x(dim);
    for (auto& v : x) v = 2.0 * gauss_draw(rng);
    SparseExample ex;
    ex.x = sparse_of(x);
    double score = 0.0;
    for (std::size_t k = 0; k < hidden; ++k)
      score += weights[k] * gaussian_ref(ex.x, centers[k], dim, sigma);
    if (std::fabs(score) < margin) continue;
    ex.label = score >= 0.0 ? 1 : -1;
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

inline Shard whole_shard(const Dataset& ds) {
  Shard s;
  s.worker_id = 0;
  s.examples = ds.examples;
  s.global_ids.resize(ds.examples.size());
  for (std::size_t i = 0; i < s.global_ids.size(); ++i)
    s.global_ids[i] = static_cast<std::uint32_t>(i);
  return s;
}

inline BasisSet basis_of(std::vector<SparseVec> pts, double sigma) {
  BasisSet bs;
  bs.sigma = sigma;
  for (auto& p : pts) bs.append(p);
  return bs;
}

// First m examples as the basis.
inline BasisSet basis_prefix(const Dataset& ds, std::size_t m, double sigma) {
  std::vector<SparseVec> pts;
  for (std::size_t i = 0; i < m; ++i) pts.push_back(ds.examples[i].x);
  return basis_of(std::move(pts), sigma);
}

// ---- Dense reference objective (plain loops, no library calls) ----

struct DenseInstance {
  std::size_t n = 0, m = 0;
  std::vector<double> c;  // n x m row-major
  std::vector<double> w;  // m x m row-major
  std::vector<double> y;  // n
};

inline DenseInstance dense_instance(const Dataset& ds, const BasisSet& bs, double sigma) {
  DenseInstance di;
  di.n = ds.examples.size();
  di.m = bs.size();
  const auto dim = static_cast<std::size_t>(ds.dim);
  di.c.resize(di.n * di.m);
  di.w.resize(di.m * di.m);
  di.y.resize(di.n);
  for (std::size_t i = 0; i < di.n; ++i) {
    di.y[i] = ds.examples[i].label;
    for (std::size_t k = 0; k < di.m; ++k)
      di.c[i * di.m + k] = gaussian_ref(ds.examples[i].x, bs.points[k], dim, sigma);
  }
  for (std::size_t r = 0; r < di.m; ++r)
    for (std::size_t l = 0; l < di.m; ++l)
      di.w[r * di.m + l] = gaussian_ref(bs.points[r], bs.points[l], dim, sigma);
  return di;
}

// f(beta) = lambda/2 beta' W beta + sum_i 1/2 max(1 - y_i o_i, 0)^2
// (squared_error variant: 1/2 (o_i - y_i)^2).
inline double dense_objective(const DenseInstance& di, std::span<const double> beta,
                              double lambda, bool hinge = true) {
  double reg = 0.0;
  for (std::size_t r = 0; r < di.m; ++r) {
    double wr = 0.0;
    for (std::size_t l = 0; l < di.m; ++l) wr += di.w[r * di.m + l] * beta[l];
    reg += beta[r] * wr;
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < di.n; ++i) {
    double o = 0.0;
    for (std::size_t k = 0; k < di.m; ++k) o += di.c[i * di.m + k] * beta[k];
    if (hinge) {
      const double z = 1.0 - di.y[i] * o;
      if (z > 0.0) loss += 0.5 * z * z;
    } else {
      loss += 0.5 * (o - di.y[i]) * (o - di.y[i]);
    }
  }
  return 0.5 * lambda * reg + loss;
}

inline std::vector<double> dense_gradient(const DenseInstance& di, std::span<const double> beta,
                                          double lambda, bool hinge = true) {
  std::vector<double> g(di.m, 0.0);
  for (std::size_t r = 0; r < di.m; ++r) {
    double wr = 0.0;
    for (std::size_t l = 0; l < di.m; ++l) wr += di.w[r * di.m + l] * beta[l];
    g[r] = lambda * wr;
  }
  for (std::size_t i = 0; i < di.n; ++i) {
    double o = 0.0;
    for (std::size_t k = 0; k < di.m; ++k) o += di.c[i * di.m + k] * beta[k];
    double coef;
    if (hinge) {
      const double z = 1.0 - di.y[i] * o;
      coef = z > 0.0 ? o - di.y[i] : 0.0;
    } else {
      coef = o - di.y[i];
    }
    for (std::size_t k = 0; k < di.m; ++k) g[k] += di.c[i * di.m + k] * coef;
  }
  return g;
}

// Explicitly assembled (lambda W + C' D C) d with the mask taken at beta.
inline std::vector<double> dense_hess_vec(const DenseInstance& di, std::span<const double> beta,
                                          std::span<const double> d, double lambda,
                                          bool hinge = true) {
  std::vector<double> h(di.m * di.m, 0.0);
  for (std::size_t r = 0; r < di.m; ++r)
    for (std::size_t l = 0; l < di.m; ++l) h[r * di.m + l] = lambda * di.w[r * di.m + l];
  for (std::size_t i = 0; i < di.n; ++i) {
    bool active = true;
    if (hinge) {
      double o = 0.0;
      for (std::size_t k = 0; k < di.m; ++k) o += di.c[i * di.m + k] * beta[k];
      active = 1.0 - di.y[i] * o > 0.0;
    }
    if (!active) continue;
    for (std::size_t r = 0; r < di.m; ++r)
      for (std::size_t l = 0; l < di.m; ++l)
        h[r * di.m + l] += di.c[i * di.m + r] * di.c[i * di.m + l];
  }
  std::vector<double> out(di.m, 0.0);
  for (std::size_t r = 0; r < di.m; ++r)
    for (std::size_t l = 0; l < di.m; ++l) out[r] += h[r * di.m + l] * d[l];
  return out;
}

// Gaussian-elimination solve with partial pivoting, for small SPD systems.
inline std::vector<double> dense_solve(std::vector<double> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::fabs(a[r * n + col]) > std::fabs(a[piv * n + col])) piv = r;
    for (std::size_t k = 0; k < n; ++k) std::swap(a[col * n + k], a[piv * n + k]);
    std::swap(b[col], b[piv]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double fac = a[r * n + col] / a[col * n + col];
      for (std::size_t k = col; k < n; ++k) a[r * n + k] -= fac * a[col * n + k];
      b[r] -= fac * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t ri = n; ri-- > 0;) {
    double s = b[ri];
    for (std::size_t k = ri + 1; k < n; ++k) s -= a[ri * n + k] * x[k];
    x[ri] = s / a[ri * n + ri];
  }
  return x;
}

inline double rel_diff(double a, double b) {
  const double scale = std::max({std::fabs(a), std::fabs(b), 1e-300});
  return std::fabs(a - b) / scale;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double mx = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) mx = std::max(mx, std::fabs(a[i] - b[i]));
  return mx;
}

inline double rel_vec_diff(std::span<const double> a, std::span<const double> b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / std::max(den, 1e-300));
}

}  // namespace testing
