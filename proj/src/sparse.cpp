#include "nytron/sparse.hpp"

namespace nytron {

double sparse_dot(const SparseVec& a, const SparseVec& b) {
  double s = 0.0;
  std::size_t i = 0, j = 0;
  const std::size_t na = a.idx.size(), nb = b.idx.size();
  while (i < na && j < nb) {
    const std::int32_t ia = a.idx[i], ib = b.idx[j];
    if (ia == ib) {
      s += a.val[i] * b.val[j];
      ++i;
      ++j;
    } else if (ia < ib) {
      ++i;
    } else {
      ++j;
    }
  }
  return s;
}

double sparse_sq_norm(const SparseVec& a) {
  double s = 0.0;
  for (double v : a.val) s += v * v;
  return s;
}

double sparse_sq_dist(const SparseVec& a, double a_sq_norm, const SparseVec& b, double b_sq_norm) {
  const double d = a_sq_norm + b_sq_norm - 2.0 * sparse_dot(a, b);
  return d > 0.0 ? d : 0.0;
}

}  // namespace nytron
