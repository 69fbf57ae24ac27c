#pragma once

#include <cstdint>
#include <vector>

namespace nytron {

// Sparse vector with strictly increasing 0-based indices and no stored zeros.
struct SparseVec {
  std::vector<std::int32_t> idx;
  std::vector<double> val;

  std::size_t nnz() const { return idx.size(); }

  bool operator==(const SparseVec& o) const { return idx == o.idx && val == o.val; }
};

double sparse_dot(const SparseVec& a, const SparseVec& b);
double sparse_sq_norm(const SparseVec& a);

// ||a - b||^2 from cached norms; clamped at 0 against cancellation.
double sparse_sq_dist(const SparseVec& a, double a_sq_norm, const SparseVec& b, double b_sq_norm);

struct SparseExample {
  SparseVec x;
  int label = 0;  // +1 or -1
};

}  // namespace nytron
