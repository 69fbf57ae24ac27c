#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nytron/data.hpp"
#include "nytron/sparse.hpp"

namespace nytron {

struct HyperParams {
  double lambda = 1.0;
  double sigma = 1.0;

  void validate() const;  // both must be positive
};

enum class BasisSource : std::uint8_t { random = 0, kmeans = 1 };

const char* to_string(BasisSource s);
BasisSource basis_source_from(const std::string& s);

// Basis points are plain sparse vectors: copies of training examples when
// source=random, Lloyd centers when source=kmeans. Squared norms are cached
// for kernel evaluation.
struct BasisSet {
  std::vector<SparseVec> points;
  std::vector<double> sq_norms;
  BasisSource source = BasisSource::random;
  double sigma = 1.0;
  std::uint64_t seed = 0;

  std::size_t size() const { return points.size(); }
  void append(const SparseVec& p);
  void recompute_norms();
};

struct RowRange {
  std::int32_t begin = 0;
  std::int32_t end = 0;  // half-open

  std::int32_t count() const { return end - begin; }
};

// Contiguous ceil(m/p) slices of the regularizer rows; trailing workers may
// come up empty when m < p.
RowRange w_range_for(int rank, int p, std::size_t m);

// Per-worker slice of the problem: the worker's rows of C, its assigned rows
// of W, and the labels of its shard.
struct KernelBlock {
  std::size_t rows = 0;
  std::size_t m = 0;
  std::vector<double> c;                 // rows x m, row-major
  std::vector<std::int32_t> w_row_ids;   // owned W rows (ascending)
  std::vector<double> w;                 // |w_row_ids| x m, row-major
  std::vector<double> y;                 // labels as +-1.0
};

double gaussian(const SparseVec& x, const SparseVec& xbar, double sigma);

KernelBlock build_kernel_block(const Shard& shard, const BasisSet& basis,
                               const HyperParams& params, RowRange w_rows);

// Appends columns for new basis points [old_m, basis.size()) to c and to the
// worker's existing W rows, plus fully-new W rows from new_w_rows. Old entries
// are left untouched.
void extend_kernel_block(KernelBlock& block, const Shard& shard, const BasisSet& basis,
                         std::size_t old_m, const HyperParams& params, RowRange new_w_rows);

namespace serial {
KernelBlock build_kernel_block(const Shard& shard, const BasisSet& basis,
                               const HyperParams& params, RowRange w_rows);
}

// Running count of Gaussian kernel evaluations issued by block construction
// and extension; lets tests assert that extensions never recompute old entries.
std::uint64_t kernel_eval_count();

std::uint64_t basis_hash(const BasisSet& basis);

// Binary block cache: header (rows, m, sigma, basis hash, W row ids) followed
// by the row-major little-endian float64 payloads.
void save_block_cache(const std::string& path, const KernelBlock& block, double sigma,
                      std::uint64_t hash);
bool load_block_cache(const std::string& path, std::size_t rows, std::size_t m, double sigma,
                      std::uint64_t hash, KernelBlock* out);

}  // namespace nytron
