#include "nytron/kernel.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "nytron/bytes.hpp"
#include "nytron/error.hpp"

namespace nytron {

namespace {

std::atomic<std::uint64_t> g_kernel_evals{0};

inline double gaussian_cached(const SparseVec& x, double x_sq, const SparseVec& xbar,
                              double xbar_sq, double inv_two_sigma_sq) {
  const double d2 = sparse_sq_dist(x, x_sq, xbar, xbar_sq);
  return std::exp(-d2 * inv_two_sigma_sq);
}

// One row of kernel values against the whole basis; shared by the serial and
// OpenMP builders so both produce identical bits.
inline void kernel_row(const SparseVec& x, double x_sq, const BasisSet& basis,
                       double inv_two_sigma_sq, double* out, std::size_t k0, std::size_t k1) {
  for (std::size_t k = k0; k < k1; ++k)
    out[k - k0] = gaussian_cached(x, x_sq, basis.points[k], basis.sq_norms[k], inv_two_sigma_sq);
}

void check_inputs(const Shard& shard, const BasisSet& basis, const HyperParams& params,
                  RowRange w_rows) {
  params.validate();
  if (basis.size() == 0) throw ContractError("empty basis");
  if (basis.sq_norms.size() != basis.size())
    throw ContractError("basis squared norms out of date");
  if (w_rows.begin < 0 || w_rows.end < w_rows.begin ||
      static_cast<std::size_t>(w_rows.end) > basis.size())
    throw ContractError("W row range out of bounds");
  (void)shard;
}

KernelBlock build_block_impl(const Shard& shard, const BasisSet& basis, const HyperParams& params,
                             RowRange w_rows, bool parallel) {
  check_inputs(shard, basis, params, w_rows);
  const std::size_t n = shard.size();
  const std::size_t m = basis.size();
  const double inv2s2 = 1.0 / (2.0 * params.sigma * params.sigma);

  KernelBlock block;
  block.rows = n;
  block.m = m;
  block.c.resize(n * m);
  block.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) block.y[i] = static_cast<double>(shard.examples[i].label);

  std::vector<double> x_sq(n);
  for (std::size_t i = 0; i < n; ++i) x_sq[i] = sparse_sq_norm(shard.examples[i].x);

  if (parallel) {
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < n; ++i)
      kernel_row(shard.examples[i].x, x_sq[i], basis, inv2s2, block.c.data() + i * m, 0, m);
  } else {
    for (std::size_t i = 0; i < n; ++i)
      kernel_row(shard.examples[i].x, x_sq[i], basis, inv2s2, block.c.data() + i * m, 0, m);
  }
  g_kernel_evals.fetch_add(static_cast<std::uint64_t>(n) * m, std::memory_order_relaxed);

  const std::size_t wr = static_cast<std::size_t>(w_rows.count());
  block.w_row_ids.reserve(wr);
  for (std::int32_t r = w_rows.begin; r < w_rows.end; ++r) block.w_row_ids.push_back(r);
  block.w.resize(wr * m);
  if (parallel) {
#pragma omp parallel for schedule(static)
    for (std::size_t t = 0; t < wr; ++t) {
      const std::size_t r = static_cast<std::size_t>(w_rows.begin) + t;
      kernel_row(basis.points[r], basis.sq_norms[r], basis, inv2s2, block.w.data() + t * m, 0, m);
    }
  } else {
    for (std::size_t t = 0; t < wr; ++t) {
      const std::size_t r = static_cast<std::size_t>(w_rows.begin) + t;
      kernel_row(basis.points[r], basis.sq_norms[r], basis, inv2s2, block.w.data() + t * m, 0, m);
    }
  }
  g_kernel_evals.fetch_add(static_cast<std::uint64_t>(wr) * m, std::memory_order_relaxed);
  return block;
}

}  // namespace

void HyperParams::validate() const {
  if (!(lambda > 0.0)) throw ConfigError("lambda must be positive");
  if (!(sigma > 0.0)) throw ConfigError("sigma must be positive");
}

const char* to_string(BasisSource s) { return s == BasisSource::random ? "random" : "kmeans"; }

BasisSource basis_source_from(const std::string& s) {
  if (s == "random") return BasisSource::random;
  if (s == "kmeans") return BasisSource::kmeans;
  throw ConfigError("unknown basis source: " + s);
}

void BasisSet::append(const SparseVec& p) {
  points.push_back(p);
  sq_norms.push_back(sparse_sq_norm(p));
}

void BasisSet::recompute_norms() {
  sq_norms.resize(points.size());
  for (std::size_t k = 0; k < points.size(); ++k) sq_norms[k] = sparse_sq_norm(points[k]);
}

RowRange w_range_for(int rank, int p, std::size_t m) {
  if (p < 1 || rank < 0 || rank >= p) throw ContractError("bad rank/worker count");
  const std::size_t per = (m + static_cast<std::size_t>(p) - 1) / p;  // ceil(m/p)
  const std::size_t begin = per * static_cast<std::size_t>(rank);
  const std::size_t end = begin + per;
  RowRange r;
  r.begin = static_cast<std::int32_t>(begin < m ? begin : m);
  r.end = static_cast<std::int32_t>(end < m ? end : m);
  return r;
}

double gaussian(const SparseVec& x, const SparseVec& xbar, double sigma) {
  const double d2 = sparse_sq_dist(x, sparse_sq_norm(x), xbar, sparse_sq_norm(xbar));
  return std::exp(-d2 / (2.0 * sigma * sigma));
}

KernelBlock build_kernel_block(const Shard& shard, const BasisSet& basis,
                               const HyperParams& params, RowRange w_rows) {
  return build_block_impl(shard, basis, params, w_rows, true);
}

KernelBlock serial::build_kernel_block(const Shard& shard, const BasisSet& basis,
                                       const HyperParams& params, RowRange w_rows) {
  return build_block_impl(shard, basis, params, w_rows, false);
}

void extend_kernel_block(KernelBlock& block, const Shard& shard, const BasisSet& basis,
                         std::size_t old_m, const HyperParams& params, RowRange new_w_rows) {
  check_inputs(shard, basis, params, new_w_rows);
  const std::size_t new_m = basis.size();
  if (new_m < old_m || block.m != old_m) throw ContractError("extend: basis size mismatch");
  if (new_w_rows.count() > 0 && new_w_rows.begin < static_cast<std::int32_t>(old_m))
    throw ContractError("extend: new W rows must lie in the appended range");
  const std::size_t q = new_m - old_m;
  const std::size_t n = block.rows;
  const double inv2s2 = 1.0 / (2.0 * params.sigma * params.sigma);

  std::vector<double> x_sq(n);
  for (std::size_t i = 0; i < n; ++i) x_sq[i] = sparse_sq_norm(shard.examples[i].x);

  // Widen C in place: old entries move, only the q new columns are computed.
  std::vector<double> c(n * new_m);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    const double* src = block.c.data() + i * old_m;
    double* dst = c.data() + i * new_m;
    for (std::size_t k = 0; k < old_m; ++k) dst[k] = src[k];
    kernel_row(shard.examples[i].x, x_sq[i], basis, inv2s2, dst + old_m, old_m, new_m);
  }
  block.c = std::move(c);
  g_kernel_evals.fetch_add(static_cast<std::uint64_t>(n) * q, std::memory_order_relaxed);

  // Widen existing W rows.
  const std::size_t wr_old = block.w_row_ids.size();
  std::vector<double> w(wr_old * new_m);
#pragma omp parallel for schedule(static)
  for (std::size_t t = 0; t < wr_old; ++t) {
    const double* src = block.w.data() + t * old_m;
    double* dst = w.data() + t * new_m;
    for (std::size_t k = 0; k < old_m; ++k) dst[k] = src[k];
    const std::size_t r = static_cast<std::size_t>(block.w_row_ids[t]);
    kernel_row(basis.points[r], basis.sq_norms[r], basis, inv2s2, dst + old_m, old_m, new_m);
  }
  g_kernel_evals.fetch_add(static_cast<std::uint64_t>(wr_old) * q, std::memory_order_relaxed);

  // Append the freshly assigned W rows in full.
  const std::size_t wr_new = static_cast<std::size_t>(new_w_rows.count());
  w.resize((wr_old + wr_new) * new_m);
#pragma omp parallel for schedule(static)
  for (std::size_t t = 0; t < wr_new; ++t) {
    const std::size_t r = static_cast<std::size_t>(new_w_rows.begin) + t;
    kernel_row(basis.points[r], basis.sq_norms[r], basis, inv2s2, w.data() + (wr_old + t) * new_m,
               0, new_m);
  }
  g_kernel_evals.fetch_add(static_cast<std::uint64_t>(wr_new) * new_m, std::memory_order_relaxed);

  for (std::int32_t r = new_w_rows.begin; r < new_w_rows.end; ++r) block.w_row_ids.push_back(r);
  block.w = std::move(w);
  block.m = new_m;
}

std::uint64_t kernel_eval_count() { return g_kernel_evals.load(std::memory_order_relaxed); }

std::uint64_t basis_hash(const BasisSet& basis) {
  Bytes b;
  put_f64(b, basis.sigma);
  put_u32(b, static_cast<std::uint32_t>(basis.size()));
  for (const auto& p : basis.points) put_sparse_vec(b, p);
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (std::uint8_t byte : b) {
    h ^= byte;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {
constexpr char kCacheMagic[8] = {'N', 'Y', 'K', 'B', '1', '\n', 0, 0};

void put_doubles(Bytes& b, const std::vector<double>& v) {
  for (double x : v) put_f64(b, x);
}
}  // namespace

void save_block_cache(const std::string& path, const KernelBlock& block, double sigma,
                      std::uint64_t hash) {
  Bytes b;
  for (char c : kCacheMagic) b.push_back(static_cast<std::uint8_t>(c));
  put_u64(b, block.rows);
  put_u64(b, block.m);
  put_f64(b, sigma);
  put_u64(b, hash);
  put_u32(b, static_cast<std::uint32_t>(block.w_row_ids.size()));
  for (std::int32_t r : block.w_row_ids) put_i32(b, r);
  put_doubles(b, block.c);
  put_doubles(b, block.w);
  put_doubles(b, block.y);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  if (!out) throw IoError("short write to " + path);
}

bool load_block_cache(const std::string& path, std::size_t rows, std::size_t m, double sigma,
                      std::uint64_t hash, KernelBlock* out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  ByteReader r(bytes.data(), bytes.size());
  try {
    for (char c : kCacheMagic)
      if (r.u8() != static_cast<std::uint8_t>(c)) return false;
    if (r.u64() != rows || r.u64() != m) return false;
    if (r.f64() != sigma || r.u64() != hash) return false;
    KernelBlock block;
    block.rows = rows;
    block.m = m;
    const std::uint32_t wr = r.u32();
    block.w_row_ids.reserve(wr);
    for (std::uint32_t t = 0; t < wr; ++t) block.w_row_ids.push_back(r.i32());
    block.c.resize(rows * m);
    for (double& v : block.c) v = r.f64();
    block.w.resize(static_cast<std::size_t>(wr) * m);
    for (double& v : block.w) v = r.f64();
    block.y.resize(rows);
    for (double& v : block.y) v = r.f64();
    if (!r.done()) return false;
    *out = std::move(block);
    return true;
  } catch (const ProtocolError&) {
    return false;
  }
}

}  // namespace nytron
