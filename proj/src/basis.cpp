#include "nytron/basis.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "nytron/bytes.hpp"
#include "nytron/error.hpp"
#include "nytron/rng.hpp"

namespace nytron::basis {

namespace {

// Reserved stream-id space so basis permutations never share a sequence with
// other consumers of the same job seed.
constexpr std::uint64_t kStreamBase = 1ULL << 32;

void check_quota(std::size_t shard_size, int rank, std::size_t q) {
  if (q > shard_size)
    throw ConfigError("worker " + std::to_string(rank) + ": basis quota " + std::to_string(q) +
                      " exceeds shard size " + std::to_string(shard_size));
}

Bytes encode_points(const std::vector<const SparseVec*>& pts) {
  Bytes b;
  put_u32(b, static_cast<std::uint32_t>(pts.size()));
  for (const SparseVec* p : pts) put_sparse_vec(b, *p);
  return b;
}

}  // namespace

std::size_t quota(std::size_t m, int p, int rank) {
  if (p < 1 || rank < 0 || rank >= p) throw ContractError("quota: bad worker id");
  return m / static_cast<std::size_t>(p) +
         (static_cast<std::size_t>(rank) < m % static_cast<std::size_t>(p) ? 1 : 0);
}

std::vector<std::size_t> local_random_picks(std::size_t shard_size, int rank, int p,
                                            std::size_t m_old, std::size_t m_new,
                                            std::uint64_t seed) {
  if (m_new < m_old) throw ContractError("local_random_picks: basis cannot shrink");
  const std::size_t from = quota(m_old, p, rank);
  const std::size_t to = quota(m_new, p, rank);
  check_quota(shard_size, rank, to);
  Rng64 rng = Rng64::stream(seed, kStreamBase + static_cast<std::uint64_t>(rank));
  const auto perm = random_permutation(static_cast<std::uint32_t>(shard_size), rng);
  std::vector<std::size_t> ids(perm.begin() + static_cast<std::ptrdiff_t>(from),
                               perm.begin() + static_cast<std::ptrdiff_t>(to));
  return ids;
}

void extend_random(const std::vector<Shard>& shards, std::size_t m_old, std::size_t m_new,
                   std::uint64_t seed, BasisSet& bs) {
  const int p = static_cast<int>(shards.size());
  for (int r = 0; r < p; ++r) {
    const auto ids = local_random_picks(shards[static_cast<std::size_t>(r)].size(), r, p, m_old,
                                        m_new, seed);
    for (std::size_t id : ids) bs.append(shards[static_cast<std::size_t>(r)].examples[id].x);
  }
}

BasisSet select_random(const std::vector<Shard>& shards, std::size_t m, double sigma,
                       std::uint64_t seed) {
  BasisSet bs;
  bs.source = BasisSource::random;
  bs.sigma = sigma;
  bs.seed = seed;
  extend_random(shards, 0, m, seed, bs);
  return bs;
}

std::vector<SparseVec> pick_random_spmd(const Shard& shard, std::size_t m_old, std::size_t m_new,
                                        std::uint64_t seed, comm::Communicator& comm) {
  const int p = comm.size();
  const int root = comm.topology().root();
  const auto ids = local_random_picks(shard.size(), comm.rank(), p, m_old, m_new, seed);
  std::vector<const SparseVec*> mine;
  mine.reserve(ids.size());
  for (std::size_t id : ids) mine.push_back(&shard.examples[id].x);
  const auto per_rank = comm.gather(encode_points(mine), root);

  Bytes all;
  if (comm.rank() == root) {
    put_u32(all, static_cast<std::uint32_t>(m_new - m_old));
    for (const Bytes& payload : per_rank) {
      ByteReader r(payload);
      const std::uint32_t count = r.u32();
      for (std::uint32_t k = 0; k < count; ++k) put_sparse_vec(all, get_sparse_vec(r));
    }
  }
  const auto got = comm.broadcast(all, root);
  if (!got) throw ProtocolError("basis exchange interrupted by shutdown");
  ByteReader r(*got);
  const std::uint32_t total = r.u32();
  if (total != m_new - m_old) throw ProtocolError("basis exchange: point count mismatch");
  std::vector<SparseVec> out;
  out.reserve(total);
  for (std::uint32_t k = 0; k < total; ++k) out.push_back(get_sparse_vec(r));
  return out;
}

void extend_random_spmd(const Shard& shard, std::size_t m_old, std::size_t m_new,
                        std::uint64_t seed, comm::Communicator& comm, BasisSet& bs) {
  for (auto& p : pick_random_spmd(shard, m_old, m_new, seed, comm)) bs.append(p);
}

namespace {

// Dense center workspace for Lloyd iterations; sparse data stays sparse.
struct KmState {
  std::size_t m = 0;
  int dim = 0;
  std::vector<double> centers;    // m x dim row-major
  std::vector<double> center_sq;  // m

  double* center(std::size_t c) { return centers.data() + c * static_cast<std::size_t>(dim); }
  const double* center(std::size_t c) const {
    return centers.data() + c * static_cast<std::size_t>(dim);
  }

  void set_center(std::size_t c, const SparseVec& p) {
    double* dst = center(c);
    std::fill(dst, dst + dim, 0.0);
    for (std::size_t k = 0; k < p.nnz(); ++k) dst[p.idx[k]] = p.val[k];
    refresh_sq(c);
  }

  void refresh_sq(std::size_t c) {
    const double* v = center(c);
    double s = 0.0;
    for (int j = 0; j < dim; ++j) s += v[j] * v[j];
    center_sq[c] = s;
  }
};

// One pass over the shard: nearest-center assignment (ties to the lowest
// center index), accumulation into the reduce buffer
// [m x dim sums][m counts][objective], and per-point distances kept for
// re-seeding.
void assign_pass(const Shard& shard, const std::vector<double>& x_sq, const KmState& st,
                 std::vector<double>& buf, std::vector<double>& min_dist) {
  const std::size_t m = st.m;
  const std::size_t d = static_cast<std::size_t>(st.dim);
  buf.assign(m * d + m + 1, 0.0);
  min_dist.resize(shard.size());
  double* sums = buf.data();
  double* counts = buf.data() + m * d;
  double& obj = buf[m * d + m];
  for (std::size_t i = 0; i < shard.size(); ++i) {
    const SparseVec& x = shard.examples[i].x;
    std::size_t best = 0;
    double best_dist = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      const double* cv = st.center(c);
      double dot = 0.0;
      for (std::size_t k = 0; k < x.nnz(); ++k) dot += x.val[k] * cv[x.idx[k]];
      const double dist = std::max(0.0, x_sq[i] - 2.0 * dot + st.center_sq[c]);
      if (c == 0 || dist < best_dist) {
        best = c;
        best_dist = dist;
      }
    }
    double* dst = sums + best * d;
    for (std::size_t k = 0; k < x.nnz(); ++k) dst[x.idx[k]] += x.val[k];
    counts[best] += 1.0;
    obj += best_dist;
    min_dist[i] = best_dist;
  }
}

struct ReseedCand {
  double dist = 0.0;
  std::uint32_t gid = 0;
  SparseVec pt;
};

bool cand_before(const ReseedCand& a, const ReseedCand& b) {
  if (a.dist != b.dist) return a.dist > b.dist;
  return a.gid < b.gid;
}

// The worker's q best re-seed offers: its points farthest from their centers,
// ties to the lowest global id.
std::vector<ReseedCand> top_candidates(const Shard& shard, const std::vector<double>& min_dist,
                                       std::size_t q) {
  std::vector<std::size_t> order(shard.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (min_dist[a] != min_dist[b]) return min_dist[a] > min_dist[b];
    return shard.global_ids[a] < shard.global_ids[b];
  });
  std::vector<ReseedCand> out;
  for (std::size_t t = 0; t < order.size() && out.size() < q; ++t) {
    ReseedCand c;
    c.dist = min_dist[order[t]];
    c.gid = shard.global_ids[order[t]];
    c.pt = shard.examples[order[t]].x;
    out.push_back(std::move(c));
  }
  return out;
}

Bytes encode_cands(const std::vector<ReseedCand>& cands) {
  Bytes b;
  put_u32(b, static_cast<std::uint32_t>(cands.size()));
  for (const auto& c : cands) {
    put_f64(b, c.dist);
    put_u32(b, c.gid);
    put_sparse_vec(b, c.pt);
  }
  return b;
}

void decode_cands(const Bytes& b, std::vector<ReseedCand>& out) {
  ByteReader r(b);
  const std::uint32_t count = r.u32();
  for (std::uint32_t k = 0; k < count; ++k) {
    ReseedCand c;
    c.dist = r.f64();
    c.gid = r.u32();
    c.pt = get_sparse_vec(r);
    out.push_back(std::move(c));
  }
}

// Global choice: merged candidates ranked (distance desc, id asc), one per
// empty cluster in ascending cluster order.
std::vector<SparseVec> choose_reseeds(std::vector<ReseedCand> merged, std::size_t q) {
  std::sort(merged.begin(), merged.end(), cand_before);
  if (merged.size() < q) throw ContractError("re-seed: not enough candidate points");
  std::vector<SparseVec> out;
  out.reserve(q);
  for (std::size_t t = 0; t < q; ++t) out.push_back(std::move(merged[t].pt));
  return out;
}

std::vector<std::size_t> empty_clusters(const std::vector<double>& buf, std::size_t m, int dim) {
  const double* counts = buf.data() + m * static_cast<std::size_t>(dim);
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < m; ++c)
    if (counts[c] == 0.0) out.push_back(c);
  return out;
}

void apply_means(KmState& st, const std::vector<double>& buf) {
  const std::size_t d = static_cast<std::size_t>(st.dim);
  const double* sums = buf.data();
  const double* counts = buf.data() + st.m * d;
  for (std::size_t c = 0; c < st.m; ++c) {
    if (counts[c] == 0.0) continue;
    double* dst = st.center(c);
    const double* src = sums + c * d;
    for (std::size_t j = 0; j < d; ++j) dst[j] = src[j] / counts[c];
    st.refresh_sq(c);
  }
}

void apply_reseeds(KmState& st, const std::vector<std::size_t>& empties,
                   const std::vector<SparseVec>& picks) {
  for (std::size_t t = 0; t < empties.size(); ++t) st.set_center(empties[t], picks[t]);
}

BasisSet centers_to_basis(const KmState& st, double sigma, std::uint64_t seed) {
  BasisSet bs;
  bs.source = BasisSource::kmeans;
  bs.sigma = sigma;
  bs.seed = seed;
  for (std::size_t c = 0; c < st.m; ++c) {
    SparseVec v;
    const double* cv = st.center(c);
    for (int j = 0; j < st.dim; ++j)
      if (cv[j] != 0.0) {
        v.idx.push_back(j);
        v.val.push_back(cv[j]);
      }
    bs.append(v);
  }
  return bs;
}

void km_validate(std::size_t m, int dim, int iters) {
  if (m == 0) throw ConfigError("kmeans: basis size must be positive");
  if (dim <= 0) throw ConfigError("kmeans: feature dimension must be positive");
  if (iters < 1) throw ConfigError("kmeans: iteration count must be at least 1");
}

void km_init(KmState& st, std::size_t m, int dim, const std::vector<SparseVec>& init) {
  if (init.size() != m) throw ContractError("kmeans: init center count != m");
  st.m = m;
  st.dim = dim;
  st.centers.assign(m * static_cast<std::size_t>(dim), 0.0);
  st.center_sq.assign(m, 0.0);
  for (std::size_t c = 0; c < m; ++c) {
    for (std::size_t k = 0; k < init[c].nnz(); ++k)
      if (init[c].idx[k] >= dim) throw ContractError("kmeans: init point outside dimension");
    st.set_center(c, init[c]);
  }
}

}  // namespace

BasisSet select_kmeans_spmd(const Shard& shard, std::size_t m, int dim, double sigma,
                            std::uint64_t seed, comm::Communicator& comm,
                            const KmeansOptions& opts, const std::vector<SparseVec>* init,
                            KmeansStats* stats) {
  km_validate(m, dim, opts.iters);
  const int root = comm.topology().root();
  std::vector<SparseVec> start;
  if (init) {
    start = *init;
  } else {
    BasisSet rb;
    extend_random_spmd(shard, 0, m, seed, comm, rb);
    start = std::move(rb.points);
  }
  KmState st;
  km_init(st, m, dim, start);

  std::vector<double> x_sq(shard.size());
  for (std::size_t i = 0; i < shard.size(); ++i) x_sq[i] = sparse_sq_norm(shard.examples[i].x);

  std::vector<double> buf;
  std::vector<double> min_dist;
  for (int it = 0; it < opts.iters; ++it) {
    assign_pass(shard, x_sq, st, buf, min_dist);
    comm.allreduce_sum(buf);
    if (stats) stats->objective.push_back(buf.back());
    apply_means(st, buf);
    const auto empties = empty_clusters(buf, m, dim);
    if (!empties.empty()) {
      const auto offers = top_candidates(shard, min_dist, empties.size());
      const auto per_rank = comm.gather(encode_cands(offers), root);
      Bytes choice;
      if (comm.rank() == root) {
        std::vector<ReseedCand> merged;
        for (const Bytes& payload : per_rank) decode_cands(payload, merged);
        const auto picks = choose_reseeds(std::move(merged), empties.size());
        std::vector<const SparseVec*> ptrs;
        for (const auto& p : picks) ptrs.push_back(&p);
        choice = encode_points(ptrs);
      }
      const auto got = comm.broadcast(choice, root);
      if (!got) throw ProtocolError("re-seed exchange interrupted by shutdown");
      ByteReader r(*got);
      const std::uint32_t count = r.u32();
      if (count != empties.size()) throw ProtocolError("re-seed exchange: count mismatch");
      std::vector<SparseVec> picks;
      for (std::uint32_t k = 0; k < count; ++k) picks.push_back(get_sparse_vec(r));
      apply_reseeds(st, empties, picks);
      if (stats) stats->reseeds += static_cast<int>(empties.size());
    }
  }
  return centers_to_basis(st, sigma, seed);
}

BasisSet select_kmeans(const std::vector<Shard>& shards, std::size_t m, int dim, double sigma,
                       std::uint64_t seed, const KmeansOptions& opts,
                       const std::vector<SparseVec>* init, KmeansStats* stats) {
  km_validate(m, dim, opts.iters);
  const int p = static_cast<int>(shards.size());
  std::vector<SparseVec> start;
  if (init) {
    start = *init;
  } else {
    const BasisSet rb = select_random(shards, m, sigma, seed);
    start = rb.points;
  }
  KmState st;
  km_init(st, m, dim, start);

  std::vector<std::vector<double>> x_sq(shards.size());
  for (std::size_t r = 0; r < shards.size(); ++r) {
    x_sq[r].resize(shards[r].size());
    for (std::size_t i = 0; i < shards[r].size(); ++i)
      x_sq[r][i] = sparse_sq_norm(shards[r].examples[i].x);
  }

  const std::size_t len = m * static_cast<std::size_t>(dim) + m + 1;
  std::vector<std::vector<double>> partial(shards.size());
  std::vector<std::vector<double>> min_dist(shards.size());
  for (int it = 0; it < opts.iters; ++it) {
    // Same combine as the collective path: worker partials summed in worker
    // order by a single accumulator.
    std::vector<double> buf(len, 0.0);
    for (int r = 0; r < p; ++r) {
      const auto ri = static_cast<std::size_t>(r);
      assign_pass(shards[ri], x_sq[ri], st, partial[ri], min_dist[ri]);
      for (std::size_t i = 0; i < len; ++i) buf[i] += partial[ri][i];
    }
    if (stats) stats->objective.push_back(buf.back());
    apply_means(st, buf);
    const auto empties = empty_clusters(buf, m, dim);
    if (!empties.empty()) {
      std::vector<ReseedCand> merged;
      for (int r = 0; r < p; ++r) {
        auto offers = top_candidates(shards[static_cast<std::size_t>(r)],
                                     min_dist[static_cast<std::size_t>(r)], empties.size());
        for (auto& c : offers) merged.push_back(std::move(c));
      }
      const auto picks = choose_reseeds(std::move(merged), empties.size());
      apply_reseeds(st, empties, picks);
      if (stats) stats->reseeds += static_cast<int>(empties.size());
    }
  }
  return centers_to_basis(st, sigma, seed);
}

BasisSource choose_source(std::size_t m, int dim, std::size_t m_threshold, int dim_threshold) {
  return (m <= m_threshold && dim < dim_threshold) ? BasisSource::kmeans : BasisSource::random;
}

void save_basis(const std::string& path, const BasisSet& bs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  char header[160];
  std::snprintf(header, sizeof(header), "#basis m=%zu sigma=%.17g source=%s seed=%" PRIu64 "\n",
                bs.size(), bs.sigma, to_string(bs.source), bs.seed);
  out << header;
  for (const auto& p : bs.points) out << point_line(p) << '\n';
  if (!out) throw IoError("short write to " + path);
}

BasisSet load_basis(const std::string& path) {
  std::istringstream in(read_file_maybe_gzip(path));
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty basis file");
  std::size_t m = 0;
  double sigma = 0.0;
  char source[16] = {0};
  std::uint64_t seed = 0;
  if (std::sscanf(line.c_str(), "#basis m=%zu sigma=%lg source=%15s seed=%" SCNu64, &m, &sigma,
                  source, &seed) != 4)
    throw ParseError(path + ": bad basis header");
  BasisSet bs;
  bs.sigma = sigma;
  bs.source = basis_source_from(source);
  bs.seed = seed;
  for (std::size_t k = 0; k < m; ++k) {
    if (!std::getline(in, line))
      throw ParseError(path + ": expected " + std::to_string(m) + " points, found " +
                       std::to_string(k));
    bs.append(parse_point_line(line, k + 2));
  }
  return bs;
}

}  // namespace nytron::basis
