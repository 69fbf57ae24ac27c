#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nytron/allreduce.hpp"
#include "nytron/data.hpp"
#include "nytron/kernel.hpp"
#include "nytron/sparse.hpp"

namespace nytron::basis {

// Worker `rank`'s share of an m-point basis over p workers: floor(m/p), plus
// one for the first m mod p workers.
std::size_t quota(std::size_t m, int p, int rank);

// Shard-local ids of worker `rank`'s picks for growing a random basis from
// m_old to m_new total points: entries [quota(m_old), quota(m_new)) of a
// seed/worker-keyed permutation of the shard. Later stages read further into
// the same permutation, so staged pick sets nest.
std::vector<std::size_t> local_random_picks(std::size_t shard_size, int rank, int p,
                                            std::size_t m_old, std::size_t m_new,
                                            std::uint64_t seed);

// Random basis of m training points over the given sharding, worker order.
BasisSet select_random(const std::vector<Shard>& shards, std::size_t m, double sigma,
                       std::uint64_t seed);

// Appends the picks for stream positions [m_old, m_new) to an existing basis.
void extend_random(const std::vector<Shard>& shards, std::size_t m_old, std::size_t m_new,
                   std::uint64_t seed, BasisSet& bs);

// Collective twin of extend_random: every rank picks from its own shard, the
// union travels through one gather + one broadcast, and all ranks receive the
// identical points in worker order.
std::vector<SparseVec> pick_random_spmd(const Shard& shard, std::size_t m_old, std::size_t m_new,
                                        std::uint64_t seed, comm::Communicator& comm);

void extend_random_spmd(const Shard& shard, std::size_t m_old, std::size_t m_new,
                        std::uint64_t seed, comm::Communicator& comm, BasisSet& bs);

struct KmeansOptions {
  int iters = 3;
};

struct KmeansStats {
  // Total squared distance to the nearest center, recorded at each
  // assignment pass (the value the update step then improves).
  std::vector<double> objective;
  int reseeds = 0;
};

// Distributed Lloyd over per-worker shards. Centers start from the random
// picks for [0, m) unless `init` supplies explicit points. Each iteration
// runs one allreduce carrying the concatenated (per-center sum, count)
// buffer plus an objective slot; empty clusters are re-seeded with the
// globally farthest-from-its-center point (ties to the lowest global id)
// through one gather + one broadcast. All ranks return identical centers.
BasisSet select_kmeans_spmd(const Shard& shard, std::size_t m, int dim, double sigma,
                            std::uint64_t seed, comm::Communicator& comm,
                            const KmeansOptions& opts = {},
                            const std::vector<SparseVec>* init = nullptr,
                            KmeansStats* stats = nullptr);

// Serial twin over explicit shards: same per-worker passes, partials summed
// in worker order, same re-seed rule, so it reproduces the collective path
// bit-for-bit on the same sharding.
BasisSet select_kmeans(const std::vector<Shard>& shards, std::size_t m, int dim, double sigma,
                       std::uint64_t seed, const KmeansOptions& opts = {},
                       const std::vector<SparseVec>* init = nullptr,
                       KmeansStats* stats = nullptr);

// kmeans while the basis is small enough to cluster and the feature space
// dense enough for means to stay meaningful; random otherwise.
BasisSource choose_source(std::size_t m, int dim, std::size_t m_threshold = 5000,
                          int dim_threshold = 1000);

// Text format: `#basis m=<m> sigma=<s> source=<random|kmeans> seed=<seed>`
// followed by exactly m label-free sparse point lines (1-based idx:val).
void save_basis(const std::string& path, const BasisSet& bs);
BasisSet load_basis(const std::string& path);

}  // namespace nytron::basis
