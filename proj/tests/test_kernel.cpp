#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "helpers.hpp"
#include "nytron/error.hpp"
#include "nytron/kernel.hpp"
#include "nytron/reference.hpp"

using namespace nytron;
using testing::sparse_of;

TEST_CASE("gaussian: zero distance gives exactly one") {
  const SparseVec x = sparse_of({1.0, -2.0, 0.0, 3.5});
  CHECK(gaussian(x, x, 0.7) == 1.0);
}

TEST_CASE("gaussian: unit displacement at sigma=1") {
  const SparseVec x = sparse_of({1.0});
  const SparseVec o;  // origin
  const double expected = std::exp(-0.5);  // independent scalar evaluation
  CHECK(gaussian(x, o, 1.0) == doctest::Approx(expected).epsilon(1e-15));
  CHECK(gaussian(x, o, 1.0) == doctest::Approx(0.60653065971263342).epsilon(1e-15));
}

TEST_CASE("gaussian: symmetric in its arguments") {
  testing::Rng64 rng(4);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> a(5), b(5);
    for (auto& v : a) v = testing::gauss_draw(rng);
    for (auto& v : b) v = testing::gauss_draw(rng);
    const SparseVec sa = sparse_of(a), sb = sparse_of(b);
    CHECK(gaussian(sa, sb, 1.3) == gaussian(sb, sa, 1.3));
    CHECK(gaussian(sa, sb, 1.3) > 0.0);
    CHECK(gaussian(sa, sb, 1.3) <= 1.0);
  }
}

TEST_CASE("hyperparameters must be positive") {
  HyperParams hp;
  hp.lambda = 0.0;
  CHECK_THROWS_AS(hp.validate(), ConfigError);
  hp.lambda = 1.0;
  hp.sigma = -1.0;
  CHECK_THROWS_AS(hp.validate(), ConfigError);
}

TEST_CASE("w_range_for: contiguous cover, sizes ceil(m/p)") {
  for (int p : {1, 2, 3, 4, 7}) {
    for (std::size_t m : {1u, 2u, 5u, 12u, 16u}) {
      std::int32_t next = 0;
      for (int r = 0; r < p; ++r) {
        const RowRange rr = w_range_for(r, p, m);
        CHECK(rr.begin == next);
        CHECK(rr.count() >= 0);
        CHECK(rr.count() <= static_cast<std::int32_t>((m + p - 1) / p));
        next = rr.end;
      }
      CHECK(next == static_cast<std::int32_t>(m));
    }
  }
}

TEST_CASE("build: single example equal to the only basis point") {
  Shard s;
  s.worker_id = 0;
  s.examples.push_back({sparse_of({1.0, 2.0}), 1});
  s.global_ids = {0};
  const BasisSet bs = testing::basis_of({sparse_of({1.0, 2.0})}, 1.0);
  const KernelBlock b = build_kernel_block(s, bs, {1.0, 1.0}, {0, 1});
  REQUIRE(b.rows == 1);
  REQUIRE(b.m == 1);
  CHECK(b.c[0] == 1.0);
  CHECK(b.w[0] == 1.0);
  CHECK(b.y[0] == 1.0);
}

TEST_CASE("build: full W is symmetric with unit diagonal") {
  const Dataset ds = testing::planted(6, 3, 21);
  const Shard s = testing::whole_shard(ds);
  const BasisSet bs = testing::basis_prefix(ds, 3, 0.9);
  const KernelBlock b = build_kernel_block(s, bs, {1.0, 0.9}, {0, 3});
  for (int r = 0; r < 3; ++r) {
    CHECK(b.w[r * 3 + r] == 1.0);
    for (int l = 0; l < 3; ++l) CHECK(b.w[r * 3 + l] == b.w[l * 3 + r]);
  }
}

TEST_CASE("build: every entry matches the brute-force double loop") {
  const Dataset ds = testing::planted(5, 4, 33);
  const Shard s = testing::whole_shard(ds);
  const BasisSet bs = testing::basis_prefix(ds, 2, 1.2);
  const KernelBlock b = build_kernel_block(s, bs, {1.0, 1.2}, {0, 2});
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t k = 0; k < 2; ++k) {
      const double want = testing::gaussian_ref(ds.examples[i].x, bs.points[k], 4, 1.2);
      CHECK(b.c[i * 2 + k] == doctest::Approx(want).epsilon(1e-14));
      CHECK(b.c[i * 2 + k] > 0.0);
      CHECK(b.c[i * 2 + k] <= 1.0);
    }
}

TEST_CASE("build: stacked worker blocks equal the serial block bitwise") {
  const Dataset ds = testing::planted(40, 5, 8);
  const BasisSet bs = testing::basis_prefix(ds, 10, 1.1);
  const HyperParams hp{1.0, 1.1};

  const Shard all = testing::whole_shard(ds);
  const KernelBlock serial = serial::build_kernel_block(all, bs, hp, {0, 10});

  const auto shards = shard_random(ds, 4, 5);
  std::vector<double> stacked(ds.size() * 10);
  std::vector<double> w_stacked(10 * 10);
  for (int j = 0; j < 4; ++j) {
    const RowRange rr = w_range_for(j, 4, 10);
    const KernelBlock b = build_kernel_block(shards[j], bs, hp, rr);
    for (std::size_t i = 0; i < b.rows; ++i)
      for (std::size_t k = 0; k < 10; ++k)
        stacked[shards[j].global_ids[i] * 10 + k] = b.c[i * 10 + k];
    for (std::size_t wr = 0; wr < b.w_row_ids.size(); ++wr)
      for (std::size_t k = 0; k < 10; ++k)
        w_stacked[static_cast<std::size_t>(b.w_row_ids[wr]) * 10 + k] = b.w[wr * 10 + k];
  }
  // whole_shard keeps file order, so serial rows are already by global id
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (std::size_t k = 0; k < 10; ++k) CHECK(stacked[i * 10 + k] == serial.c[i * 10 + k]);
  for (std::size_t i = 0; i < 100; ++i) CHECK(w_stacked[i] == serial.w[i]);
}

TEST_CASE("build: OpenMP and serial paths agree bitwise") {
  const Dataset ds = testing::planted(60, 6, 13);
  const Shard s = testing::whole_shard(ds);
  const BasisSet bs = testing::basis_prefix(ds, 12, 0.8);
  const HyperParams hp{1.0, 0.8};
  const KernelBlock a = build_kernel_block(s, bs, hp, {0, 12});
  const KernelBlock b = serial::build_kernel_block(s, bs, hp, {0, 12});
  CHECK(a.c == b.c);
  CHECK(a.w == b.w);
  CHECK(a.y == b.y);
}

TEST_CASE("build: W is positive semidefinite on distinct points") {
  const Dataset ds = testing::planted(8, 3, 17);
  const Shard s = testing::whole_shard(ds);
  const BasisSet bs = testing::basis_prefix(ds, 8, 1.0);
  const KernelBlock b = build_kernel_block(s, bs, {1.0, 1.0}, {0, 8});
  ref::DenseMat w(8, 8);
  w.a = b.w;
  const auto es = ref::eigen_sym(w);
  double wnorm = 0.0;
  for (double e : es.eig) wnorm = std::max(wnorm, std::fabs(e));
  for (double e : es.eig) CHECK(e >= -1e-10 * wnorm);
}

TEST_CASE("build: W rows duplicate C rows when the basis lies in the shard") {
  const Dataset ds = testing::planted(6, 3, 29);
  const Shard s = testing::whole_shard(ds);
  // basis = shard examples 2,4 => the subset condition of the row-partition
  // remark holds and W rows must equal those C sub-rows exactly
  const BasisSet bs = testing::basis_of({ds.examples[2].x, ds.examples[4].x}, 1.0);
  const KernelBlock b = build_kernel_block(s, bs, {1.0, 1.0}, {0, 2});
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(b.w[0 * 2 + k] == b.c[2 * 2 + k]);
    CHECK(b.w[1 * 2 + k] == b.c[4 * 2 + k]);
  }
}

TEST_CASE("build: out-of-range W rows rejected") {
  const Dataset ds = testing::planted(3, 2, 31);
  const Shard s = testing::whole_shard(ds);
  const BasisSet bs = testing::basis_prefix(ds, 2, 1.0);
  CHECK_THROWS_AS(build_kernel_block(s, bs, {1.0, 1.0}, {0, 3}), ContractError);
  CHECK_THROWS_AS(build_kernel_block(s, bs, {1.0, 1.0}, {-1, 2}), ContractError);
}

TEST_CASE("extend: old entries untouched, counters grow by exactly the new work") {
  const Dataset ds = testing::planted(30, 4, 41);
  Shard s = testing::whole_shard(ds);
  BasisSet bs = testing::basis_prefix(ds, 6, 1.0);
  const HyperParams hp{1.0, 1.0};
  KernelBlock b = build_kernel_block(s, bs, hp, {0, 6});
  const KernelBlock before = b;

  for (std::size_t i = 6; i < 10; ++i) bs.append(ds.examples[i].x);
  const std::uint64_t evals0 = kernel_eval_count();
  extend_kernel_block(b, s, bs, 6, hp, {6, 10});
  const std::uint64_t grew = kernel_eval_count() - evals0;

  // n*q new C entries, q new columns on m old W rows, q full new W rows
  const std::uint64_t n = 30, m = 6, q = 4;
  CHECK(grew == n * q + (2 * m + q) * q);

  REQUIRE(b.m == 10);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < m; ++k) CHECK(b.c[i * 10 + k] == before.c[i * 6 + k]);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t k = 0; k < m; ++k) CHECK(b.w[r * 10 + k] == before.w[r * 6 + k]);

  // and the extended block equals a fresh build over the larger basis
  const KernelBlock fresh = build_kernel_block(s, bs, hp, {0, 10});
  CHECK(b.c == fresh.c);
  CHECK(b.w == fresh.w);
  CHECK(b.w_row_ids == fresh.w_row_ids);
}

TEST_CASE("block cache: round trip and guarded mismatches") {
  const Dataset ds = testing::planted(12, 3, 51);
  const Shard s = testing::whole_shard(ds);
  const BasisSet bs = testing::basis_prefix(ds, 4, 1.0);
  const KernelBlock b = build_kernel_block(s, bs, {1.0, 1.0}, {0, 4});
  const std::uint64_t h = basis_hash(bs);

  const char* path = "/tmp/nytron_test_block.cache";
  save_block_cache(path, b, 1.0, h);

  KernelBlock back;
  REQUIRE(load_block_cache(path, 12, 4, 1.0, h, &back));
  CHECK(back.c == b.c);
  CHECK(back.w == b.w);
  CHECK(back.y == b.y);
  CHECK(back.w_row_ids == b.w_row_ids);

  KernelBlock scratch;
  CHECK(!load_block_cache(path, 12, 4, 1.0, h + 1, &scratch));   // different basis
  CHECK(!load_block_cache(path, 12, 5, 1.0, h, &scratch));       // different m
  CHECK(!load_block_cache(path, 12, 4, 2.0, h, &scratch));       // different sigma
  CHECK(!load_block_cache("/tmp/nytron_no_such.cache", 12, 4, 1.0, h, &scratch));
  std::remove(path);
}

TEST_CASE("basis_hash: sensitive to points and sigma") {
  const Dataset ds = testing::planted(5, 3, 61);
  BasisSet a = testing::basis_prefix(ds, 3, 1.0);
  BasisSet b = testing::basis_prefix(ds, 3, 1.0);
  CHECK(basis_hash(a) == basis_hash(b));
  b.sigma = 2.0;
  CHECK(basis_hash(a) != basis_hash(b));
  BasisSet c = testing::basis_prefix(ds, 4, 1.0);
  CHECK(basis_hash(a) != basis_hash(c));
}
