#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nytron/sparse.hpp"

namespace nytron {

struct Dataset {
  std::vector<SparseExample> examples;
  std::int32_t dim = 0;  // number of features = highest 1-based index seen

  std::size_t size() const { return examples.size(); }
};

// Sparse text rows: "<label> <index>:<value> ...", indices 1-based ascending.
// Labels +1/-1; files using {0,1} are remapped to {-1,+1} with a warning.
// Zero-valued features are dropped so no stored zeros exist internally.
Dataset parse_dataset_text(const std::string& text, std::vector<std::string>* warnings = nullptr);

// Reads a file, transparently inflating gzip input (sniffed by magic bytes).
Dataset parse_dataset(const std::string& path, std::vector<std::string>* warnings = nullptr);

std::string serialize_example(const SparseExample& ex);
void write_dataset(const std::string& path, const Dataset& ds);

// Label-free sparse point, same 1-based index:value text as the dataset rows.
// %.17g keeps the round-trip exact.
std::string point_line(const SparseVec& v);
SparseVec parse_point_line(const std::string& line, std::size_t line_no);

// Raw file contents with gzip transparently decompressed.
std::string read_file_maybe_gzip(const std::string& path);

struct Shard {
  int worker_id = 0;
  std::vector<SparseExample> examples;
  std::vector<std::uint32_t> global_ids;  // positions in the original dataset

  std::size_t size() const { return examples.size(); }
};

// Splits a seeded random permutation of the examples into p contiguous chunks
// of sizes n/p (+1 for the first n%p workers). Deterministic in (n, p, seed).
std::vector<Shard> shard_random(const Dataset& ds, int p, std::uint64_t seed);

}  // namespace nytron
