#include "nytron/data.hpp"

#include <zlib.h>

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include "nytron/error.hpp"
#include "nytron/rng.hpp"

namespace nytron {

namespace {

bool is_gzip(const std::string& bytes) {
  return bytes.size() >= 2 && static_cast<unsigned char>(bytes[0]) == 0x1f &&
         static_cast<unsigned char>(bytes[1]) == 0x8b;
}

std::string gunzip(const std::string& in, const std::string& path) {
  z_stream zs;
  std::memset(&zs, 0, sizeof(zs));
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK)
    throw IoError("gzip: inflateInit failed for " + path);
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(in.data()));
  zs.avail_in = static_cast<uInt>(in.size());
  std::string out;
  char buf[1 << 16];
  int rc;
  do {
    zs.next_out = reinterpret_cast<Bytef*>(buf);
    zs.avail_out = sizeof(buf);
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw IoError("gzip: corrupt stream in " + path);
    }
    out.append(buf, sizeof(buf) - zs.avail_out);
  } while (rc != Z_STREAM_END);
  inflateEnd(&zs);
  return out;
}

[[noreturn]] void fail_line(std::size_t line_no, const std::string& what) {
  throw ParseError("line " + std::to_string(line_no) + ": " + what);
}

}  // namespace

std::string read_file_maybe_gzip(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string bytes = ss.str();
  if (is_gzip(bytes)) return gunzip(bytes, path);
  return bytes;
}

Dataset parse_dataset_text(const std::string& text, std::vector<std::string>* warnings) {
  Dataset ds;
  bool warned_labels = false;
  std::size_t line_no = 0;
  const char* p = text.c_str();
  while (*p) {
    ++line_no;
    const char* line_end = std::strchr(p, '\n');
    std::string line = line_end ? std::string(p, line_end) : std::string(p);
    p = line_end ? line_end + 1 : p + line.size();
    if (!line.empty() && line.back() == '\r') line.pop_back();

    std::size_t pos = line.find_first_not_of(" \t");
    if (pos == std::string::npos || line[pos] == '#') continue;

    const char* s = line.c_str() + pos;
    char* end = nullptr;
    const double raw_label = std::strtod(s, &end);
    if (end == s) fail_line(line_no, "missing label");
    int label;
    if (raw_label == 1.0 || raw_label == -1.0) {
      label = static_cast<int>(raw_label);
    } else if (raw_label == 0.0) {
      label = -1;
      if (!warned_labels && warnings) {
        warnings->push_back("labels {0,1} remapped to {-1,+1}");
        warned_labels = true;
      }
    } else {
      fail_line(line_no, "label must be +1, -1, 0 or 1");
    }

    SparseExample ex;
    ex.label = label;
    std::int32_t prev_idx = 0;
    s = end;
    while (true) {
      while (*s == ' ' || *s == '\t') ++s;
      if (*s == '\0') break;
      const long idx = std::strtol(s, &end, 10);
      if (end == s || *end != ':') fail_line(line_no, "expected index:value");
      if (idx < 1) fail_line(line_no, "feature indices are 1-based");
      if (idx <= prev_idx) fail_line(line_no, "feature indices must be strictly increasing");
      s = end + 1;
      const double v = std::strtod(s, &end);
      if (end == s) fail_line(line_no, "missing feature value");
      s = end;
      prev_idx = static_cast<std::int32_t>(idx);
      if (ds.dim < prev_idx) ds.dim = prev_idx;
      if (v != 0.0) {
        ex.x.idx.push_back(prev_idx - 1);  // store 0-based
        ex.x.val.push_back(v);
      }
    }
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

Dataset parse_dataset(const std::string& path, std::vector<std::string>* warnings) {
  try {
    return parse_dataset_text(read_file_maybe_gzip(path), warnings);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

std::string serialize_example(const SparseExample& ex) {
  std::string out = ex.label > 0 ? "+1" : "-1";
  char buf[64];
  for (std::size_t k = 0; k < ex.x.idx.size(); ++k) {
    std::snprintf(buf, sizeof(buf), " %d:%.17g", ex.x.idx[k] + 1, ex.x.val[k]);
    out += buf;
  }
  return out;
}

void write_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& ex : ds.examples) out << serialize_example(ex) << '\n';
}

std::vector<Shard> shard_random(const Dataset& ds, int p, std::uint64_t seed) {
  const std::size_t n = ds.size();
  if (p < 1) throw ConfigError("worker count must be >= 1");
  if (static_cast<std::size_t>(p) > n)
    throw ConfigError("worker count " + std::to_string(p) + " exceeds example count " +
                      std::to_string(n));
  Rng64 rng(seed);
  const std::vector<std::uint32_t> perm = random_permutation(static_cast<std::uint32_t>(n), rng);

  std::vector<Shard> shards(p);
  std::size_t offset = 0;
  for (int j = 0; j < p; ++j) {
    const std::size_t count = n / p + (static_cast<std::size_t>(j) < n % p ? 1 : 0);
    Shard& sh = shards[j];
    sh.worker_id = j;
    sh.examples.reserve(count);
    sh.global_ids.reserve(count);
    for (std::size_t t = 0; t < count; ++t) {
      const std::uint32_t gid = perm[offset + t];
      sh.examples.push_back(ds.examples[gid]);
      sh.global_ids.push_back(gid);
    }
    offset += count;
  }
  return shards;
}

std::string point_line(const SparseVec& v) {
  std::string out;
  char buf[64];
  for (std::size_t k = 0; k < v.nnz(); ++k) {
    std::snprintf(buf, sizeof(buf), "%s%d:%.17g", k ? " " : "", v.idx[k] + 1, v.val[k]);
    out += buf;
  }
  return out;
}

SparseVec parse_point_line(const std::string& line, std::size_t line_no) {
  SparseVec v;
  const char* s = line.c_str();
  std::int32_t prev = 0;
  while (true) {
    while (*s == ' ' || *s == '\t') ++s;
    if (*s == '\0' || *s == '\r') break;
    char* end = nullptr;
    const long idx = std::strtol(s, &end, 10);
    if (end == s || *end != ':')
      throw ParseError("line " + std::to_string(line_no) + ": expected index:value");
    if (idx < 1 || idx <= prev)
      throw ParseError("line " + std::to_string(line_no) + ": bad point index");
    s = end + 1;
    const double val = std::strtod(s, &end);
    if (end == s) throw ParseError("line " + std::to_string(line_no) + ": missing value");
    s = end;
    prev = static_cast<std::int32_t>(idx);
    if (val != 0.0) {
      v.idx.push_back(prev - 1);
      v.val.push_back(val);
    }
  }
  return v;
}

}  // namespace nytron
