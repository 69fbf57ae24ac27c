#pragma once

#include <cstddef>
#include <vector>

namespace nytron::par {

// Scalar accumulations are chunked at fixed boundaries so the summation tree
// does not depend on thread count: the OpenMP and serial paths are bitwise
// identical, and results are reproducible across machines.
inline constexpr std::size_t kChunk = 2048;

inline std::size_t chunk_count(std::size_t n) { return n == 0 ? 0 : (n - 1) / kChunk + 1; }

// out[i] = dot(M[i,:], x); M is r x c row-major.
void matvec_rows(const double* m, std::size_t r, std::size_t c, const double* x, double* out);

// out[j] += sum_i z[i] * M[i][j]; each out entry is accumulated serially in
// row order, so the result does not depend on how columns are split.
void matvec_trans_add(const double* m, std::size_t r, std::size_t c, const double* z, double* out);

// sum_i f(i) with fixed-chunk accumulation; Term is double(std::size_t).
template <class Term>
double chunked_sum(std::size_t n, const Term& term);

namespace serial {
void matvec_rows(const double* m, std::size_t r, std::size_t c, const double* x, double* out);
void matvec_trans_add(const double* m, std::size_t r, std::size_t c, const double* z, double* out);
template <class Term>
double chunked_sum(std::size_t n, const Term& term);
}  // namespace serial

namespace detail {
template <class Term>
double sum_chunk(std::size_t begin, std::size_t end, const Term& term) {
  double s = 0.0;
  for (std::size_t i = begin; i < end; ++i) s += term(i);
  return s;
}

inline double fold_chunks(const std::vector<double>& parts) {
  double s = 0.0;
  for (double v : parts) s += v;
  return s;
}
}  // namespace detail

template <class Term>
double chunked_sum(std::size_t n, const Term& term) {
  const std::size_t nc = chunk_count(n);
  std::vector<double> parts(nc);
#pragma omp parallel for schedule(static)
  for (std::size_t c = 0; c < nc; ++c) {
    const std::size_t begin = c * kChunk;
    const std::size_t end = begin + kChunk < n ? begin + kChunk : n;
    parts[c] = detail::sum_chunk(begin, end, term);
  }
  return detail::fold_chunks(parts);
}

template <class Term>
double serial::chunked_sum(std::size_t n, const Term& term) {
  const std::size_t nc = chunk_count(n);
  std::vector<double> parts(nc);
  for (std::size_t c = 0; c < nc; ++c) {
    const std::size_t begin = c * kChunk;
    const std::size_t end = begin + kChunk < n ? begin + kChunk : n;
    parts[c] = detail::sum_chunk(begin, end, term);
  }
  return detail::fold_chunks(parts);
}

}  // namespace nytron::par
