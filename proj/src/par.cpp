#include "nytron/par.hpp"

namespace nytron::par {

namespace {

inline double dot_row(const double* row, const double* x, std::size_t c) {
  double s = 0.0;
  for (std::size_t j = 0; j < c; ++j) s += row[j] * x[j];
  return s;
}

// Accumulates columns [j0, j1) over all rows in ascending row order.
inline void trans_cols(const double* m, std::size_t r, std::size_t c, const double* z, double* out,
                       std::size_t j0, std::size_t j1) {
  for (std::size_t i = 0; i < r; ++i) {
    const double zi = z[i];
    if (zi == 0.0) continue;
    const double* row = m + i * c;
    for (std::size_t j = j0; j < j1; ++j) out[j] += zi * row[j];
  }
}

inline constexpr std::size_t kColBlock = 256;

}  // namespace

void matvec_rows(const double* m, std::size_t r, std::size_t c, const double* x, double* out) {
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < r; ++i) out[i] = dot_row(m + i * c, x, c);
}

void serial::matvec_rows(const double* m, std::size_t r, std::size_t c, const double* x,
                         double* out) {
  for (std::size_t i = 0; i < r; ++i) out[i] = dot_row(m + i * c, x, c);
}

void matvec_trans_add(const double* m, std::size_t r, std::size_t c, const double* z, double* out) {
  const std::size_t nblocks = c == 0 ? 0 : (c - 1) / kColBlock + 1;
#pragma omp parallel for schedule(static)
  for (std::size_t b = 0; b < nblocks; ++b) {
    const std::size_t j0 = b * kColBlock;
    const std::size_t j1 = j0 + kColBlock < c ? j0 + kColBlock : c;
    trans_cols(m, r, c, z, out, j0, j1);
  }
}

void serial::matvec_trans_add(const double* m, std::size_t r, std::size_t c, const double* z,
                              double* out) {
  const std::size_t nblocks = c == 0 ? 0 : (c - 1) / kColBlock + 1;
  for (std::size_t b = 0; b < nblocks; ++b) {
    const std::size_t j0 = b * kColBlock;
    const std::size_t j1 = j0 + kColBlock < c ? j0 + kColBlock : c;
    trans_cols(m, r, c, z, out, j0, j1);
  }
}

}  // namespace nytron::par
