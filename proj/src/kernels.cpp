#include "milab/kernels.hpp"

#include <vector>

namespace milab::kernels {

namespace {

constexpr std::size_t kParallelWork = 1u << 16;

inline double load(std::span<const double> x, Trans t, std::size_t rows,
                   std::size_t cols, std::size_t r, std::size_t c) {
  // (r, c) indexes op(x), which has shape rows x cols.
  return t == Trans::kNo ? x[r * cols + c] : x[c * rows + r];
}

// Row i of c += op(a) * op(b). Shared by both variants.
void gemm_row(Trans ta, Trans tb, std::size_t i, std::size_t m, std::size_t n,
              std::size_t k, std::span<const double> a,
              std::span<const double> b, std::span<double> c,
              std::vector<double>& acc) {
  acc.assign(n, 0.0);
  for (std::size_t l = 0; l < k; ++l) {
    const double a_il = load(a, ta, m, k, i, l);
    if (tb == Trans::kNo) {
      const double* b_row = b.data() + l * n;
      for (std::size_t j = 0; j < n; ++j) acc[j] += a_il * b_row[j];
    } else {
      for (std::size_t j = 0; j < n; ++j) acc[j] += a_il * b[j * k + l];
    }
  }
  double* c_row = c.data() + i * n;
  for (std::size_t j = 0; j < n; ++j) c_row[j] += acc[j];
}

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void gemm_serial(Trans ta, Trans tb, std::size_t m, std::size_t n,
                 std::size_t k, std::span<const double> a,
                 std::span<const double> b, std::span<double> c) {
  std::vector<double> acc;
  for (std::size_t i = 0; i < m; ++i) gemm_row(ta, tb, i, m, n, k, a, b, c, acc);
}

void gemm_parallel(Trans ta, Trans tb, std::size_t m, std::size_t n,
                   std::size_t k, std::span<const double> a,
                   std::span<const double> b, std::span<double> c) {
  const auto rows = static_cast<long long>(m);
#pragma omp parallel
  {
    std::vector<double> acc;
#pragma omp for schedule(static)
    for (long long i = 0; i < rows; ++i) {
      gemm_row(ta, tb, static_cast<std::size_t>(i), m, n, k, a, b, c, acc);
    }
  }
}

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k,
          std::span<const double> a, std::span<const double> b,
          std::span<double> c) {
  if (m > 1 && m * n * k >= kParallelWork && max_threads() > 1) {
    gemm_parallel(ta, tb, m, n, k, a, b, c);
  } else {
    gemm_serial(ta, tb, m, n, k, a, b, c);
  }
}

}  // namespace milab::kernels
