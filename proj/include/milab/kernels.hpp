#pragma once

// Numeric kernels with a serial reference and an OpenMP variant. Both
// variants visit each output element with the same floating-point operation
// order, so their results are bit-identical; tests rely on this.

#include <cstddef>
#include <exception>
#include <span>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace milab::kernels {

enum class Exec { kSerial, kParallel };

enum class Trans { kNo, kYes };

// Corresponds to omp_get_max_threads(); 1 without OpenMP.
int max_threads();

// c[m x n] += op(a) * op(b), with op(a) of shape m x k and op(b) k x n.
// a and b are row-major in their stored (untransposed) layout.
void gemm_serial(Trans ta, Trans tb, std::size_t m, std::size_t n,
                 std::size_t k, std::span<const double> a,
                 std::span<const double> b, std::span<double> c);
void gemm_parallel(Trans ta, Trans tb, std::size_t m, std::size_t n,
                   std::size_t k, std::span<const double> a,
                   std::span<const double> b, std::span<double> c);

// Picks the parallel kernel once m*n*k exceeds a work threshold.
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k,
          std::span<const double> a, std::span<const double> b,
          std::span<double> c);

// Runs fn(i) for i in [0, n). Iterations must be independent; callers that
// reduce across iterations write into per-index slots and reduce serially.
template <class Fn>
void for_each_index(std::size_t n, Exec exec, Fn&& fn) {
  if (exec == Exec::kSerial) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  // Exceptions cannot cross the parallel region; keep the one from the lowest
  // index so the error matches what the serial loop would raise.
  std::vector<std::exception_ptr> errors(n);
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic)
  for (long long i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace milab::kernels
