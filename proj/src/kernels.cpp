#include "neurozip/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace neurozip::kernels {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = std::size_t{1} << 15;

std::atomic<int> g_max_threads{0};

int runtime_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace

void set_max_threads(int threads) {
  g_max_threads.store(threads > 0 ? threads : 0);
#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#endif
}

int max_threads() {
  const int cap = g_max_threads.load();
  return cap > 0 ? cap : runtime_threads();
}

int resolve_threads(int requested) {
  const int cap = max_threads();
  if (requested <= 0) return cap;
  return std::min(requested, cap);
}

void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& body) {
  const int nthreads = resolve_threads(threads);
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto guarded = [&](std::size_t i) {
    try {
      body(i);
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  };
#ifdef _OPENMP
  const auto n = static_cast<std::ptrdiff_t>(count);
#pragma omp parallel for num_threads(nthreads) schedule(dynamic, 1) if (nthreads > 1 && count > 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) guarded(static_cast<std::size_t>(i));
#else
  (void)nthreads;
  for (std::size_t i = 0; i < count; ++i) guarded(i);
#endif
  if (failure) std::rethrow_exception(failure);
}

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t n, std::size_t k, std::size_t m) {
  const double* __restrict pa = a.data();
  const double* __restrict pb = b.data();
  double* __restrict pc = c.data();
  const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (n * k * m > kParallelWork)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* crow = pc + i * m;
    std::fill(crow, crow + m, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = pa[i * k + p];
      const double* brow = pb + p * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += aip * brow[j];
    }
  }
}

void matmul_tn_add(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t n, std::size_t k, std::size_t m) {
  const double* __restrict pa = a.data();
  const double* __restrict pb = b.data();
  double* __restrict pc = c.data();
  const auto out_rows = static_cast<std::ptrdiff_t>(k);
#pragma omp parallel for schedule(static) if (n * k * m > kParallelWork)
  for (std::ptrdiff_t pp = 0; pp < out_rows; ++pp) {
    const auto p = static_cast<std::size_t>(pp);
    double* crow = pc + p * m;
    for (std::size_t i = 0; i < n; ++i) {
      const double aip = pa[i * k + p];
      const double* brow = pb + i * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += aip * brow[j];
    }
  }
}

void matmul_nt_add(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t n, std::size_t m, std::size_t k) {
  const double* __restrict pa = a.data();
  const double* __restrict pb = b.data();
  double* __restrict pc = c.data();
  const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (n * k * m > kParallelWork)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double* arow = pa + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = pb + p * m;
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) s += arow[j] * brow[j];
      pc[i * k + p] += s;
    }
  }
}

void map(std::span<const double> in, std::span<double> out, double (*fn)(double)) {
  const auto n = static_cast<std::ptrdiff_t>(in.size());
#pragma omp parallel for schedule(static) if (in.size() > kParallelWork)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = fn(in[static_cast<std::size_t>(i)]);
}

namespace serial {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t n, std::size_t k, std::size_t m) {
  std::fill(c.begin(), c.end(), 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t j = 0; j < m; ++j) c[i * m + j] += a[i * k + p] * b[p * m + j];
}

void matmul_tn_add(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t j = 0; j < m; ++j) c[p * m + j] += a[i * k + p] * b[i * m + j];
}

void matmul_nt_add(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t n, std::size_t m, std::size_t k) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) s += a[i * m + j] * b[p * m + j];
      c[i * k + p] += s;
    }
  }
}

void map(std::span<const double> in, std::span<double> out, double (*fn)(double)) {
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fn(in[i]);
}

}  // namespace serial

}  // namespace neurozip::kernels
