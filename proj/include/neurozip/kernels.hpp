#pragma once

#include <cstddef>
#include <functional>
#include <span>

namespace neurozip::kernels {

// Dense row-major products used by the autodiff tape.
//
// The OpenMP versions partition work by output row. Every output element is
// accumulated over the same index sequence as in the serial reference, so the
// two produce bit-identical results for any thread count.

/// c (n x m) = a (n x k) * b (k x m)
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t n, std::size_t k, std::size_t m);

/// c (k x m) += a^T * b, with a (n x k) and b (n x m)
void matmul_tn_add(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t n, std::size_t k, std::size_t m);

/// c (n x k) += a * b^T, with a (n x m) and b (k x m)
void matmul_nt_add(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t n, std::size_t m, std::size_t k);

/// out[i] = fn(in[i]); parallel above a size threshold.
void map(std::span<const double> in, std::span<double> out, double (*fn)(double));

/// Upper bound on threads used by the parallel kernels and the per-trajectory
/// loops. Zero or negative means "runtime default".
void set_max_threads(int threads);
int max_threads();

/// Resolves a requested thread count (<= 0 means default) against max_threads().
int resolve_threads(int requested);

/// Runs body(i) for i in [0, count) across `threads` workers. Iterations must be
/// independent; results must be written to per-index slots.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& body);

namespace serial {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t n, std::size_t k, std::size_t m);
void matmul_tn_add(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t n, std::size_t k, std::size_t m);
void matmul_nt_add(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t n, std::size_t m, std::size_t k);
void map(std::span<const double> in, std::span<double> out, double (*fn)(double));

}  // namespace serial

}  // namespace neurozip::kernels
