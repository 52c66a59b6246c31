#pragma once

// Dense row-major kernels used by the denoiser's forward and backward passes.
//
// Two implementations share one contract:
//   serial::  straightforward loops, kept as the reference for tests
//   omp::     OpenMP-parallel over output rows
// Each output element is produced by exactly one thread with the same
// summation order as the serial path, so both give bit-identical results.
// The unqualified functions in rldf::kernels dispatch to omp::.

#include <cstddef>
#include <span>

namespace rldf::kernels {

namespace serial {

// c[n,m] = a[n,k] * b[k,m]
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t n, std::size_t k, std::size_t m);

// c[n,k] = a[n,m] * b[k,m]^T
void matmul_bt(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t n, std::size_t m, std::size_t k);

// c[k,m] += a[n,k]^T * b[n,m]
void matmul_at_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t n, std::size_t k, std::size_t m);

}  // namespace serial

namespace omp {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t n, std::size_t k, std::size_t m);
void matmul_bt(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t n, std::size_t m, std::size_t k);
void matmul_at_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t n, std::size_t k, std::size_t m);

}  // namespace omp

inline void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t n, std::size_t k, std::size_t m) {
    omp::matmul(a, b, c, n, k, m);
}

inline void matmul_bt(std::span<const double> a, std::span<const double> b, std::span<double> c,
                      std::size_t n, std::size_t m, std::size_t k) {
    omp::matmul_bt(a, b, c, n, m, k);
}

inline void matmul_at_acc(std::span<const double> a, std::span<const double> b,
                          std::span<double> c, std::size_t n, std::size_t k, std::size_t m) {
    omp::matmul_at_acc(a, b, c, n, k, m);
}

// Number of threads the omp:: kernels would use (1 when built without OpenMP).
int max_threads();

}  // namespace rldf::kernels
