#include "rldf/kernels.hpp"

#include <cassert>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace rldf::kernels {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 16;

inline void matmul_row(const double* a_row, const double* b, double* c_row, std::size_t k,
                       std::size_t m) {
    for (std::size_t j = 0; j < m; ++j) c_row[j] = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
        const double av = a_row[p];
        const double* b_row = b + p * m;
        for (std::size_t j = 0; j < m; ++j) c_row[j] += av * b_row[j];
    }
}

inline void matmul_bt_row(const double* a_row, const double* b, double* c_row, std::size_t m,
                          std::size_t k) {
    for (std::size_t j = 0; j < k; ++j) {
        const double* b_row = b + j * m;
        double s = 0.0;
        for (std::size_t p = 0; p < m; ++p) s += a_row[p] * b_row[p];
        c_row[j] = s;
    }
}

// Row p of c += sum_i a[i,p] * b[i,:]
inline void matmul_at_row(const double* a, const double* b, double* c_row, std::size_t n,
                          std::size_t k, std::size_t m, std::size_t p) {
    for (std::size_t i = 0; i < n; ++i) {
        const double av = a[i * k + p];
        if (av == 0.0) continue;
        const double* b_row = b + i * m;
        for (std::size_t j = 0; j < m; ++j) c_row[j] += av * b_row[j];
    }
}

}  // namespace

namespace serial {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t n, std::size_t k, std::size_t m) {
    assert(a.size() >= n * k && b.size() >= k * m && c.size() >= n * m);
    for (std::size_t i = 0; i < n; ++i) matmul_row(a.data() + i * k, b.data(), c.data() + i * m, k, m);
}

void matmul_bt(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t n, std::size_t m, std::size_t k) {
    assert(a.size() >= n * m && b.size() >= k * m && c.size() >= n * k);
    for (std::size_t i = 0; i < n; ++i) matmul_bt_row(a.data() + i * m, b.data(), c.data() + i * k, m, k);
}

void matmul_at_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t n, std::size_t k, std::size_t m) {
    assert(a.size() >= n * k && b.size() >= n * m && c.size() >= k * m);
    for (std::size_t p = 0; p < k; ++p) matmul_at_row(a.data(), b.data(), c.data() + p * m, n, k, m, p);
}

}  // namespace serial

namespace omp {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t n, std::size_t k, std::size_t m) {
    assert(a.size() >= n * k && b.size() >= k * m && c.size() >= n * m);
    const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (n * k * m >= kParallelWork)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        const auto r = static_cast<std::size_t>(i);
        matmul_row(a.data() + r * k, b.data(), c.data() + r * m, k, m);
    }
}

void matmul_bt(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t n, std::size_t m, std::size_t k) {
    assert(a.size() >= n * m && b.size() >= k * m && c.size() >= n * k);
    const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (n * k * m >= kParallelWork)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        const auto r = static_cast<std::size_t>(i);
        matmul_bt_row(a.data() + r * m, b.data(), c.data() + r * k, m, k);
    }
}

void matmul_at_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t n, std::size_t k, std::size_t m) {
    assert(a.size() >= n * k && b.size() >= n * m && c.size() >= k * m);
    const auto rows = static_cast<std::ptrdiff_t>(k);
#pragma omp parallel for schedule(static) if (n * k * m >= kParallelWork)
    for (std::ptrdiff_t p = 0; p < rows; ++p) {
        const auto r = static_cast<std::size_t>(p);
        matmul_at_row(a.data(), b.data(), c.data() + r * m, n, k, m, r);
    }
}

}  // namespace omp

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

}  // namespace rldf::kernels
