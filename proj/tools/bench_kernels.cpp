// Times the serial and OpenMP matmul kernels on model-sized and larger
// shapes and checks that both give identical output.

#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#include "rldf/kernels.hpp"
#include "rldf/rng.hpp"

namespace k = rldf::kernels;

namespace {

using Kernel = std::function<void(std::span<const double>, std::span<const double>, std::span<double>,
                                  std::size_t, std::size_t, std::size_t)>;

double time_ms(const Kernel& f, std::span<const double> a, std::span<const double> b,
               std::span<double> c, std::size_t n, std::size_t kk, std::size_t m, int reps) {
    const auto t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < reps; ++r) f(a, b, c, n, kk, m);
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

}  // namespace

int main() {
    struct Shape {
        std::size_t n, k, m;
    };
    const Shape shapes[] = {{16, 64, 64}, {16, 64, 192}, {128, 64, 128}, {256, 256, 256}, {512, 512, 512}};
    std::printf("threads=%d\n", k::max_threads());
    std::printf("%-8s %5s %5s %5s %12s %12s %8s %s\n", "kernel", "n", "k", "m", "serial_ms", "omp_ms",
                "speedup", "equal");
    rldf::Rng rng(7);
    bool all_equal = true;
    for (const auto& s : shapes) {
        std::vector<double> a(s.n * s.k), b(s.k * s.m), bt(s.m * s.k), at_b(s.n * s.m);
        for (double& v : a) v = rng.normal();
        for (double& v : b) v = rng.normal();
        for (double& v : bt) v = rng.normal();
        for (double& v : at_b) v = rng.normal();
        const int reps = s.n * s.k * s.m > 10'000'000 ? 3 : 50;

        struct Case {
            const char* name;
            Kernel serial, parallel;
            std::span<const double> lhs, rhs;
            std::size_t out;
        };
        const Case cases[] = {
            {"matmul", k::serial::matmul, k::omp::matmul, a, b, s.n * s.m},
            {"mm_bt", k::serial::matmul_bt, k::omp::matmul_bt, a, bt, s.n * s.m},
            {"mm_at", k::serial::matmul_at_acc, k::omp::matmul_at_acc, a, at_b, s.k * s.m},
        };
        for (const auto& c : cases) {
            std::vector<double> c1(c.out, 0.0), c2(c.out, 0.0);
            // Every kernel reads its arguments as (rows, inner, outer) here.
            const std::size_t d2 = s.k, d3 = s.m;
            const double ts = time_ms(c.serial, c.lhs, c.rhs, c1, s.n, d2, d3, reps);
            const double tp = time_ms(c.parallel, c.lhs, c.rhs, c2, s.n, d2, d3, reps);
            std::fill(c1.begin(), c1.end(), 0.0);
            std::fill(c2.begin(), c2.end(), 0.0);
            c.serial(c.lhs, c.rhs, c1, s.n, d2, d3);
            c.parallel(c.lhs, c.rhs, c2, s.n, d2, d3);
            const bool eq = c1 == c2;
            all_equal = all_equal && eq;
            std::printf("%-8s %5zu %5zu %5zu %12.4f %12.4f %8.2f %s\n", c.name, s.n, d2, d3, ts, tp,
                        ts / tp, eq ? "yes" : "NO");
        }
    }
    return all_equal ? 0 : 1;
}
