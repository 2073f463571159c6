// Timing comparison between the OpenMP kernels and their serial reference
// implementations. Build target only; not part of the test suite.

#include <cstdio>
#include <functional>

#ifdef _OPENMP
#include <omp.h>
#endif
#include <chrono>

#include "cdt/kernels.hpp"
#include "cdt/rng.hpp"

using cdt::Matrix;
namespace k = cdt::kernels;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, cdt::RngStream& rng) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1.0, 1.0);
    return m;
}

double time_seconds(const std::function<void()>& fn, int reps) {
    fn();  // warm up
    const auto t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < reps; ++r) fn();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double>(t1 - t0).count() / reps;
}

void bench_matmul(std::size_t m, std::size_t n, std::size_t p, int reps) {
    cdt::RngStream rng(42);
    Matrix a = random_matrix(m, n, rng);
    Matrix b = random_matrix(n, p, rng);
    const double flops = 2.0 * static_cast<double>(m) * n * p;
    double sink = 0.0;
    const double ts = time_seconds([&] { sink += k::serial::matmul(a, b)(0, 0); }, reps);
    const double tp = time_seconds([&] { sink += k::matmul(a, b)(0, 0); }, reps);
    if (sink == 12345.6789) std::printf("unlikely\n");
    std::printf("matmul %4zux%4zux%4zu  serial %8.2f ms (%6.2f GF/s)  parallel %8.2f ms "
                "(%6.2f GF/s)  speedup %.2fx\n",
                m, n, p, ts * 1e3, flops / ts * 1e-9, tp * 1e3, flops / tp * 1e-9, ts / tp);
}

void bench_softmax(std::size_t rows, std::size_t cols, int reps) {
    cdt::RngStream rng(7);
    Matrix base = random_matrix(rows, cols, rng);
    const double ts = time_seconds(
        [&] {
            Matrix m = base;
            k::serial::row_softmax_inplace(m);
        },
        reps);
    const double tp = time_seconds(
        [&] {
            Matrix m = base;
            k::row_softmax_inplace(m);
        },
        reps);
    std::printf("row_softmax %4zux%4zu     serial %8.2f ms             parallel %8.2f ms"
                "             speedup %.2fx\n",
                rows, cols, ts * 1e3, tp * 1e3, ts / tp);
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("OpenMP enabled, max threads: %d\n", omp_get_max_threads());
#else
    std::printf("OpenMP disabled; both columns run serial code\n");
#endif
    bench_matmul(256, 256, 256, 5);
    bench_matmul(512, 512, 512, 3);
    bench_matmul(896, 3072, 768, 1);   // DNA projection shape
    bench_matmul(2360, 768, 768, 1);   // gene-modality attention projection shape
    bench_softmax(896, 896, 5);
    bench_softmax(2360, 896, 3);
    return 0;
}
