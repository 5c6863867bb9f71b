// OpenMP kernels vs their serial references. Every benchmark takes the
// problem size as its first argument and a 0/1 flag selecting serial/omp.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "forge/kernels.hpp"

namespace k = forge::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, unsigned seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> dist;
    std::vector<double> v(n);
    for (auto& x : v) x = dist(gen);
    return v;
}

bool use_omp(const benchmark::State& s) { return s.range(1) != 0; }

void label(benchmark::State& s) { s.SetLabel(use_omp(s) ? "omp" : "serial"); }

void BM_gemm(benchmark::State& s) {
    const auto n = static_cast<std::size_t>(s.range(0));
    const auto a = random_vec(n * n, 1), b = random_vec(n * n, 2);
    std::vector<double> c(n * n);
    for (auto _ : s) {
        if (use_omp(s))
            k::gemm(k::Trans::No, k::Trans::No, n, n, n, 1.0, a, b, 0.0, c);
        else
            k::serial::gemm(k::Trans::No, k::Trans::No, n, n, n, 1.0, a, b, 0.0, c);
        benchmark::DoNotOptimize(c.data());
    }
    s.SetItemsProcessed(s.iterations() * static_cast<std::int64_t>(2 * n * n * n));
    label(s);
}

// Feature maps shaped like a mid-level conv layer: range(0) channels, 64x64 locations.
void BM_gram(benchmark::State& s) {
    const auto c = static_cast<std::size_t>(s.range(0));
    const std::size_t l = 64 * 64;
    const auto f = random_vec(c * l, 3);
    std::vector<double> out(c * c);
    for (auto _ : s) {
        if (use_omp(s))
            k::gram(c, l, f, out);
        else
            k::serial::gram(c, l, f, out);
        benchmark::DoNotOptimize(out.data());
    }
    label(s);
}

// Reference search: range(0) pool embeddings of width 512.
void BM_cosine_rows(benchmark::State& s) {
    const auto n = static_cast<std::size_t>(s.range(0));
    const std::size_t dim = 512;
    const auto q = random_vec(dim, 4), rows = random_vec(n * dim, 5);
    std::vector<double> out(n);
    for (auto _ : s) {
        if (use_omp(s))
            k::cosine_rows(n, dim, q, rows, out);
        else
            k::serial::cosine_rows(n, dim, q, rows, out);
        benchmark::DoNotOptimize(out.data());
    }
    label(s);
}

// Encoder stem: range(0) x range(0) RGB image, 8x8 patches, 32 channels.
void BM_patch_project(benchmark::State& s) {
    const auto side = static_cast<std::size_t>(s.range(0));
    const std::size_t patch = 8, ch = 32;
    const auto img = random_vec(side * side * 3, 6), w = random_vec(ch * patch * patch * 3, 7);
    std::vector<double> out(ch * (side / patch) * (side / patch));
    for (auto _ : s) {
        if (use_omp(s))
            k::patch_project(side, side, 3, patch, ch, img, w, out);
        else
            k::serial::patch_project(side, side, 3, patch, ch, img, w, out);
        benchmark::DoNotOptimize(out.data());
    }
    label(s);
}

} // namespace

BENCHMARK(BM_gemm)->ArgsProduct({{64, 128, 256}, {0, 1}})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_gram)->ArgsProduct({{16, 64, 128}, {0, 1}})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_cosine_rows)->ArgsProduct({{1000, 20000}, {0, 1}})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_patch_project)->ArgsProduct({{256, 1024}, {0, 1}})->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
