#include <doctest.h>

#include <cmath>
#include <vector>

#include "forge/common/rng.hpp"
#include "forge/kernels.hpp"

using namespace forge;
namespace k = forge::kernels;

namespace {

std::vector<double> randn(std::size_t n, std::uint64_t seed) {
    SplitMix64 rng(seed);
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

} // namespace

TEST_CASE("gemm matches the serial reference for every transpose combination") {
    const std::size_t m = 37, n = 29, kk = 41;
    for (auto ta : {k::Trans::No, k::Trans::Yes}) {
        for (auto tb : {k::Trans::No, k::Trans::Yes}) {
            const auto a = randn(m * kk, 1);
            const auto b = randn(kk * n, 2);
            auto c1 = randn(m * n, 3);
            auto c2 = c1;
            k::gemm(ta, tb, m, n, kk, 0.7, a, b, 0.3, c1);
            k::serial::gemm(ta, tb, m, n, kk, 0.7, a, b, 0.3, c2);
            CHECK(max_abs_diff(c1, c2) < 1e-12);
        }
    }
}

TEST_CASE("gemm on a 2x2 hand case") {
    const std::vector<double> a{1, 2, 3, 4}, b{5, 6, 7, 8};
    std::vector<double> c(4, 0.0);
    k::gemm(k::Trans::No, k::Trans::No, 2, 2, 2, 1.0, a, b, 0.0, c);
    CHECK(c == std::vector<double>{19, 22, 43, 50});
    k::gemm(k::Trans::Yes, k::Trans::No, 2, 2, 2, 1.0, a, b, 0.0, c);
    CHECK(c == std::vector<double>{26, 30, 38, 44});
}

TEST_CASE("large gemm crosses the parallel threshold and still agrees") {
    const std::size_t m = 128, n = 96, kk = 80;
    const auto a = randn(m * kk, 4);
    const auto b = randn(kk * n, 5);
    std::vector<double> c1(m * n), c2(m * n);
    k::gemm(k::Trans::No, k::Trans::No, m, n, kk, 1.0, a, b, 0.0, c1);
    k::serial::gemm(k::Trans::No, k::Trans::No, m, n, kk, 1.0, a, b, 0.0, c2);
    CHECK(max_abs_diff(c1, c2) < 1e-10);
}

TEST_CASE("gram agrees with the serial reference and is symmetric") {
    const std::size_t c = 24, l = 300;
    const auto f = randn(c * l, 7);
    std::vector<double> g1(c * c), g2(c * c);
    k::gram(c, l, f, g1);
    k::serial::gram(c, l, f, g2);
    CHECK(max_abs_diff(g1, g2) < 1e-12);
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = 0; j < c; ++j) CHECK(g1[i * c + j] == doctest::Approx(g1[j * c + i]).epsilon(1e-14));
}

TEST_CASE("gram normalizes by channels times locations") {
    const std::vector<double> f{1, 0, 0, 1};
    std::vector<double> g(4);
    k::gram(2, 2, f, g);
    CHECK(g == std::vector<double>{0.25, 0.0, 0.0, 0.25});
}

TEST_CASE("cosine_rows agrees with the serial reference and zero rows give 0") {
    const std::size_t n = 200, d = 33;
    auto rows = randn(n * d, 8);
    for (std::size_t j = 0; j < d; ++j) rows[5 * d + j] = 0.0;
    const auto q = randn(d, 9);
    std::vector<double> o1(n), o2(n);
    k::cosine_rows(n, d, q, rows, o1);
    k::serial::cosine_rows(n, d, q, rows, o2);
    CHECK(max_abs_diff(o1, o2) < 1e-12);
    CHECK(o1[5] == 0.0);
    for (double v : o1) {
        CHECK(v >= -1.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("patch_project agrees with the serial reference") {
    for (std::size_t in_ch : {3u, 8u}) {
        const std::size_t h = 32, w = 48, p = 4, ch = 6;
        const auto img = randn(h * w * in_ch, 10 + in_ch);
        const auto wts = randn(ch * p * p * in_ch, 11);
        std::vector<double> o1(ch * (h / p) * (w / p)), o2(o1.size());
        k::patch_project(h, w, in_ch, p, ch, img, wts, o1);
        k::serial::patch_project(h, w, in_ch, p, ch, img, wts, o2);
        CHECK(max_abs_diff(o1, o2) < 1e-12);
    }
}

TEST_CASE("patch_project on a single patch is a dot product") {
    // 2x2 image, 1 input channel, one 2x2 patch.
    const std::vector<double> img{1, 2, 3, 4}, wts{1, 10, 100, 1000};
    std::vector<double> out(1);
    k::patch_project(2, 2, 1, 2, 1, img, wts, out);
    CHECK(out[0] == 4321.0);
}
