#include "forge/kernels.hpp"

#include <cmath>
#include <cstdint>

namespace forge::kernels {

// Parallel over output rows; the k-loop is hoisted so the inner j-loop is
// contiguous in both B (when not transposed) and C.
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, double alpha,
          std::span<const double> a, std::span<const double> b, double beta, std::span<double> c) {
    const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static) if (m * n * k > 32768)
    for (std::int64_t ii = 0; ii < rows; ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        double* crow = c.data() + i * n;
        if (beta == 0.0) {
            for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
        } else if (beta != 1.0) {
            for (std::size_t j = 0; j < n; ++j) crow[j] *= beta;
        }
        if (tb == Trans::No) {
            for (std::size_t p = 0; p < k; ++p) {
                const double av = alpha * (ta == Trans::No ? a[i * k + p] : a[p * m + i]);
                if (av == 0.0) continue;
                const double* brow = b.data() + p * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        } else {
            for (std::size_t j = 0; j < n; ++j) {
                const double* brow = b.data() + j * k;
                double acc = 0.0;
                if (ta == Trans::No) {
                    const double* arow = a.data() + i * k;
                    for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
                } else {
                    for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * brow[p];
                }
                crow[j] += alpha * acc;
            }
        }
    }
}

void gram(std::size_t channels, std::size_t locations, std::span<const double> f,
          std::span<double> out) {
    const double scale = 1.0 / static_cast<double>(channels * locations);
    const auto ch = static_cast<std::int64_t>(channels);
#pragma omp parallel for schedule(dynamic) if (channels * channels * locations > 32768)
    for (std::int64_t ii = 0; ii < ch; ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        const double* fi = f.data() + i * locations;
        for (std::size_t j = i; j < channels; ++j) {
            const double* fj = f.data() + j * locations;
            double acc = 0.0;
            for (std::size_t l = 0; l < locations; ++l) acc += fi[l] * fj[l];
            out[i * channels + j] = acc * scale;
            out[j * channels + i] = acc * scale;
        }
    }
}

void cosine_rows(std::size_t n, std::size_t dim, std::span<const double> query,
                 std::span<const double> rows, std::span<double> out) {
    double qq = 0.0;
    for (std::size_t d = 0; d < dim; ++d) qq += query[d] * query[d];
    const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static) if (n * dim > 16384)
    for (std::int64_t ii = 0; ii < count; ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        const double* r = rows.data() + i * dim;
        double dot = 0.0;
        double rr = 0.0;
        for (std::size_t d = 0; d < dim; ++d) {
            dot += query[d] * r[d];
            rr += r[d] * r[d];
        }
        out[i] = (qq == 0.0 || rr == 0.0) ? 0.0 : dot / (std::sqrt(qq) * std::sqrt(rr));
    }
}

void patch_project(std::size_t height, std::size_t width, std::size_t in_channels, std::size_t patch,
                   std::size_t channels,
                   std::span<const double> image, std::span<const double> weights,
                   std::span<double> out) {
    const std::size_t gh = height / patch;
    const std::size_t gw = width / patch;
    const std::size_t k = patch * patch * in_channels;
    const auto cells = static_cast<std::int64_t>(gh * gw);
#pragma omp parallel for schedule(static) if (gh * gw * k * channels > 32768)
    for (std::int64_t cell = 0; cell < cells; ++cell) {
        const std::size_t y = static_cast<std::size_t>(cell) / gw;
        const std::size_t x = static_cast<std::size_t>(cell) % gw;
        for (std::size_t c = 0; c < channels; ++c) {
            const double* w = weights.data() + c * k;
            double acc = 0.0;
            std::size_t idx = 0;
            for (std::size_t py = 0; py < patch; ++py) {
                const double* row = image.data() + ((y * patch + py) * width + x * patch) * in_channels;
                for (std::size_t q = 0; q < patch * in_channels; ++q) acc += w[idx++] * row[q];
            }
            out[(c * gh + y) * gw + x] = acc;
        }
    }
}

} // namespace forge::kernels
