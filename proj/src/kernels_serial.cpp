#include "forge/kernels.hpp"

#include <cmath>

namespace forge::kernels::serial {

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, double alpha,
          std::span<const double> a, std::span<const double> b, double beta, std::span<double> c) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) {
                const double av = ta == Trans::No ? a[i * k + p] : a[p * m + i];
                const double bv = tb == Trans::No ? b[p * n + j] : b[j * k + p];
                acc += av * bv;
            }
            c[i * n + j] = alpha * acc + (beta == 0.0 ? 0.0 : beta * c[i * n + j]);
        }
    }
}

void gram(std::size_t channels, std::size_t locations, std::span<const double> f,
          std::span<double> out) {
    const double scale = 1.0 / static_cast<double>(channels * locations);
    for (std::size_t i = 0; i < channels; ++i) {
        for (std::size_t j = 0; j < channels; ++j) {
            double acc = 0.0;
            for (std::size_t l = 0; l < locations; ++l) acc += f[i * locations + l] * f[j * locations + l];
            out[i * channels + j] = acc * scale;
        }
    }
}

void cosine_rows(std::size_t n, std::size_t dim, std::span<const double> query,
                 std::span<const double> rows, std::span<double> out) {
    double qq = 0.0;
    for (std::size_t d = 0; d < dim; ++d) qq += query[d] * query[d];
    for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0;
        double rr = 0.0;
        for (std::size_t d = 0; d < dim; ++d) {
            dot += query[d] * rows[i * dim + d];
            rr += rows[i * dim + d] * rows[i * dim + d];
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
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t y = 0; y < gh; ++y) {
            for (std::size_t x = 0; x < gw; ++x) {
                double acc = 0.0;
                std::size_t idx = 0;
                for (std::size_t py = 0; py < patch; ++py) {
                    for (std::size_t px = 0; px < patch; ++px) {
                        const std::size_t base = ((y * patch + py) * width + (x * patch + px)) * in_channels;
                        for (std::size_t ch = 0; ch < in_channels; ++ch) acc += weights[c * k + idx++] * image[base + ch];
                    }
                }
                out[(c * gh + y) * gw + x] = acc;
            }
        }
    }
}

} // namespace forge::kernels::serial
