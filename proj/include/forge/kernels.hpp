#pragma once

// Dense numeric kernels. Each kernel has an OpenMP implementation in
// forge::kernels and a plain-loop reference in forge::kernels::serial with
// the same signature; tests check them against each other and bench/
// times them side by side.

#include <cstddef>
#include <span>

namespace forge::kernels {

enum class Trans { No, Yes };

/// C = alpha * op(A) * op(B) + beta * C, row-major.
/// op(A) is m x k, op(B) is k x n, C is m x n.
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, double alpha,
          std::span<const double> a, std::span<const double> b, double beta, std::span<double> c);

/// Gram matrix of a channels x locations feature map, scaled by
/// 1 / (channels * locations). Output is channels x channels.
void gram(std::size_t channels, std::size_t locations, std::span<const double> features,
          std::span<double> out);

/// Cosine similarity of `query` against each row of `rows` (n x dim).
/// Zero-norm rows yield 0.
void cosine_rows(std::size_t n, std::size_t dim, std::span<const double> query,
                 std::span<const double> rows, std::span<double> out);

/// Strided patch projection: image is height x width x in_channels
/// (interleaved), weights is channels x (patch*patch*in_channels). Output is channels x (height/patch)
/// x (width/patch), channel-major.
void patch_project(std::size_t height, std::size_t width, std::size_t in_channels, std::size_t patch,
                   std::size_t channels,
                   std::span<const double> image, std::span<const double> weights,
                   std::span<double> out);

namespace serial {

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, double alpha,
          std::span<const double> a, std::span<const double> b, double beta, std::span<double> c);
void gram(std::size_t channels, std::size_t locations, std::span<const double> features,
          std::span<double> out);
void cosine_rows(std::size_t n, std::size_t dim, std::span<const double> query,
                 std::span<const double> rows, std::span<double> out);
void patch_project(std::size_t height, std::size_t width, std::size_t in_channels, std::size_t patch,
                   std::size_t channels,
                   std::span<const double> image, std::span<const double> weights,
                   std::span<double> out);

} // namespace serial

} // namespace forge::kernels
