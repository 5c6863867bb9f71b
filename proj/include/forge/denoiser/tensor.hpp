#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace forge::denoiser {

/// Dense row-major matrix of doubles.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    bool operator==(const Matrix&) const = default;
};

/// Rows [offset, offset + count) as a new matrix.
Matrix slice_rows(const Matrix& m, std::size_t offset, std::size_t count);

/// Latent feature grid, channel-major (c, y, x).
struct LatentGrid {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> values;

    LatentGrid() = default;
    LatentGrid(int c, int h, int w)
        : channels(c), height(h), width(w), values(static_cast<std::size_t>(c) * h * w, 0.0) {}

    std::size_t tokens() const { return static_cast<std::size_t>(height) * width; }
    double& at(int c, int y, int x) { return values[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    double at(int c, int y, int x) const { return values[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    bool same_shape(const LatentGrid& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }
    bool all_finite() const;

    bool operator==(const LatentGrid&) const = default;
};

/// One token per spatial location, token width = channels.
Matrix grid_to_tokens(const LatentGrid& g);
LatentGrid tokens_to_grid(const Matrix& tokens, int channels, int height, int width);

LatentGrid flip_grid_horizontal(const LatentGrid& g);
LatentGrid flip_grid_vertical(const LatentGrid& g);

} // namespace forge::denoiser
