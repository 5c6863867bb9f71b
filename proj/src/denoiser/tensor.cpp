#include "forge/denoiser/tensor.hpp"
#include "forge/common/errors.hpp"

#include <algorithm>
#include <cmath>

namespace forge::denoiser {

Matrix slice_rows(const Matrix& m, std::size_t offset, std::size_t count) {
    if (offset + count > m.rows) throw ValidationError("slice_rows: out of range");
    Matrix out(count, m.cols);
    std::copy_n(m.data.begin() + static_cast<std::ptrdiff_t>(offset * m.cols), count * m.cols, out.data.begin());
    return out;
}

bool LatentGrid::all_finite() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

Matrix grid_to_tokens(const LatentGrid& g) {
    const std::size_t n = g.tokens();
    Matrix m(n, static_cast<std::size_t>(g.channels));
    for (int c = 0; c < g.channels; ++c) {
        for (std::size_t p = 0; p < n; ++p) m(p, static_cast<std::size_t>(c)) = g.values[c * n + p];
    }
    return m;
}

LatentGrid tokens_to_grid(const Matrix& tokens, int channels, int height, int width) {
    LatentGrid g(channels, height, width);
    const std::size_t n = g.tokens();
    if (tokens.rows != n || tokens.cols != static_cast<std::size_t>(channels)) {
        throw ValidationError("tokens_to_grid: shape mismatch");
    }
    for (int c = 0; c < channels; ++c) {
        for (std::size_t p = 0; p < n; ++p) g.values[c * n + p] = tokens(p, static_cast<std::size_t>(c));
    }
    return g;
}

LatentGrid flip_grid_horizontal(const LatentGrid& g) {
    LatentGrid out(g.channels, g.height, g.width);
    for (int c = 0; c < g.channels; ++c)
        for (int y = 0; y < g.height; ++y)
            for (int x = 0; x < g.width; ++x) out.at(c, y, g.width - 1 - x) = g.at(c, y, x);
    return out;
}

LatentGrid flip_grid_vertical(const LatentGrid& g) {
    LatentGrid out(g.channels, g.height, g.width);
    for (int c = 0; c < g.channels; ++c)
        for (int y = 0; y < g.height; ++y)
            for (int x = 0; x < g.width; ++x) out.at(c, g.height - 1 - y, x) = g.at(c, y, x);
    return out;
}

} // namespace forge::denoiser
