#include "forge/denoiser/sequence.hpp"
#include "forge/common/errors.hpp"
#include "forge/common/rng.hpp"

#include <algorithm>

namespace forge::denoiser {

std::size_t TokenLayout::total() const {
    std::size_t n = 0;
    for (const auto& s : segments) n += s.length;
    return n;
}

const Segment& TokenLayout::find(const std::string& name) const {
    for (const auto& s : segments) {
        if (s.name == name) return s;
    }
    throw ValidationError("token layout: no segment named " + name);
}

std::string TokenLayout::violation() const {
    std::size_t expected = 0;
    for (std::size_t i = 0; i < segments.size(); ++i) {
        const auto& s = segments[i];
        if (s.name.empty()) return "segment " + std::to_string(i) + " has no name";
        if (s.offset != expected) return "segment " + s.name + " is not contiguous";
        for (std::size_t j = 0; j < i; ++j) {
            if (segments[j].name == s.name) return "duplicate segment name " + s.name;
        }
        expected += s.length;
    }
    return {};
}

namespace {

void append_rows(Matrix& dst, std::size_t& cursor, const Matrix& src) {
    std::copy(src.data.begin(), src.data.end(), dst.data.begin() + static_cast<std::ptrdiff_t>(cursor * dst.cols));
    cursor += src.rows;
}

ConditionedSequence concat(const std::vector<std::pair<std::string, Matrix>>& parts, std::string target) {
    std::size_t width = 0;
    bool have_width = false;
    for (const auto& [name, m] : parts) {
        if (m.rows == 0) continue;
        if (!have_width) {
            width = m.cols;
            have_width = true;
        } else if (m.cols != width) {
            throw ValidationError("token sequence: segment " + name + " has width " + std::to_string(m.cols) +
                                  ", expected " + std::to_string(width));
        }
    }
    std::size_t total = 0;
    for (const auto& p : parts) total += p.second.rows;

    ConditionedSequence seq;
    seq.tokens = Matrix(total, width);
    seq.target_segment = std::move(target);
    std::size_t cursor = 0;
    for (const auto& [name, m] : parts) {
        seq.layout.segments.push_back({name, cursor, m.rows});
        if (m.rows > 0) append_rows(seq.tokens, cursor, m);
    }
    return seq;
}

} // namespace

ConditionedSequence assemble_dst_sequence(const LatentGrid& stylized, const Matrix& text_tokens,
                                          const LatentGrid& noisy_content) {
    if (stylized.channels != noisy_content.channels) {
        throw ValidationError("dst sequence: stylized and noisy grids differ in channels");
    }
    return concat({{seg::kStylized, grid_to_tokens(stylized)},
                   {seg::kText, text_tokens},
                   {seg::kNoisyContent, grid_to_tokens(noisy_content)}},
                  seg::kNoisyContent);
}

ConditionedSequence assemble_o2_sequence(const LatentGrid& noisy_style, const LatentGrid& reference,
                                         const LatentGrid& destylized) {
    if (noisy_style.channels != reference.channels || noisy_style.channels != destylized.channels) {
        throw ValidationError("o2 sequence: grids differ in channels");
    }
    return concat({{seg::kNoisyStyle, grid_to_tokens(noisy_style)},
                   {seg::kReference, grid_to_tokens(reference)},
                   {seg::kDestylized, grid_to_tokens(destylized)}},
                  seg::kNoisyStyle);
}

LatentGrid gaussian_grid(int channels, int height, int width, std::uint64_t seed) {
    LatentGrid g(channels, height, width);
    SplitMix64 rng(seed);
    for (auto& v : g.values) v = rng.normal();
    return g;
}

NoisySample make_noisy(const LatentGrid& x0, double t, const LatentGrid& eps) {
    if (!(t >= 0.0 && t <= 1.0)) throw ValidationError("make_noisy: t must lie in [0,1]");
    if (!x0.same_shape(eps)) throw ValidationError("make_noisy: noise shape mismatch");
    NoisySample s;
    s.x0 = x0;
    s.eps = eps;
    s.t = t;
    s.x_t = LatentGrid(x0.channels, x0.height, x0.width);
    s.target_velocity = LatentGrid(x0.channels, x0.height, x0.width);
    for (std::size_t i = 0; i < x0.values.size(); ++i) {
        s.x_t.values[i] = (1.0 - t) * x0.values[i] + t * eps.values[i];
        s.target_velocity.values[i] = eps.values[i] - x0.values[i];
    }
    return s;
}

NoisySample make_noisy(const LatentGrid& x0, double t, std::uint64_t seed) {
    return make_noisy(x0, t, gaussian_grid(x0.channels, x0.height, x0.width, seed));
}

} // namespace forge::denoiser
