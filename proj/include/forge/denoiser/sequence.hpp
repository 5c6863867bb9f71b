#pragma once

#include "forge/denoiser/tensor.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace forge::denoiser {

struct Segment {
    std::string name;
    std::size_t offset = 0;
    std::size_t length = 0;

    bool operator==(const Segment&) const = default;
};

/// Named, contiguous, non-overlapping segments of a token sequence. Token i
/// receives global position index i, so segment roles are told apart by
/// position alone.
struct TokenLayout {
    std::vector<Segment> segments;

    std::size_t total() const;
    const Segment& find(const std::string& name) const;
    /// Empty string when the layout is zero-based, contiguous and covers
    /// [0, total) exactly.
    std::string violation() const;

    bool operator==(const TokenLayout&) const = default;
};

namespace seg {
inline constexpr const char* kStylized = "stylized";
inline constexpr const char* kText = "text";
inline constexpr const char* kNoisyContent = "noisy_content";
inline constexpr const char* kNoisyStyle = "noisy_style";
inline constexpr const char* kReference = "reference";
inline constexpr const char* kDestylized = "destylized";
} // namespace seg

struct ConditionedSequence {
    Matrix tokens; // total x width
    TokenLayout layout;
    std::string target_segment; // the one segment that carries the loss
};

/// Order [stylized, text, noisy_content]. Throws ValidationError on width
/// mismatch. An empty text matrix contributes a zero-length segment.
ConditionedSequence assemble_dst_sequence(const LatentGrid& stylized, const Matrix& text_tokens,
                                          const LatentGrid& noisy_content);

/// Order [noisy_style, reference, destylized]; no text segment at all.
ConditionedSequence assemble_o2_sequence(const LatentGrid& noisy_style, const LatentGrid& reference,
                                         const LatentGrid& destylized);

/// Rectified-flow sample: x_t = (1 - t) x0 + t eps, target v = eps - x0.
struct NoisySample {
    LatentGrid x0;
    LatentGrid eps;
    double t = 0.0;
    LatentGrid x_t;
    LatentGrid target_velocity;
};

/// eps is drawn from SplitMix64(seed) via Box-Muller. Throws for t
/// outside [0, 1].
NoisySample make_noisy(const LatentGrid& x0, double t, std::uint64_t seed);

/// Same, with a caller-supplied noise grid.
NoisySample make_noisy(const LatentGrid& x0, double t, const LatentGrid& eps);

LatentGrid gaussian_grid(int channels, int height, int width, std::uint64_t seed);

} // namespace forge::denoiser
