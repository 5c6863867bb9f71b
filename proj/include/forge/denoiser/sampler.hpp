#pragma once

#include "forge/denoiser/model.hpp"
#include "forge/denoiser/sequence.hpp"

#include <cstdint>

namespace forge::denoiser {

enum class Scheme { Dst, OmniStyle2 };

/// Fixed conditioning inputs for one generation. For Dst the target grid
/// has the shape of `stylized`; for OmniStyle2 the shape of `destylized`.
struct Conditions {
    Scheme scheme = Scheme::Dst;
    LatentGrid stylized;
    Matrix text;
    LatentGrid reference;
    LatentGrid destylized;

    static Conditions dst(LatentGrid stylized, Matrix text);
    static Conditions o2(LatentGrid reference, LatentGrid destylized);

    const LatentGrid& shape_source() const { return scheme == Scheme::Dst ? stylized : destylized; }
};

ConditionedSequence build_sequence(const Conditions& cond, const LatentGrid& noisy_target);

/// Euler integration of the learned velocity field from t = 1 down to
/// t = 0 in `steps` equal steps: x <- x - (1/steps) * v(x, t).
LatentGrid sample_from(VelocityModel& model, const Conditions& cond, int steps, LatentGrid x1);

/// Starts from Gaussian noise drawn with `seed`.
LatentGrid sample(VelocityModel& model, const Conditions& cond, int steps, std::uint64_t seed);

} // namespace forge::denoiser
