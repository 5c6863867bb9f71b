#include "forge/denoiser/sampler.hpp"
#include "forge/common/errors.hpp"

namespace forge::denoiser {

Conditions Conditions::dst(LatentGrid stylized, Matrix text) {
    Conditions c;
    c.scheme = Scheme::Dst;
    c.stylized = std::move(stylized);
    c.text = std::move(text);
    return c;
}

Conditions Conditions::o2(LatentGrid reference, LatentGrid destylized) {
    Conditions c;
    c.scheme = Scheme::OmniStyle2;
    c.reference = std::move(reference);
    c.destylized = std::move(destylized);
    return c;
}

ConditionedSequence build_sequence(const Conditions& cond, const LatentGrid& noisy_target) {
    if (cond.scheme == Scheme::Dst) return assemble_dst_sequence(cond.stylized, cond.text, noisy_target);
    return assemble_o2_sequence(noisy_target, cond.reference, cond.destylized);
}

LatentGrid sample_from(VelocityModel& model, const Conditions& cond, int steps, LatentGrid x) {
    if (steps < 1) throw ValidationError("sample: steps must be >= 1");
    if (!x.same_shape(cond.shape_source())) throw ValidationError("sample: start grid shape mismatch");
    const double dt = 1.0 / steps;
    for (int i = 0; i < steps; ++i) {
        const double t = 1.0 - static_cast<double>(i) * dt;
        const auto seq = build_sequence(cond, x);
        const Matrix v = model.predict(seq, t);
        const LatentGrid vg = tokens_to_grid(v, x.channels, x.height, x.width);
        for (std::size_t k = 0; k < x.values.size(); ++k) x.values[k] -= dt * vg.values[k];
        if (!x.all_finite()) throw NumericError("sample: non-finite state at step " + std::to_string(i));
    }
    return x;
}

LatentGrid sample(VelocityModel& model, const Conditions& cond, int steps, std::uint64_t seed) {
    const auto& s = cond.shape_source();
    return sample_from(model, cond, steps, gaussian_grid(s.channels, s.height, s.width, seed));
}

} // namespace forge::denoiser
