#include "forge/stylizer.hpp"
#include "forge/common/digest.hpp"
#include "forge/common/errors.hpp"
#include "forge/common/rng.hpp"
#include "forge/denoiser/sampler.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace forge {

namespace {

constexpr std::array<std::pair<StylizerKind, std::string_view>, 5> kKindNames{{
    {StylizerKind::Strotss, "strotss"},
    {StylizerKind::StyleId, "styleid"},
    {StylizerKind::Csgo, "csgo"},
    {StylizerKind::AttentionDistillation, "attention_distillation"},
    {StylizerKind::Stub, "stub"},
}};

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

struct ChannelStats {
    std::array<double, 3> mean{};
    std::array<double, 3> stddev{};
};

ChannelStats stats(const Image& img) {
    ChannelStats s;
    const double n = static_cast<double>(img.width) * img.height;
    for (std::size_t i = 0; i < img.rgb.size(); ++i) s.mean[i % 3] += img.rgb[i];
    for (auto& m : s.mean) m /= n;
    for (std::size_t i = 0; i < img.rgb.size(); ++i) {
        const double d = img.rgb[i] - s.mean[i % 3];
        s.stddev[i % 3] += d * d;
    }
    for (auto& v : s.stddev) v = std::sqrt(v / n);
    return s;
}

void require_image(const Image& img, const char* what) {
    if (img.empty()) throw BackendError(std::string("empty ") + what + " image");
}

} // namespace

std::string_view to_string(StylizerKind k) {
    for (const auto& [kind, name] : kKindNames)
        if (kind == k) return name;
    return "?";
}

std::optional<StylizerKind> parse_stylizer_kind(std::string_view s) {
    for (const auto& [kind, name] : kKindNames)
        if (name == s) return kind;
    return std::nullopt;
}

StubStylizer::StubStylizer(int variant, StylizerKind kind) : variant_(variant), kind_(kind) {}

std::string StubStylizer::id() const {
    return "stub-stylizer-" + std::string(to_string(kind_)) + "-" + std::to_string(variant_);
}

Image StubStylizer::stylize(const Image& content, const Image& style, std::uint64_t seed) const {
    require_image(content, "content");
    require_image(style, "style");
    const ChannelStats st = stats(center_crop_resize(style, 64));
    const double strength = 0.55 + 0.1 * (variant_ % 4);
    const std::uint64_t tex_seed = derive_seed(seed, fnv1a64(id()));
    const double fx = 0.05 + 0.01 * static_cast<double>(tex_seed % 7);
    const double fy = 0.05 + 0.01 * static_cast<double>((tex_seed >> 8) % 7);

    Image out(content.width, content.height);
    for (int y = 0; y < content.height; ++y) {
        for (int x = 0; x < content.width; ++x) {
            const std::uint8_t* c = content.at(x, y);
            const double lum = (0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]) / 255.0;
            const double tex = 0.15 * std::sin(fx * x + fy * y);
            std::uint8_t* o = out.at(x, y);
            for (int ch = 0; ch < 3; ++ch) {
                const double styled = st.mean[ch] + (2.0 * (lum - 0.5) + tex) * 1.5 * st.stddev[ch];
                o[ch] = to_byte((1.0 - strength) * c[ch] + strength * styled);
            }
        }
    }
    return out;
}

Image StubDestylizer::destylize(const Image& style, const std::string& prompt, std::uint64_t seed) const {
    require_image(style, "style");
    if (prompt.empty()) throw BackendError("empty destylization prompt");
    const std::uint64_t h = derive_seed(seed, fnv1a64(prompt));
    const std::array<double, 3> tint{static_cast<double>(h & 0x1f), static_cast<double>((h >> 5) & 0x1f),
                                     static_cast<double>((h >> 10) & 0x1f)};

    // Box blur on a quarter-size copy smooths away brush texture.
    const int w = std::max(1, style.width / 4);
    const int hgt = std::max(1, style.height / 4);
    const Image small = resize(style, w, hgt);
    Image blurred(w, hgt);
    for (int y = 0; y < hgt; ++y) {
        for (int x = 0; x < w; ++x) {
            std::array<double, 3> acc{};
            int n = 0;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const int sx = std::clamp(x + dx, 0, w - 1);
                    const int sy = std::clamp(y + dy, 0, hgt - 1);
                    const std::uint8_t* p = small.at(sx, sy);
                    for (int ch = 0; ch < 3; ++ch) acc[ch] += p[ch];
                    ++n;
                }
            }
            const double grey = (acc[0] + acc[1] + acc[2]) / (3.0 * n);
            std::uint8_t* o = blurred.at(x, y);
            for (int ch = 0; ch < 3; ++ch) o[ch] = to_byte(0.5 * acc[ch] / n + 0.5 * grey + tint[ch] - 16.0);
        }
    }
    return resize(blurred, style.width, style.height);
}

ModelStylizer::ModelStylizer(std::shared_ptr<denoiser::ToyDiT> model,
                             std::shared_ptr<const denoiser::AutoencoderBackend> ae, ModelAdapterOptions opts)
    : model_(std::move(model)), ae_(std::move(ae)), opts_(opts) {
    if (!model_ || !ae_) throw ValidationError("model stylizer needs a model and an autoencoder");
    if (model_->config().token_width != ae_->channels())
        throw ValidationError("model token width does not match autoencoder channels");
}

Image ModelStylizer::stylize(const Image& content, const Image& style, std::uint64_t seed) const {
    require_image(content, "content");
    require_image(style, "style");
    const auto desty = ae_->encode(center_crop_resize(content, opts_.work_side));
    const auto ref = ae_->encode(center_crop_resize(style, opts_.work_side));
    denoiser::LatentGrid out;
    {
        std::lock_guard lock(mu_);
        out = denoiser::sample(*model_, denoiser::Conditions::o2(ref, desty), opts_.steps, seed);
    }
    return resize(ae_->decode(out), content.width, content.height);
}

ModelDestylizer::ModelDestylizer(std::shared_ptr<denoiser::ToyDiT> model,
                                 std::shared_ptr<const denoiser::AutoencoderBackend> ae, ModelAdapterOptions opts)
    : model_(std::move(model)), ae_(std::move(ae)), text_(model_ ? model_->config().token_width : 1), opts_(opts) {
    if (!model_ || !ae_) throw ValidationError("model destylizer needs a model and an autoencoder");
    if (model_->config().token_width != ae_->channels())
        throw ValidationError("model token width does not match autoencoder channels");
}

Image ModelDestylizer::destylize(const Image& style, const std::string& prompt, std::uint64_t seed) const {
    require_image(style, "style");
    if (prompt.empty()) throw BackendError("empty destylization prompt");
    const auto stylized = ae_->encode(center_crop_resize(style, opts_.work_side));
    const auto text = text_.embed(prompt);
    denoiser::LatentGrid out;
    {
        std::lock_guard lock(mu_);
        out = denoiser::sample(*model_, denoiser::Conditions::dst(stylized, text), opts_.steps, seed);
    }
    return resize(ae_->decode(out), style.width, style.height);
}

} // namespace forge
