#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "forge/denoiser/autoencoder.hpp"
#include "forge/denoiser/model.hpp"
#include "forge/image.hpp"

namespace forge {

enum class StylizerKind { Strotss, StyleId, Csgo, AttentionDistillation, Stub };

std::string_view to_string(StylizerKind k);
std::optional<StylizerKind> parse_stylizer_kind(std::string_view s);

/// Style transfer adapter: (content, style) -> stylized image at the
/// content's size. Implementations must be safe to call concurrently and
/// throw BackendError on failure.
class StylizerBackend {
public:
    virtual ~StylizerBackend() = default;
    virtual std::string id() const = 0;
    virtual StylizerKind kind() const = 0;
    virtual Image stylize(const Image& content, const Image& style, std::uint64_t seed) const = 0;
};

/// Deterministic colour transfer: content luminance remapped onto the
/// style's per-channel statistics, plus a seeded texture. `variant`
/// changes the blend strength so several stubs can stand in for the four
/// external methods.
class StubStylizer : public StylizerBackend {
public:
    explicit StubStylizer(int variant = 0, StylizerKind kind = StylizerKind::Stub);
    std::string id() const override;
    StylizerKind kind() const override { return kind_; }
    Image stylize(const Image& content, const Image& style, std::uint64_t seed) const override;

private:
    int variant_;
    StylizerKind kind_;
};

/// Destylization adapter: (style image, content prompt) -> style-free image
/// at the input's size.
class DestylizerBackend {
public:
    virtual ~DestylizerBackend() = default;
    virtual std::string id() const = 0;
    virtual Image destylize(const Image& style, const std::string& prompt, std::uint64_t seed) const = 0;
};

/// Blur, desaturate and a faint prompt-dependent tint. Pure function of its
/// inputs.
class StubDestylizer : public DestylizerBackend {
public:
    std::string id() const override { return "stub-desty"; }
    Image destylize(const Image& style, const std::string& prompt, std::uint64_t seed) const override;
};

/// Both model-backed adapters work at a small latent size (`work_side`
/// pixels), then resize the decoded result to the requested size. Calls
/// are serialized because the toy model caches activations.
struct ModelAdapterOptions {
    int work_side = 32;
    int steps = 8;
};

/// OmniStyle2 scheme: reference = style image, destylized = content image.
class ModelStylizer : public StylizerBackend {
public:
    ModelStylizer(std::shared_ptr<denoiser::ToyDiT> model, std::shared_ptr<const denoiser::AutoencoderBackend> ae,
                  ModelAdapterOptions opts = {});
    std::string id() const override { return "toy-omnistyle2"; }
    StylizerKind kind() const override { return StylizerKind::Stub; }
    Image stylize(const Image& content, const Image& style, std::uint64_t seed) const override;

private:
    std::shared_ptr<denoiser::ToyDiT> model_;
    std::shared_ptr<const denoiser::AutoencoderBackend> ae_;
    ModelAdapterOptions opts_;
    mutable std::mutex mu_;
};

/// DST scheme: stylized = style image, text = prompt.
class ModelDestylizer : public DestylizerBackend {
public:
    ModelDestylizer(std::shared_ptr<denoiser::ToyDiT> model, std::shared_ptr<const denoiser::AutoencoderBackend> ae,
                    ModelAdapterOptions opts = {});
    std::string id() const override { return "toy-dst"; }
    Image destylize(const Image& style, const std::string& prompt, std::uint64_t seed) const override;

private:
    std::shared_ptr<denoiser::ToyDiT> model_;
    std::shared_ptr<const denoiser::AutoencoderBackend> ae_;
    denoiser::TextEmbedder text_;
    ModelAdapterOptions opts_;
    mutable std::mutex mu_;
};

} // namespace forge
