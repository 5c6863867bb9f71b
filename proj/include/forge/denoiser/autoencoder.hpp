#pragma once

#include "forge/denoiser/tensor.hpp"
#include "forge/image.hpp"
#include "forge/records.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace forge::denoiser {

class AutoencoderBackend {
public:
    virtual ~AutoencoderBackend() = default;
    virtual std::string id() const = 0;
    virtual int downsample() const = 0;
    virtual int channels() const = 0;
    virtual LatentGrid encode(const Image& img) const = 0;
    virtual Image decode(const LatentGrid& latent) const = 0;
};

/// Fixed strided patch projection. Each latent channel is a unit-norm,
/// mutually orthogonal direction in patch space (seeded Gram-Schmidt), so
/// decode = transpose is the least-squares inverse on the projected
/// subspace. Pixels enter as value/255, which keeps encode linear: a black
/// image encodes to an all-zero latent.
class ToyAutoencoder : public AutoencoderBackend {
public:
    ToyAutoencoder(int downsample = 8, int channels = 4, std::uint64_t seed = 7);

    std::string id() const override;
    int downsample() const override { return patch_; }
    int channels() const override { return channels_; }
    LatentGrid encode(const Image& img) const override;
    Image decode(const LatentGrid& latent) const override;

    /// Encode raw values laid out height x width x 3.
    LatentGrid encode_values(const std::vector<double>& hw3, int height, int width) const;

private:
    int patch_;
    int channels_;
    std::uint64_t seed_;
    std::vector<double> weights_; // channels x (patch*patch*3)
};

/// Loads the record's image and encodes it. Throws ForgeError when the
/// file cannot be decoded.
LatentGrid encode(const ImageRecord& rec, const AutoencoderBackend& ae);

/// Caption -> token embeddings through one fixed, seeded table. Words are
/// lowercased and hashed into the vocabulary.
class TextEmbedder {
public:
    TextEmbedder(int width, int vocab = 1024, int max_tokens = 8, std::uint64_t seed = 11);

    Matrix embed(const std::string& caption) const;
    int width() const { return width_; }

private:
    int width_;
    int vocab_;
    int max_tokens_;
    std::vector<double> table_;
};

} // namespace forge::denoiser
