#include "forge/denoiser/autoencoder.hpp"
#include "forge/common/digest.hpp"
#include "forge/common/errors.hpp"
#include "forge/common/rng.hpp"
#include "forge/kernels.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

namespace forge::denoiser {

ToyAutoencoder::ToyAutoencoder(int downsample, int channels, std::uint64_t seed)
    : patch_(downsample), channels_(channels), seed_(seed) {
    const int k = patch_ * patch_ * 3;
    if (patch_ < 1 || channels_ < 1 || channels_ > k) {
        throw ValidationError("toy autoencoder: need 1 <= channels <= 3*patch^2");
    }
    SplitMix64 rng(seed);
    weights_.assign(static_cast<std::size_t>(channels_) * k, 0.0);
    for (int c = 0; c < channels_; ++c) {
        double* w = weights_.data() + static_cast<std::size_t>(c) * k;
        for (int i = 0; i < k; ++i) w[i] = rng.normal();
        for (int prev = 0; prev < c; ++prev) {
            const double* p = weights_.data() + static_cast<std::size_t>(prev) * k;
            double dot = 0.0;
            for (int i = 0; i < k; ++i) dot += w[i] * p[i];
            for (int i = 0; i < k; ++i) w[i] -= dot * p[i];
        }
        double norm = 0.0;
        for (int i = 0; i < k; ++i) norm += w[i] * w[i];
        norm = std::sqrt(norm);
        for (int i = 0; i < k; ++i) w[i] /= norm;
    }
}

std::string ToyAutoencoder::id() const {
    return "toy-ae-p" + std::to_string(patch_) + "-c" + std::to_string(channels_) + "-s" + std::to_string(seed_);
}

LatentGrid ToyAutoencoder::encode_values(const std::vector<double>& hw3, int height, int width) const {
    if (height % patch_ != 0 || width % patch_ != 0) {
        throw ValidationError("toy autoencoder: image size not divisible by downsample factor");
    }
    if (hw3.size() != static_cast<std::size_t>(height) * width * 3) {
        throw ValidationError("toy autoencoder: value buffer size mismatch");
    }
    LatentGrid g(channels_, height / patch_, width / patch_);
    kernels::patch_project(static_cast<std::size_t>(height), static_cast<std::size_t>(width), 3,
                           static_cast<std::size_t>(patch_), static_cast<std::size_t>(channels_), hw3, weights_,
                           g.values);
    return g;
}

LatentGrid ToyAutoencoder::encode(const Image& img) const {
    std::vector<double> v(img.rgb.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = img.rgb[i] / 255.0;
    return encode_values(v, img.height, img.width);
}

Image ToyAutoencoder::decode(const LatentGrid& latent) const {
    if (latent.channels != channels_) throw ValidationError("toy autoencoder: channel mismatch on decode");
    const int h = latent.height * patch_;
    const int w = latent.width * patch_;
    const int k = patch_ * patch_ * 3;
    Image img(w, h);
    for (int gy = 0; gy < latent.height; ++gy) {
        for (int gx = 0; gx < latent.width; ++gx) {
            int idx = 0;
            for (int py = 0; py < patch_; ++py) {
                for (int px = 0; px < patch_; ++px) {
                    auto* pixel = img.at(gx * patch_ + px, gy * patch_ + py);
                    for (int ch = 0; ch < 3; ++ch, ++idx) {
                        double v = 0.0;
                        for (int c = 0; c < channels_; ++c) {
                            v += weights_[static_cast<std::size_t>(c) * k + idx] * latent.at(c, gy, gx);
                        }
                        pixel[ch] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
                    }
                }
            }
        }
    }
    return img;
}

LatentGrid encode(const ImageRecord& rec, const AutoencoderBackend& ae) {
    auto img = load_image(rec.path);
    if (!img) throw ForgeError("encode: cannot decode " + rec.path.string());
    return ae.encode(*img);
}

TextEmbedder::TextEmbedder(int width, int vocab, int max_tokens, std::uint64_t seed)
    : width_(width), vocab_(vocab), max_tokens_(max_tokens) {
    if (width < 1 || vocab < 1 || max_tokens < 0) throw ValidationError("text embedder: bad dimensions");
    SplitMix64 rng(seed);
    table_.resize(static_cast<std::size_t>(vocab) * width);
    for (auto& v : table_) v = 0.5 * rng.normal();
}

Matrix TextEmbedder::embed(const std::string& caption) const {
    std::vector<std::string> words;
    std::istringstream in(caption);
    std::string w;
    while (in >> w && static_cast<int>(words.size()) < max_tokens_) {
        std::string clean;
        for (unsigned char c : w) {
            if (std::isalnum(c)) clean.push_back(static_cast<char>(std::tolower(c)));
        }
        if (!clean.empty()) words.push_back(clean);
    }
    Matrix m(words.size(), static_cast<std::size_t>(width_));
    for (std::size_t i = 0; i < words.size(); ++i) {
        const std::size_t id = fnv1a64(words[i]) % static_cast<std::uint64_t>(vocab_);
        std::copy_n(table_.begin() + static_cast<std::ptrdiff_t>(id * width_), width_, m.row(i).begin());
    }
    return m;
}

} // namespace forge::denoiser
