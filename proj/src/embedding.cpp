#include "forge/embedding.hpp"
#include "forge/common/digest.hpp"
#include "forge/common/errors.hpp"
#include "forge/common/rng.hpp"
#include "forge/kernels.hpp"

#include <cctype>
#include <cmath>
#include <sstream>

namespace forge {

namespace {

constexpr int kStructureSide = 16;
constexpr int kSemanticSide = 8;
constexpr int kStyleSide = 32;
constexpr std::size_t kStyleChannels = 16;
constexpr std::size_t kStylePatch = 2;
constexpr std::size_t kVocab = 512;

std::vector<double> gaussian(std::size_t n, double scale, std::uint64_t seed) {
    SplitMix64 rng(seed);
    std::vector<double> v(n);
    for (auto& x : v) x = scale * rng.normal();
    return v;
}

std::vector<double> pixels(const Image& img, int side) {
    if (img.empty()) throw ValidationError("cannot embed an empty image");
    return to_unit_range(center_crop_resize(img, side));
}

// Row-major interleaved (h*w x c) from channel-major (c x h*w).
std::vector<double> interleave(const std::vector<double>& cm, std::size_t channels, std::size_t locations) {
    std::vector<double> out(cm.size());
    for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t l = 0; l < locations; ++l) out[l * channels + c] = cm[c * locations + l];
    return out;
}

std::vector<std::string> words(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        if (std::isalnum(static_cast<unsigned char>(ch))) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

} // namespace

std::vector<double> EmbeddingBackend::embed_text(const std::string&) const {
    throw ValidationError("embedding backend " + id() + " has no text tower");
}

std::string_view to_string(EmbedRole r) {
    switch (r) {
    case EmbedRole::Structure: return "structure";
    case EmbedRole::Semantic: return "semantic";
    case EmbedRole::Style: return "style";
    }
    return "?";
}

ProjectionEmbedder::ProjectionEmbedder(EmbedRole role, std::size_t dim, std::uint64_t seed)
    : role_(role), dim_(dim), seed_(seed) {
    if (dim == 0) throw ValidationError("embedding dim must be positive");
    switch (role) {
    case EmbedRole::Structure: input_dim_ = kStructureSide * kStructureSide * 3; break;
    case EmbedRole::Semantic: input_dim_ = kSemanticSide * kSemanticSide * 3; break;
    case EmbedRole::Style: input_dim_ = kStyleChannels * (kStyleChannels + 1) / 2 + kStyleChannels; break;
    }
    const std::uint64_t base = derive_seed(seed, fnv1a64(to_string(role)));
    proj_ = gaussian(dim_ * input_dim_, 1.0 / std::sqrt(static_cast<double>(input_dim_)), base);
    if (role == EmbedRole::Style) {
        const std::size_t k = kStylePatch * kStylePatch * 3;
        style_w_ = gaussian(kStyleChannels * k, 1.0 / std::sqrt(static_cast<double>(k)), derive_seed(base, 2));
    }
    if (role == EmbedRole::Semantic) word_proj_ = gaussian(kVocab * dim_, 1.0, derive_seed(base, 1));
}

std::string ProjectionEmbedder::id() const {
    std::ostringstream os;
    os << "proj-" << to_string(role_) << "-d" << dim_ << "-s" << seed_;
    return os.str();
}

std::vector<double> ProjectionEmbedder::input_vector(const Image& img) const {
    if (role_ == EmbedRole::Structure) return pixels(img, kStructureSide);
    if (role_ == EmbedRole::Semantic) return pixels(img, kSemanticSide);

    // Style: Gram of one strided projection layer, which discards layout.
    const auto px = pixels(img, kStyleSide);
    const std::size_t side = kStyleSide / kStylePatch;
    const std::size_t locs = side * side;
    std::vector<double> feat(kStyleChannels * locs);
    kernels::patch_project(kStyleSide, kStyleSide, 3, kStylePatch, kStyleChannels, px, style_w_, feat);
    for (auto& f : feat) f = std::tanh(f);
    std::vector<double> g(kStyleChannels * kStyleChannels);
    kernels::gram(kStyleChannels, locs, feat, g);
    std::vector<double> in;
    in.reserve(input_dim_);
    for (std::size_t i = 0; i < kStyleChannels; ++i)
        for (std::size_t j = i; j < kStyleChannels; ++j) in.push_back(g[i * kStyleChannels + j] * kStyleChannels);
    for (std::size_t c = 0; c < kStyleChannels; ++c) {
        double m = 0.0;
        for (std::size_t l = 0; l < locs; ++l) m += feat[c * locs + l];
        in.push_back(m / static_cast<double>(locs));
    }
    return in;
}

std::vector<double> ProjectionEmbedder::embed_image(const Image& img) const {
    const auto in = input_vector(img);
    std::vector<double> out(dim_, 0.0);
    kernels::gemm(kernels::Trans::No, kernels::Trans::No, dim_, 1, input_dim_, 1.0, proj_, in, 0.0, out);
    return out;
}

std::vector<double> ProjectionEmbedder::embed_text(const std::string& text) const {
    if (!supports_text()) return EmbeddingBackend::embed_text(text);
    std::vector<double> out(dim_, 0.0);
    for (const auto& w : words(text)) {
        const std::size_t row = fnv1a64(w) % kVocab;
        for (std::size_t d = 0; d < dim_; ++d) out[d] += word_proj_[row * dim_ + d];
    }
    return out;
}

void TableEmbedder::set(const std::string& content_hash, std::vector<double> v) {
    if (v.size() != dim_) throw ValidationError("table embedding has wrong dimension");
    table_[content_hash] = std::move(v);
}

void TableEmbedder::set_text(const std::string& text, std::vector<double> v) {
    if (v.size() != dim_) throw ValidationError("table embedding has wrong dimension");
    text_[text] = std::move(v);
}

std::vector<double> TableEmbedder::embed_image(const Image& img) const {
    const auto it = table_.find(content_hash(img));
    if (it == table_.end()) throw ValidationError("no table embedding for image");
    return it->second;
}

std::vector<double> TableEmbedder::embed_text(const std::string& text) const {
    const auto it = text_.find(text);
    if (it == text_.end()) throw ValidationError("no table embedding for text: " + text);
    return it->second;
}

RandomFeatureStack::RandomFeatureStack(std::uint64_t seed, int input_side, std::vector<std::size_t> widths)
    : seed_(seed), input_side_(input_side), widths_(std::move(widths)) {
    if (widths_.empty()) throw ValidationError("feature stack needs at least one layer");
    int side = input_side;
    std::size_t in_ch = 3;
    for (std::size_t l = 0; l < widths_.size(); ++l) {
        if (side < 2 || side % 2 != 0) throw ValidationError("feature stack input side must halve cleanly");
        const std::size_t k = 4 * in_ch;
        weights_.push_back(
            gaussian(widths_[l] * k, 1.0 / std::sqrt(static_cast<double>(k)), derive_seed(seed, 0xfea7 + l)));
        in_ch = widths_[l];
        side /= 2;
    }
}

std::string RandomFeatureStack::id() const {
    std::ostringstream os;
    os << "randfeat-" << input_side_ << "-s" << seed_;
    for (auto w : widths_) os << "-" << w;
    return os.str();
}

std::vector<FeatureMap> RandomFeatureStack::features(const Image& img) const {
    std::vector<FeatureMap> out;
    auto x = pixels(img, input_side_);
    std::size_t side = static_cast<std::size_t>(input_side_);
    std::size_t in_ch = 3;
    for (std::size_t l = 0; l < widths_.size(); ++l) {
        const std::size_t next = side / 2;
        FeatureMap fm;
        fm.channels = widths_[l];
        fm.locations = next * next;
        fm.values.resize(fm.channels * fm.locations);
        kernels::patch_project(side, side, in_ch, 2, fm.channels, x, weights_[l], fm.values);
        for (auto& v : fm.values) v = std::tanh(v);
        x = interleave(fm.values, fm.channels, fm.locations);
        out.push_back(std::move(fm));
        side = next;
        in_ch = widths_[l];
    }
    return out;
}

} // namespace forge
