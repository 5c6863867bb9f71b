#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "forge/image.hpp"

namespace forge {

/// Image (and optionally text) embedder. Implementations must be safe to
/// call concurrently.
class EmbeddingBackend {
public:
    virtual ~EmbeddingBackend() = default;
    virtual std::string id() const = 0;
    virtual std::size_t dim() const = 0;
    virtual std::vector<double> embed_image(const Image& img) const = 0;
    virtual bool supports_text() const { return false; }
    /// Throws ValidationError unless supports_text().
    virtual std::vector<double> embed_text(const std::string& text) const;
};

/// What a seeded projection embedder looks at.
///   Structure: downsampled pixels (spatial layout, DINO stand-in)
///   Semantic:  coarse pixels and hashed caption words (CLIP stand-in)
///   Style:     channel Gram of a fixed feature layer (CSD stand-in)
enum class EmbedRole { Structure, Semantic, Style };

std::string_view to_string(EmbedRole r);

/// Fixed Gaussian random projection; a pure function of (role, dim, seed).
class ProjectionEmbedder : public EmbeddingBackend {
public:
    ProjectionEmbedder(EmbedRole role, std::size_t dim = 64, std::uint64_t seed = 0);
    std::string id() const override;
    std::size_t dim() const override { return dim_; }
    std::vector<double> embed_image(const Image& img) const override;
    bool supports_text() const override { return role_ == EmbedRole::Semantic; }
    std::vector<double> embed_text(const std::string& text) const override;

private:
    std::vector<double> input_vector(const Image& img) const;

    EmbedRole role_;
    std::size_t dim_;
    std::uint64_t seed_;
    std::size_t input_dim_;
    std::vector<double> proj_;      // dim x input_dim
    std::vector<double> word_proj_; // vocab x dim (Semantic only)
    std::vector<double> style_w_;   // Style only
};

/// Lookup by content hash; for tests that need hand-picked vectors.
class TableEmbedder : public EmbeddingBackend {
public:
    explicit TableEmbedder(std::size_t dim, std::string id = "table") : dim_(dim), id_(std::move(id)) {}
    std::string id() const override { return id_; }
    std::size_t dim() const override { return dim_; }
    void set(const std::string& content_hash, std::vector<double> v);
    void set_text(const std::string& text, std::vector<double> v);
    /// Throws ValidationError for unknown images.
    std::vector<double> embed_image(const Image& img) const override;
    bool supports_text() const override { return !text_.empty(); }
    std::vector<double> embed_text(const std::string& text) const override;

private:
    std::size_t dim_;
    std::string id_;
    std::map<std::string, std::vector<double>> table_;
    std::map<std::string, std::vector<double>> text_;
};

// --- feature stacks for the style loss --------------------------------------

/// channels x locations, channel-major.
struct FeatureMap {
    std::size_t channels = 0;
    std::size_t locations = 0;
    std::vector<double> values;
};

class FeatureBackend {
public:
    virtual ~FeatureBackend() = default;
    virtual std::string id() const = 0;
    virtual std::vector<FeatureMap> features(const Image& img) const = 0;
};

/// Three strided random-projection layers with tanh, on a fixed-size
/// center crop. Defaults: 64px input, patch 2, widths 8/16/32.
class RandomFeatureStack : public FeatureBackend {
public:
    explicit RandomFeatureStack(std::uint64_t seed = 0, int input_side = 64,
                                std::vector<std::size_t> widths = {8, 16, 32});
    std::string id() const override;
    std::vector<FeatureMap> features(const Image& img) const override;

private:
    std::uint64_t seed_;
    int input_side_;
    std::vector<std::size_t> widths_;
    std::vector<std::vector<double>> weights_;
};

} // namespace forge
