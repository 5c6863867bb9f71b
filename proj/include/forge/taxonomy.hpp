#pragma once

#include "forge/common/jsonl.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace forge {

enum class ContentClass { Human, Animal, Plant, Object, Scene, Architecture, AbstractRejected };

inline constexpr std::array<ContentClass, 6> kContentClasses = {
    ContentClass::Human, ContentClass::Animal, ContentClass::Plant,
    ContentClass::Object, ContentClass::Scene, ContentClass::Architecture};

std::string_view to_string(ContentClass c);
/// Case-insensitive; accepts "abstract-rejected" and, as judge shorthand,
/// "abstract" or "ambiguous".
std::optional<ContentClass> parse_content_class(std::string_view text);

struct StyleCategory {
    std::string slug;
    std::string name;
    std::string descriptor;
};

struct StyleTaxonomy {
    std::vector<StyleCategory> categories;

    std::size_t size() const { return categories.size(); }
    bool contains(std::string_view slug) const;
    const StyleCategory* find(std::string_view slug) const;
};

struct ContentClassNode {
    std::string name;
    std::vector<std::string> subtypes;
};

struct ContentTree {
    std::vector<ContentClassNode> classes;

    bool contains(std::string_view class_name, std::string_view subtype) const;
};

/// Artist and movement vocabularies; lookups ignore case.
class ArtVocab {
public:
    ArtVocab() = default;
    ArtVocab(std::vector<std::string> artists, std::vector<std::string> movements);

    const std::vector<std::string>& artists() const { return artists_; }
    const std::vector<std::string>& movements() const { return movements_; }

    /// Canonical spelling of a known artist/movement, or nullopt.
    std::optional<std::string> find_artist(std::string_view name) const;
    std::optional<std::string> find_movement(std::string_view name) const;

private:
    std::vector<std::string> artists_;
    std::vector<std::string> movements_;
};

inline constexpr std::size_t kDefaultTaxonomySize = 65;
inline constexpr std::size_t kSubtypesPerClass = 10;

struct TaxonomyOptions {
    bool strict = true;
    std::size_t expected_count = kDefaultTaxonomySize;
};

StyleTaxonomy parse_taxonomy(const json& doc, const TaxonomyOptions& opts = {});
StyleTaxonomy load_taxonomy(const std::filesystem::path& path, const TaxonomyOptions& opts = {});

ContentTree parse_content_tree(const json& doc);
ContentTree load_content_tree(const std::filesystem::path& path);

ArtVocab load_art_vocab(const std::filesystem::path& path);

struct StyleContentPair {
    std::string pair_id;
    std::string style;         // taxonomy slug
    std::string content_class; // one of the six class names
    std::string subtype;
};

void to_json(json& j, const StyleContentPair& p);
void from_json(const json& j, StyleContentPair& p);

/// Exactly `per_style` pairs for each category, subtypes drawn uniformly
/// from the flattened tree with SplitMix64(seed). Output order: category
/// order, then draw order.
std::vector<StyleContentPair> sample_style_content_pairs(const StyleTaxonomy& tax,
                                                         const ContentTree& tree,
                                                         std::size_t per_style, std::uint64_t seed);

/// Directory holding the shipped data files (taxonomy, tree, prompts).
std::filesystem::path default_data_dir();

} // namespace forge
