#include "forge/taxonomy.hpp"
#include "forge/common/errors.hpp"
#include "forge/common/rng.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>

namespace forge {

namespace fs = std::filesystem;

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

bool valid_slug(const std::string& slug) {
    if (slug.empty()) return false;
    return std::all_of(slug.begin(), slug.end(), [](unsigned char c) {
        return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-' || c == '_';
    });
}

std::optional<std::string> find_ci(const std::vector<std::string>& names, std::string_view name) {
    const std::string key = lower(name);
    for (const auto& n : names) {
        if (lower(n) == key) return n;
    }
    return std::nullopt;
}

} // namespace

std::string_view to_string(ContentClass c) {
    switch (c) {
    case ContentClass::Human: return "Human";
    case ContentClass::Animal: return "Animal";
    case ContentClass::Plant: return "Plant";
    case ContentClass::Object: return "Object";
    case ContentClass::Scene: return "Scene";
    case ContentClass::Architecture: return "Architecture";
    case ContentClass::AbstractRejected: return "abstract-rejected";
    }
    return "abstract-rejected";
}

std::optional<ContentClass> parse_content_class(std::string_view text) {
    const std::string key = lower(text);
    for (auto c : kContentClasses) {
        if (lower(to_string(c)) == key) return c;
    }
    if (key == "abstract-rejected" || key == "abstract" || key == "ambiguous") {
        return ContentClass::AbstractRejected;
    }
    return std::nullopt;
}

bool StyleTaxonomy::contains(std::string_view slug) const { return find(slug) != nullptr; }

const StyleCategory* StyleTaxonomy::find(std::string_view slug) const {
    for (const auto& c : categories) {
        if (c.slug == slug) return &c;
    }
    return nullptr;
}

bool ContentTree::contains(std::string_view class_name, std::string_view subtype) const {
    for (const auto& c : classes) {
        if (c.name != class_name) continue;
        return std::find(c.subtypes.begin(), c.subtypes.end(), subtype) != c.subtypes.end();
    }
    return false;
}

ArtVocab::ArtVocab(std::vector<std::string> artists, std::vector<std::string> movements)
    : artists_(std::move(artists)), movements_(std::move(movements)) {
    auto check = [](const std::vector<std::string>& names, const char* what) {
        std::unordered_set<std::string> seen;
        for (const auto& n : names) {
            if (n.empty()) throw ValidationError(std::string("empty ") + what + " name");
            if (!seen.insert(lower(n)).second) throw ValidationError(std::string("duplicate ") + what + ": " + n);
        }
    };
    check(artists_, "artist");
    check(movements_, "movement");
}

std::optional<std::string> ArtVocab::find_artist(std::string_view name) const { return find_ci(artists_, name); }
std::optional<std::string> ArtVocab::find_movement(std::string_view name) const {
    return find_ci(movements_, name);
}

StyleTaxonomy parse_taxonomy(const json& doc, const TaxonomyOptions& opts) {
    if (!doc.is_object() || !doc.contains("categories") || !doc["categories"].is_array()) {
        throw ParseError("taxonomy: expected object with a \"categories\" array");
    }
    StyleTaxonomy tax;
    std::unordered_set<std::string> seen;
    for (const auto& entry : doc["categories"]) {
        if (!entry.is_object() || !entry.contains("slug") || !entry["slug"].is_string()) {
            throw ParseError("taxonomy: category entry without string \"slug\"");
        }
        StyleCategory cat;
        cat.slug = entry["slug"].get<std::string>();
        cat.name = entry.value("name", cat.slug);
        cat.descriptor = entry.value("descriptor", std::string{});
        if (!valid_slug(cat.slug)) throw ValidationError("taxonomy: invalid slug \"" + cat.slug + "\"");
        if (!seen.insert(cat.slug).second) throw ValidationError("taxonomy: duplicate slug \"" + cat.slug + "\"");
        tax.categories.push_back(std::move(cat));
    }
    if (tax.categories.empty()) throw ValidationError("taxonomy: no categories");
    if (opts.strict && tax.categories.size() != opts.expected_count) {
        throw ValidationError("taxonomy: expected " + std::to_string(opts.expected_count) +
                              " categories, found " + std::to_string(tax.categories.size()));
    }
    return tax;
}

StyleTaxonomy load_taxonomy(const fs::path& path, const TaxonomyOptions& opts) {
    return parse_taxonomy(read_json_file(path), opts);
}

ContentTree parse_content_tree(const json& doc) {
    if (!doc.is_object() || !doc.contains("classes") || !doc["classes"].is_array()) {
        throw ParseError("content tree: expected object with a \"classes\" array");
    }
    ContentTree tree;
    for (const auto& entry : doc["classes"]) {
        ContentClassNode node;
        try {
            node.name = entry.at("name").get<std::string>();
            node.subtypes = entry.at("subtypes").get<std::vector<std::string>>();
        } catch (const json::exception& e) {
            throw ParseError(std::string("content tree: ") + e.what());
        }
        const auto cls = parse_content_class(node.name);
        if (!cls || *cls == ContentClass::AbstractRejected) {
            throw ValidationError("content tree: unknown class \"" + node.name + "\"");
        }
        node.name = std::string(to_string(*cls));
        if (node.subtypes.size() != kSubtypesPerClass) {
            throw ValidationError("content tree: class " + node.name + " has " +
                                  std::to_string(node.subtypes.size()) + " subtypes, expected 10");
        }
        std::unordered_set<std::string> seen;
        for (const auto& s : node.subtypes) {
            if (s.empty() || !seen.insert(s).second) {
                throw ValidationError("content tree: empty or duplicate subtype in " + node.name);
            }
        }
        tree.classes.push_back(std::move(node));
    }
    if (tree.classes.size() != kContentClasses.size()) {
        throw ValidationError("content tree: expected 6 classes, found " + std::to_string(tree.classes.size()));
    }
    std::unordered_set<std::string> names;
    for (const auto& c : tree.classes) {
        if (!names.insert(c.name).second) throw ValidationError("content tree: duplicate class " + c.name);
    }
    return tree;
}

ContentTree load_content_tree(const fs::path& path) { return parse_content_tree(read_json_file(path)); }

ArtVocab load_art_vocab(const fs::path& path) {
    const json doc = read_json_file(path);
    try {
        return ArtVocab(doc.value("artists", std::vector<std::string>{}),
                        doc.value("movements", std::vector<std::string>{}));
    } catch (const json::exception& e) {
        throw ParseError(std::string("art vocab: ") + e.what());
    }
}

void to_json(json& j, const StyleContentPair& p) {
    j = json{{"pair_id", p.pair_id}, {"style", p.style}, {"content_class", p.content_class}, {"subtype", p.subtype}};
}

void from_json(const json& j, StyleContentPair& p) {
    j.at("pair_id").get_to(p.pair_id);
    j.at("style").get_to(p.style);
    j.at("content_class").get_to(p.content_class);
    j.at("subtype").get_to(p.subtype);
}

std::vector<StyleContentPair> sample_style_content_pairs(const StyleTaxonomy& tax, const ContentTree& tree,
                                                         std::size_t per_style, std::uint64_t seed) {
    if (tax.categories.empty()) throw ValidationError("sample pairs: empty taxonomy");
    if (tree.classes.empty()) throw ValidationError("sample pairs: empty content tree");
    if (per_style == 0) throw ValidationError("sample pairs: per_style must be >= 1");

    std::vector<std::pair<const std::string*, const std::string*>> leaves;
    for (const auto& c : tree.classes) {
        for (const auto& s : c.subtypes) leaves.emplace_back(&c.name, &s);
    }
    if (leaves.empty()) throw ValidationError("sample pairs: content tree has no subtypes");

    SplitMix64 rng(seed);
    std::vector<StyleContentPair> out;
    out.reserve(tax.categories.size() * per_style);
    for (const auto& cat : tax.categories) {
        for (std::size_t i = 0; i < per_style; ++i) {
            const auto& [cls, sub] = leaves[rng.below(leaves.size())];
            char idbuf[32];
            std::snprintf(idbuf, sizeof(idbuf), "%05zu", i);
            out.push_back({cat.slug + "/" + idbuf, cat.slug, *cls, *sub});
        }
    }
    return out;
}

fs::path default_data_dir() {
    if (const char* env = std::getenv("FORGE_DATA_DIR"); env && *env) return env;
    return FORGE_DATA_DIR;
}

} // namespace forge
