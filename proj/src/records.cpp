#include "forge/records.hpp"
#include "forge/common/errors.hpp"

#include <algorithm>
#include <array>
#include <utility>

namespace forge {

namespace {

constexpr std::array<std::pair<ImageSource, std::string_view>, 8> kSources = {{
    {ImageSource::WikiArt, "wikiart"},
    {ImageSource::Nga, "nga"},
    {ImageSource::Hq50k, "hq50k"},
    {ImageSource::Ffhq, "ffhq"},
    {ImageSource::Synthetic, "synthetic"},
    {ImageSource::User, "user"},
    {ImageSource::Destylized, "destylized"},
    {ImageSource::Stylized, "stylized"},
}};

template <typename T>
void put_optional(json& j, const char* key, const std::optional<T>& v) {
    if (v) {
        j[key] = *v;
    } else {
        j[key] = nullptr;
    }
}

template <typename T>
std::optional<T> get_optional(const json& j, const char* key) {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return j[key].get<T>();
}

} // namespace

std::string_view to_string(ImageSource s) {
    for (const auto& [k, v] : kSources) {
        if (k == s) return v;
    }
    return "user";
}

std::optional<ImageSource> parse_image_source(std::string_view s) {
    for (const auto& [k, v] : kSources) {
        if (v == s) return k;
    }
    return std::nullopt;
}

void to_json(json& j, const ImageRecord& r) {
    j = json::object();
    j["id"] = r.id;
    j["path"] = r.path.generic_string();
    j["source"] = std::string(to_string(r.source));
    if (r.content_class) {
        j["content_class"] = std::string(to_string(*r.content_class));
    } else {
        j["content_class"] = nullptr;
    }
    put_optional(j, "style_category", r.style_category);
    put_optional(j, "artist", r.artist);
    j["width"] = r.width;
    j["height"] = r.height;
    j["content_hash"] = r.content_hash;
    if (r.prompt) j["prompt"] = *r.prompt;
    if (r.seed) j["seed"] = *r.seed;
}

void from_json(const json& j, ImageRecord& r) {
    try {
        r.id = j.at("id").get<std::string>();
        r.path = j.at("path").get<std::string>();
        const auto src = parse_image_source(j.at("source").get<std::string>());
        if (!src) throw ParseError("image record " + r.id + ": unknown source");
        r.source = *src;
        r.content_class.reset();
        if (auto cls = get_optional<std::string>(j, "content_class")) {
            r.content_class = parse_content_class(*cls);
            if (!r.content_class) throw ParseError("image record " + r.id + ": unknown content_class " + *cls);
        }
        r.style_category = get_optional<std::string>(j, "style_category");
        r.artist = get_optional<std::string>(j, "artist");
        r.width = j.at("width").get<int>();
        r.height = j.at("height").get<int>();
        r.content_hash = j.at("content_hash").get<std::string>();
        r.prompt = get_optional<std::string>(j, "prompt");
        r.seed = get_optional<std::uint64_t>(j, "seed");
    } catch (const json::exception& e) {
        throw ParseError(std::string("image record: ") + e.what());
    }
}

namespace {

std::filesystem::path manifest_base(const std::filesystem::path& manifest) {
    return std::filesystem::absolute(manifest).lexically_normal().parent_path();
}

} // namespace

std::vector<ImageRecord> read_image_manifest(const std::filesystem::path& path) {
    const auto base = manifest_base(path);
    std::vector<ImageRecord> out;
    for (const auto& row : read_jsonl(path)) {
        auto rec = row.get<ImageRecord>();
        if (rec.path.is_relative()) rec.path = (base / rec.path).lexically_normal();
        out.push_back(std::move(rec));
    }
    return out;
}

void write_image_manifest(const std::filesystem::path& path, const std::vector<ImageRecord>& records) {
    const auto base = manifest_base(path);
    std::vector<json> rows;
    rows.reserve(records.size());
    for (auto r : records) {
        const auto abs = std::filesystem::absolute(r.path).lexically_normal();
        r.path = abs.lexically_relative(base);
        if (r.path.empty()) r.path = abs;
        rows.emplace_back(r);
    }
    write_jsonl_sorted(path, std::move(rows), "id");
}

} // namespace forge
