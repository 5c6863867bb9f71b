#pragma once

#include "forge/common/jsonl.hpp"
#include "forge/taxonomy.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace forge {

enum class ImageSource { WikiArt, Nga, Hq50k, Ffhq, Synthetic, User, Destylized, Stylized };

std::string_view to_string(ImageSource s);
std::optional<ImageSource> parse_image_source(std::string_view s);

/// One image in any pool or manifest.
struct ImageRecord {
    std::string id;
    std::filesystem::path path;
    ImageSource source = ImageSource::User;
    std::optional<ContentClass> content_class;
    std::optional<std::string> style_category; // taxonomy slug or movement
    std::optional<std::string> artist;
    int width = 0;
    int height = 0;
    std::string content_hash;
    // Replay metadata for generated images.
    std::optional<std::string> prompt;
    std::optional<std::uint64_t> seed;

    bool operator==(const ImageRecord&) const = default;
};

void to_json(json& j, const ImageRecord& r);
void from_json(const json& j, ImageRecord& r);

std::vector<ImageRecord> read_image_manifest(const std::filesystem::path& path);
/// Image paths are stored relative to the manifest's directory and
/// resolved back on read, so a run directory can be moved.
/// Sorted by id.
void write_image_manifest(const std::filesystem::path& path, const std::vector<ImageRecord>& records);

/// Handle passed to judge and embedding backends.
struct ImageRef {
    std::string hash;
    std::filesystem::path path;
};

inline ImageRef ref_of(const ImageRecord& r) { return {r.content_hash, r.path}; }

} // namespace forge
