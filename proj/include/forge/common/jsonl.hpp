#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace forge {

using json = nlohmann::json;

/// Reads one JSON object per non-empty line. Throws ParseError naming the
/// offending line.
std::vector<json> read_jsonl(const std::filesystem::path& path);

/// Writes records one per line, sorted by `key` (string field) so that
/// concurrent producers still yield byte-identical files.
void write_jsonl_sorted(const std::filesystem::path& path, std::vector<json> records,
                        const std::string& key);

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records);

json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const json& value);

} // namespace forge
