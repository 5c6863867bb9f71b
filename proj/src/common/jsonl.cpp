#include "forge/common/jsonl.hpp"
#include "forge/common/errors.hpp"

#include <algorithm>
#include <fstream>

namespace forge {

namespace fs = std::filesystem;

std::vector<json> read_jsonl(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ForgeError("cannot open " + path.string());
    std::vector<json> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(json::parse(line));
        } catch (const json::parse_error& e) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

void write_jsonl(const fs::path& path, const std::vector<json>& records) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ForgeError("cannot write " + tmp.string());
        for (const auto& r : records) out << r.dump() << '\n';
    }
    fs::rename(tmp, path);
}

void write_jsonl_sorted(const fs::path& path, std::vector<json> records, const std::string& key) {
    std::stable_sort(records.begin(), records.end(), [&](const json& a, const json& b) {
        return a.at(key).get_ref<const std::string&>() < b.at(key).get_ref<const std::string&>();
    });
    write_jsonl(path, records);
}

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ForgeError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

void write_json_file(const fs::path& path, const json& value) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ForgeError("cannot write " + tmp.string());
        out << value.dump(2) << '\n';
    }
    fs::rename(tmp, path);
}

} // namespace forge
