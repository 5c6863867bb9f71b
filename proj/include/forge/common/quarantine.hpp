#pragma once

#include "forge/common/jsonl.hpp"

#include <mutex>
#include <string>
#include <vector>

namespace forge {

struct QuarantineEntry {
    std::string item_id;
    std::string stage;
    std::string reason;

    bool operator==(const QuarantineEntry&) const = default;
};

void to_json(json& j, const QuarantineEntry& e);
void from_json(const json& j, QuarantineEntry& e);

/// Non-fatal per-record failure channel. Each item id is recorded at most
/// once per stage; a repeated add for the same (stage, item) is ignored.
class QuarantineLog {
public:
    QuarantineLog() = default;
    QuarantineLog(const QuarantineLog& other);
    QuarantineLog& operator=(const QuarantineLog& other);

    void add(std::string item_id, std::string stage, std::string reason);
    bool contains(const std::string& item_id) const;
    std::size_t size() const;

    /// Entries sorted by (stage, item_id).
    std::vector<QuarantineEntry> entries() const;

    void merge(const QuarantineLog& other);
    void write(const std::filesystem::path& path) const;

private:
    mutable std::mutex mu_;
    std::vector<QuarantineEntry> entries_;
};

} // namespace forge
