#include "forge/common/quarantine.hpp"

#include <algorithm>

namespace forge {

void to_json(json& j, const QuarantineEntry& e) {
    j = json{{"item_id", e.item_id}, {"stage", e.stage}, {"reason", e.reason}};
}

void from_json(const json& j, QuarantineEntry& e) {
    j.at("item_id").get_to(e.item_id);
    j.at("stage").get_to(e.stage);
    j.at("reason").get_to(e.reason);
}

QuarantineLog::QuarantineLog(const QuarantineLog& other) : entries_(other.entries()) {}

QuarantineLog& QuarantineLog::operator=(const QuarantineLog& other) {
    if (this != &other) {
        auto copy = other.entries();
        std::lock_guard lock(mu_);
        entries_ = std::move(copy);
    }
    return *this;
}

void QuarantineLog::add(std::string item_id, std::string stage, std::string reason) {
    std::lock_guard lock(mu_);
    for (const auto& e : entries_) {
        if (e.item_id == item_id && e.stage == stage) return;
    }
    entries_.push_back({std::move(item_id), std::move(stage), std::move(reason)});
}

bool QuarantineLog::contains(const std::string& item_id) const {
    std::lock_guard lock(mu_);
    return std::any_of(entries_.begin(), entries_.end(),
                       [&](const QuarantineEntry& e) { return e.item_id == item_id; });
}

std::size_t QuarantineLog::size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
}

std::vector<QuarantineEntry> QuarantineLog::entries() const {
    std::vector<QuarantineEntry> out;
    {
        std::lock_guard lock(mu_);
        out = entries_;
    }
    std::sort(out.begin(), out.end(), [](const QuarantineEntry& a, const QuarantineEntry& b) {
        return std::tie(a.stage, a.item_id) < std::tie(b.stage, b.item_id);
    });
    return out;
}

void QuarantineLog::merge(const QuarantineLog& other) {
    for (auto& e : other.entries()) add(e.item_id, e.stage, e.reason);
}

void QuarantineLog::write(const std::filesystem::path& path) const {
    std::vector<json> rows;
    for (const auto& e : entries()) rows.push_back(e);
    write_jsonl(path, rows);
}

} // namespace forge
