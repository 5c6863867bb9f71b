#include "forge/dst_filter.hpp"
#include "forge/common/errors.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace forge {

namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

std::vector<std::string> split_bar(const std::string& s) {
    std::vector<std::string> parts;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, '|')) parts.push_back(trim(item));
    return parts;
}

// Lines of the form "<tag>: a | b | c", with optional list markers.
std::vector<std::string> tagged_lines(std::string_view raw, const std::string& tag) {
    std::vector<std::string> out;
    std::istringstream in{std::string(raw)};
    std::string line;
    while (std::getline(in, line)) {
        std::string t = trim(line);
        while (!t.empty() && (t[0] == '-' || t[0] == '*' || t[0] == ' ')) t.erase(0, 1);
        const auto colon = t.find(':');
        if (colon == std::string::npos) continue;
        if (lower(trim(t.substr(0, colon))) != tag) continue;
        out.push_back(trim(t.substr(colon + 1)));
    }
    return out;
}

std::optional<RegionStatus> parse_region_status(const std::string& s) {
    const std::string k = lower(s);
    if (k == "intact" || k == "preserved") return RegionStatus::Intact;
    if (k == "degraded" || k == "distorted") return RegionStatus::Degraded;
    if (k == "missing" || k == "lost") return RegionStatus::Missing;
    return std::nullopt;
}

std::optional<AttributeStatus> parse_attribute_status(const std::string& s) {
    const std::string k = lower(s);
    if (k == "removed") return AttributeStatus::Removed;
    if (k == "softened") return AttributeStatus::Softened;
    if (k == "preserved") return AttributeStatus::Preserved;
    return std::nullopt;
}

const char* to_string(RegionStatus s) {
    switch (s) {
    case RegionStatus::Intact: return "intact";
    case RegionStatus::Degraded: return "degraded";
    case RegionStatus::Missing: return "missing";
    }
    return "intact";
}

const char* to_string(AttributeStatus s) {
    switch (s) {
    case AttributeStatus::Removed: return "removed";
    case AttributeStatus::Softened: return "softened";
    case AttributeStatus::Preserved: return "preserved";
    }
    return "preserved";
}

} // namespace

std::optional<std::vector<RegionFinding>> parse_region_findings(std::string_view raw) {
    std::vector<RegionFinding> out;
    for (const auto& body : tagged_lines(raw, "region")) {
        const auto parts = split_bar(body);
        if (parts.size() != 3 || parts[0].empty()) return std::nullopt;
        const auto status = parse_region_status(parts[1]);
        if (!status) return std::nullopt;
        const auto score = parse_score(parts[2], 0, 5);
        if (!score || *score != static_cast<int>(*score)) return std::nullopt;
        out.push_back({parts[0], *status, static_cast<int>(*score)});
    }
    return out;
}

std::optional<std::vector<AttributeFinding>> parse_attribute_findings(std::string_view raw) {
    std::vector<AttributeFinding> out;
    for (const auto& body : tagged_lines(raw, "attribute")) {
        const auto parts = split_bar(body);
        if (parts.size() != 2 || parts[0].empty()) return std::nullopt;
        const auto status = parse_attribute_status(parts[1]);
        if (!status) return std::nullopt;
        out.push_back({parts[0], *status});
    }
    return out;
}

int clamp_to_regions(int holistic, const std::vector<RegionFinding>& regions) {
    int score = holistic;
    for (const auto& r : regions) score = std::min(score, r.region_score);
    return score;
}

namespace {

bool integral_score(const JudgeReply& r) { return r.score && *r.score == static_cast<int>(*r.score); }

} // namespace

ContentAssessment score_content(const ImageRecord& style_img, const ImageRecord& desty_img, JudgeClient& judge) {
    JudgeRequest req;
    req.template_id = templates::kFilterContent;
    req.images = {ref_of(style_img), ref_of(desty_img)};
    req.kind = ReplyKind::Findings;
    req.lo = 0;
    req.hi = 5;
    req.accept = [](const JudgeReply& r) { return integral_score(r) && parse_region_findings(r.text).has_value(); };
    const JudgeReply reply = judge.ask(req);

    ContentAssessment out;
    out.regions = *parse_region_findings(reply.text);
    out.holistic_score = static_cast<int>(*reply.score);
    out.content_score = clamp_to_regions(out.holistic_score, out.regions);
    out.reasoning = reply.raw_text;
    return out;
}

StyleAssessment score_style_discrepancy(const ImageRecord& style_img, const ImageRecord& desty_img,
                                        JudgeClient& judge) {
    JudgeRequest req;
    req.template_id = templates::kFilterStyle;
    req.images = {ref_of(style_img), ref_of(desty_img)};
    req.kind = ReplyKind::Findings;
    req.lo = 0;
    req.hi = 5;
    req.accept = [](const JudgeReply& r) {
        return integral_score(r) && parse_attribute_findings(r.text).has_value();
    };
    const JudgeReply reply = judge.ask(req);

    StyleAssessment out;
    out.attributes = *parse_attribute_findings(reply.text);
    out.style_score = static_cast<int>(*reply.score);
    out.reasoning = reply.raw_text;
    return out;
}

bool gate_accepts(int content_score, std::optional<int> style_score, const GateThresholds& th) {
    return content_score >= th.content && style_score && *style_score >= th.style;
}

FilterVerdict gate(const PairRef& pair, JudgeClient& judge, const GateThresholds& th) {
    FilterVerdict v;
    v.pair_id = pair.pair_id;
    v.style_id = pair.style.id;
    v.desty_id = pair.desty.id;

    auto content = score_content(pair.style, pair.desty, judge);
    v.content_regions = std::move(content.regions);
    v.content_score = content.content_score;
    v.content_reasoning = std::move(content.reasoning);
    if (v.content_score < th.content) {
        v.stage_reached = StageReached::ContentOnly;
        v.accepted = false;
        return v;
    }

    auto style = score_style_discrepancy(pair.style, pair.desty, judge);
    v.stage_reached = StageReached::Both;
    v.style_attributes = std::move(style.attributes);
    v.style_score = style.style_score;
    v.style_reasoning = std::move(style.reasoning);
    v.accepted = gate_accepts(v.content_score, v.style_score, th);
    return v;
}

std::string verdict_violation(const FilterVerdict& v, int content_threshold, int style_threshold) {
    if (v.content_score < 0 || v.content_score > 5) return "content_score out of range";
    if (v.style_score && (*v.style_score < 0 || *v.style_score > 5)) return "style_score out of range";
    if (v.accepted && !(v.content_score >= content_threshold && v.style_score && *v.style_score >= style_threshold)) {
        return "accepted without passing both thresholds";
    }
    if (v.style_score.has_value() == (v.content_score < content_threshold)) {
        return "style_score must be null exactly when content fails";
    }
    for (const auto& r : v.content_regions) {
        if (r.region_score < 0 || r.region_score > 5) return "region_score out of range";
        if (v.content_score > r.region_score) return "content_score exceeds a region score";
    }
    for (const auto& a : v.style_attributes) {
        if (a.attribute_name.empty()) return "empty attribute name";
    }
    return {};
}

void to_json(json& j, const FilterVerdict& v) {
    json regions = json::array();
    for (const auto& r : v.content_regions) {
        regions.push_back({{"region_name", r.region_name}, {"preserved", to_string(r.preserved)},
                           {"region_score", r.region_score}});
    }
    json attrs = json::array();
    for (const auto& a : v.style_attributes) {
        attrs.push_back({{"attribute_name", a.attribute_name}, {"status", to_string(a.status)}});
    }
    j = json{{"pair_id", v.pair_id},
             {"style_id", v.style_id},
             {"desty_id", v.desty_id},
             {"content_regions", regions},
             {"content_score", v.content_score},
             {"style_attributes", attrs},
             {"style_score", v.style_score ? json(*v.style_score) : json(nullptr)},
             {"accepted", v.accepted},
             {"stage_reached", v.stage_reached == StageReached::Both ? "both" : "content_only"},
             {"content_reasoning", v.content_reasoning},
             {"style_reasoning", v.style_reasoning}};
}

void from_json(const json& j, FilterVerdict& v) {
    try {
        j.at("pair_id").get_to(v.pair_id);
        v.style_id = j.value("style_id", std::string{});
        v.desty_id = j.value("desty_id", std::string{});
        v.content_regions.clear();
        for (const auto& r : j.at("content_regions")) {
            auto st = parse_region_status(r.at("preserved").get<std::string>());
            if (!st) throw ParseError("verdict: bad region status");
            v.content_regions.push_back({r.at("region_name").get<std::string>(), *st, r.at("region_score").get<int>()});
        }
        j.at("content_score").get_to(v.content_score);
        v.style_attributes.clear();
        for (const auto& a : j.at("style_attributes")) {
            auto st = parse_attribute_status(a.at("status").get<std::string>());
            if (!st) throw ParseError("verdict: bad attribute status");
            v.style_attributes.push_back({a.at("attribute_name").get<std::string>(), *st});
        }
        v.style_score.reset();
        if (!j.at("style_score").is_null()) v.style_score = j["style_score"].get<int>();
        j.at("accepted").get_to(v.accepted);
        const auto stage = j.at("stage_reached").get<std::string>();
        if (stage == "both") {
            v.stage_reached = StageReached::Both;
        } else if (stage == "content_only") {
            v.stage_reached = StageReached::ContentOnly;
        } else {
            throw ParseError("verdict: bad stage_reached " + stage);
        }
        v.content_reasoning = j.value("content_reasoning", std::string{});
        v.style_reasoning = j.value("style_reasoning", std::string{});
    } catch (const json::exception& e) {
        throw ParseError(std::string("verdict: ") + e.what());
    }
}

FilterRunResult filter_pairs(const std::vector<PairRef>& pairs, JudgeClient& judge, const GateThresholds& th) {
    if (th.content < 0 || th.content > 5 || th.style < 0 || th.style > 5) {
        throw ValidationError("filter: thresholds must lie in [0,5]");
    }
    FilterRunResult result;
    std::vector<std::optional<FilterVerdict>> slots(pairs.size());
    const auto n = static_cast<std::int64_t>(pairs.size());
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < n; ++i) {
        const auto& p = pairs[static_cast<std::size_t>(i)];
        try {
            slots[static_cast<std::size_t>(i)] = gate(p, judge, th);
        } catch (const ForgeError& e) {
            result.quarantine.add(p.pair_id, "filter", e.what());
        }
    }
    for (auto& s : slots) {
        if (s) result.verdicts.push_back(std::move(*s));
    }
    std::sort(result.verdicts.begin(), result.verdicts.end(),
              [](const FilterVerdict& a, const FilterVerdict& b) { return a.pair_id < b.pair_id; });
    return result;
}

void write_verdicts(const std::filesystem::path& path, const std::vector<FilterVerdict>& verdicts) {
    std::vector<json> rows;
    for (const auto& v : verdicts) rows.emplace_back(v);
    write_jsonl_sorted(path, std::move(rows), "pair_id");
}

std::vector<FilterVerdict> read_verdicts(const std::filesystem::path& path) {
    std::vector<FilterVerdict> out;
    for (const auto& row : read_jsonl(path)) out.push_back(row.get<FilterVerdict>());
    return out;
}

} // namespace forge
