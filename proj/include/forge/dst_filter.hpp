#pragma once

// Two-stage chain-of-thought gate over <style, destylized> pairs.
// Stage 1 rates content preservation region by region; the final content
// score is clamped to the worst region. Only pairs at or above the content
// threshold reach stage 2, which rates how much style was removed
// (5 = fully removed). A pair is accepted when both scores clear their
// thresholds.

#include "forge/common/quarantine.hpp"
#include "forge/judge.hpp"
#include "forge/records.hpp"

#include <optional>
#include <string>
#include <vector>

namespace forge {

enum class RegionStatus { Intact, Degraded, Missing };
enum class AttributeStatus { Removed, Softened, Preserved };
enum class StageReached { ContentOnly, Both };

struct RegionFinding {
    std::string region_name;
    RegionStatus preserved = RegionStatus::Intact;
    int region_score = 0;

    bool operator==(const RegionFinding&) const = default;
};

struct AttributeFinding {
    std::string attribute_name;
    AttributeStatus status = AttributeStatus::Preserved;

    bool operator==(const AttributeFinding&) const = default;
};

struct FilterVerdict {
    std::string pair_id;
    std::string style_id;
    std::string desty_id;
    std::vector<RegionFinding> content_regions;
    int content_score = 0;
    std::vector<AttributeFinding> style_attributes;
    std::optional<int> style_score;
    bool accepted = false;
    StageReached stage_reached = StageReached::ContentOnly;
    std::string content_reasoning;
    std::string style_reasoning;

    bool operator==(const FilterVerdict&) const = default;
};

void to_json(json& j, const FilterVerdict& v);
void from_json(const json& j, FilterVerdict& v);

/// Checks the verdict invariants for the given thresholds; returns an
/// empty string when all hold.
std::string verdict_violation(const FilterVerdict& v, int content_threshold = 4, int style_threshold = 4);

struct ContentAssessment {
    std::vector<RegionFinding> regions;
    int holistic_score = 0;
    int content_score = 0; // holistic clamped to the minimum region score
    std::string reasoning;
};

struct StyleAssessment {
    std::vector<AttributeFinding> attributes;
    int style_score = 0;
    std::string reasoning;
};

/// Parses "Region: name | status | score" lines. Malformed region lines
/// make the whole reply unparseable (nullopt).
std::optional<std::vector<RegionFinding>> parse_region_findings(std::string_view raw);
std::optional<std::vector<AttributeFinding>> parse_attribute_findings(std::string_view raw);

/// Conservative rule: with regions present, the score may not exceed the
/// lowest region score. Zero regions leave the holistic score unchanged.
int clamp_to_regions(int holistic, const std::vector<RegionFinding>& regions);

ContentAssessment score_content(const ImageRecord& style_img, const ImageRecord& desty_img, JudgeClient& judge);
StyleAssessment score_style_discrepancy(const ImageRecord& style_img, const ImageRecord& desty_img,
                                        JudgeClient& judge);

struct GateThresholds {
    int content = 4;
    int style = 4;
};

struct PairRef {
    std::string pair_id;
    ImageRecord style;
    ImageRecord desty;
};

/// Runs both stages with short-circuit. Throws JudgeExhausted (callers
/// quarantine the pair).
FilterVerdict gate(const PairRef& pair, JudgeClient& judge, const GateThresholds& th = {});

/// Pure acceptance rule on already-computed scores.
bool gate_accepts(int content_score, std::optional<int> style_score, const GateThresholds& th = {});

struct FilterRunResult {
    std::vector<FilterVerdict> verdicts; // sorted by pair_id
    QuarantineLog quarantine;
};

FilterRunResult filter_pairs(const std::vector<PairRef>& pairs, JudgeClient& judge, const GateThresholds& th = {});

void write_verdicts(const std::filesystem::path& path, const std::vector<FilterVerdict>& verdicts);
std::vector<FilterVerdict> read_verdicts(const std::filesystem::path& path);

} // namespace forge
