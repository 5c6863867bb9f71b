#pragma once

#include <array>
#include <filesystem>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "forge/common/jsonl.hpp"
#include "forge/common/quarantine.hpp"
#include "forge/embedding.hpp"
#include "forge/judge.hpp"
#include "forge/records.hpp"
#include "forge/stylizer.hpp"

namespace forge {

// --- primitives -------------------------------------------------------------

/// Mean over layers of the mean squared difference between per-layer Gram
/// matrices G = F F^T / (channels * locations). Throws ValidationError when
/// the stacks differ in depth or layer shape.
double gram_style_loss(const std::vector<FeatureMap>& a, const std::vector<FeatureMap>& b);
double gram_style_loss(const Image& a, const Image& b, const FeatureBackend& features);

/// Throws ValidationError on length mismatch, NumericError on a zero-norm
/// input.
double cosine(std::span<const double> a, std::span<const double> b);

double embed_cosine(const Image& a, const Image& b, const EmbeddingBackend& backend);
double embed_cosine(const Image& img, const std::string& text, const EmbeddingBackend& backend);

struct JudgeScores {
    std::optional<double> content;
    std::optional<double> style;
    std::optional<double> aesthetic;
};

/// Three 0-10 judge calls: (stylized, content), (stylized, style) and
/// (stylized) alone. A failed call leaves its score null and, when `log`
/// is given, adds a quarantine entry for `item_id`.
JudgeScores judge_scores(const ImageRef& stylized, const ImageRef& content, const ImageRef& style, JudgeClient& judge,
                         QuarantineLog* log = nullptr, const std::string& item_id = {});

// --- reports ----------------------------------------------------------------

enum class Metric { Dino, Clip, Csd, StyleLoss, QwenContent, QwenStyle, QwenAesthetic };
inline constexpr std::size_t kMetricCount = 7;
inline constexpr std::array<Metric, kMetricCount> kMetrics{Metric::Dino,        Metric::Clip,      Metric::Csd,
                                                          Metric::StyleLoss,   Metric::QwenContent,
                                                          Metric::QwenStyle,   Metric::QwenAesthetic};

/// JSON field name, e.g. "dino_score".
std::string_view field_name(Metric m);
/// Table row label, e.g. "DINO-Score ↑".
std::string_view table_label(Metric m);

struct MetricReport {
    std::string method;
    std::string content_id;
    std::string style_id;
    std::string stylized_hash;
    std::string caption;
    std::string caption_source;
    std::array<std::optional<double>, kMetricCount> values;
    std::vector<std::string> failures;

    std::optional<double>& operator[](Metric m) { return values[static_cast<std::size_t>(m)]; }
    const std::optional<double>& operator[](Metric m) const { return values[static_cast<std::size_t>(m)]; }
    bool operator==(const MetricReport&) const = default;
};

void to_json(json& j, const MetricReport& r);
void from_json(const json& j, MetricReport& r);

/// Empty string when the report satisfies its range invariants, otherwise
/// a description of the first violation.
std::string report_violation(const MetricReport& r);

struct BenchmarkSpec {
    std::vector<std::string> content_ids;
    std::vector<std::string> style_ids;
    std::vector<std::string> methods;
    std::optional<std::filesystem::path> contents_manifest;
    std::optional<std::filesystem::path> styles_manifest;

    std::size_t jobs_per_method() const { return content_ids.size() * style_ids.size(); }
    std::size_t job_count() const { return jobs_per_method() * methods.size(); }
};

void to_json(json& j, const BenchmarkSpec& s);
void from_json(const json& j, BenchmarkSpec& s);
BenchmarkSpec load_benchmark_spec(const std::filesystem::path& path);

/// (content_id, style_id) pairs in enumeration order.
std::vector<std::pair<std::string, std::string>> enumerate_jobs(const BenchmarkSpec& spec);

struct MetricAggregate {
    std::string method;
    std::size_t cells = 0;
    std::size_t failed_cells = 0;
    std::array<std::optional<double>, kMetricCount> means; // null when no cell has the metric
    std::array<std::size_t, kMetricCount> counts{};
};

void to_json(json& j, const MetricAggregate& a);

/// Arithmetic means over non-null cells, recomputed from the reports alone.
MetricAggregate aggregate(const std::string& method, const std::vector<MetricReport>& reports);

/// Markdown with one row per metric and one column per method.
std::string render_table(const std::vector<MetricAggregate>& aggregates);

/// Sorted by (method, content_id, style_id).
void write_reports(const std::filesystem::path& path, std::vector<MetricReport> reports);
std::vector<MetricReport> read_reports(const std::filesystem::path& path);

// --- runner -----------------------------------------------------------------

/// Per-cell result cache, in memory and optionally on disk
/// (`<dir>/<key>.json`). Thread-safe.
class CellCache {
public:
    explicit CellCache(std::optional<std::filesystem::path> dir = std::nullopt) : dir_(std::move(dir)) {}
    std::optional<MetricReport> get(const std::string& key);
    void put(const std::string& key, const MetricReport& report);

private:
    std::optional<std::filesystem::path> dir_;
    std::mutex mu_;
    std::unordered_map<std::string, MetricReport> memo_;
};

struct MetricBackends {
    const EmbeddingBackend* dino = nullptr;
    const EmbeddingBackend* clip = nullptr;
    const EmbeddingBackend* csd = nullptr;
    const FeatureBackend* features = nullptr;
    JudgeClient* judge = nullptr; // captions and Qwen scores; optional
};

struct BenchmarkOptions {
    std::filesystem::path out_dir; // stylized images go to out_dir/stylized/<method>/
    std::uint64_t seed = 0;
    CellCache* cache = nullptr;
};

struct BenchmarkResult {
    std::vector<MetricReport> reports; // enumeration order
    MetricAggregate aggregate;
    QuarantineLog quarantine;
    std::size_t computed_cells = 0;
    std::size_t cached_cells = 0;
};

/// Runs every (content, style) cell of `spec` through `method`. `contents`
/// and `styles` must resolve every id in the spec (ValidationError
/// otherwise). Cells run in parallel.
BenchmarkResult run_benchmark(const BenchmarkSpec& spec, const std::vector<ImageRecord>& contents,
                              const std::vector<ImageRecord>& styles, const StylizerBackend& method,
                              const MetricBackends& backends, const BenchmarkOptions& opts);

/// Cache key over (method, content hash, style hash, backend ids, seed).
std::string cell_key(const std::string& method_id, const std::string& content_hash, const std::string& style_hash,
                     const MetricBackends& backends, std::uint64_t seed);

} // namespace forge
