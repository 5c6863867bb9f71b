#pragma once

// Client for multimodal judge / caption backends: prompt templates, reply
// grammar, retries with a structured re-ask, response cache and bounded
// concurrency.
//
// Reply grammar (all judges):
//   - scores:   last "Score: N" line wins; otherwise "N/M" takes N;
//               otherwise a bare trailing number. N outside [lo, hi] fails.
//   - labels:   last "Label: X" line, else a single-line reply.
//   - captions: last "Caption: ..." line, else the whole trimmed reply.

#include "forge/common/errors.hpp"
#include "forge/common/jsonl.hpp"
#include "forge/common/quarantine.hpp"
#include "forge/records.hpp"

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <span>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

namespace forge {

struct JudgePrompt {
    std::string template_id;
    std::string rendered_text;
    std::vector<std::string> attached_image_hashes;
    int max_tokens = 512;
};

enum class ReplyKind { Score, Label, Caption, Findings };

struct JudgeReply {
    std::string raw_text;
    ReplyKind kind = ReplyKind::Caption;
    bool parsed_ok = false;
    std::optional<double> score;
    std::string text; // label or caption; full text for findings
    std::string backend_id;
    double latency_ms = 0.0;
    int attempts = 0;
    bool from_cache = false;
};

/// Adapter contract: rendered text plus images in, raw reply text out.
/// Implementations throw BackendError on transport failure.
class JudgeBackend {
public:
    virtual ~JudgeBackend() = default;
    virtual std::string id() const = 0;
    virtual std::string send(const JudgePrompt& prompt, const std::vector<ImageRef>& images) = 0;
};

// --- reply grammar ---------------------------------------------------------

std::optional<double> parse_score(std::string_view raw, double lo, double hi);
std::optional<std::string> parse_tagged_line(std::string_view raw, std::string_view tag);
std::optional<std::string> parse_label(std::string_view raw);
std::optional<std::string> parse_caption(std::string_view raw);

// --- templates -------------------------------------------------------------

/// Versioned prompt texts loaded from `<dir>/<template_id>.txt`.
/// Placeholders are written `{name}`.
class PromptLibrary {
public:
    static PromptLibrary load(const std::filesystem::path& dir);

    bool has(const std::string& template_id) const;
    const std::string& text(const std::string& template_id) const;
    /// First 16 hex chars of SHA-256 over the template text.
    std::string template_hash(const std::string& template_id) const;
    std::string render(const std::string& template_id, const std::map<std::string, std::string>& vars) const;

    void add(std::string template_id, std::string text);

private:
    std::map<std::string, std::string> templates_;
};

namespace templates {
inline constexpr const char* kClassifyContent = "classify_content";
inline constexpr const char* kCaptionContent = "caption_content";
inline constexpr const char* kImagineDestyled = "imagine_destyled";
inline constexpr const char* kComposeStylePrompt = "compose_style_prompt";
inline constexpr const char* kFilterContent = "filter_content_cot";
inline constexpr const char* kFilterStyle = "filter_style_cot";
inline constexpr const char* kEvalContent = "eval_content";
inline constexpr const char* kEvalStyle = "eval_style";
inline constexpr const char* kEvalAesthetic = "eval_aesthetic";
inline constexpr const char* kReask = "reask";
} // namespace templates

// --- client ----------------------------------------------------------------

struct JudgeClientOptions {
    int max_attempts = 3;
    int max_inflight = 4;
    std::optional<std::filesystem::path> cache_dir;
};

/// Raised when every attempt failed to yield a parseable reply.
class JudgeExhausted : public ForgeError {
public:
    using ForgeError::ForgeError;
};

struct JudgeRequest {
    std::string template_id;
    std::map<std::string, std::string> vars;
    std::vector<ImageRef> images;
    ReplyKind kind = ReplyKind::Caption;
    double lo = 0.0;
    double hi = 5.0;
    /// Extra validation of a parsed reply (e.g. findings must contain a
    /// score); returning false counts as a parse failure.
    std::function<bool(const JudgeReply&)> accept;
};

class JudgeClient {
public:
    JudgeClient(std::shared_ptr<JudgeBackend> backend, PromptLibrary prompts, JudgeClientOptions opts = {});

    /// Issues the request, retrying (first with the same prompt, then with
    /// the re-ask suffix) up to max_attempts. Throws JudgeExhausted.
    JudgeReply ask(const JudgeRequest& req);

    std::string caption_content(const ImageRecord& img);
    std::string imagine_destyled_content(const ImageRecord& style_img);
    std::string compose_style_prompt(const StyleCategory& style, const std::string& content_class,
                                     const std::string& subtype);

    const PromptLibrary& prompts() const { return prompts_; }
    std::string backend_id() const { return backend_->id(); }
    std::uint64_t backend_calls() const { return backend_calls_.load(); }
    std::uint64_t cache_hits() const { return cache_hits_.load(); }

    /// Cache key path relative to the cache root:
    /// `<backend_id>/<template_hash>/<request_hash>.json`.
    std::string cache_key(const JudgeRequest& req) const;

private:
    std::optional<std::string> cache_get(const std::string& key);
    void cache_put(const std::string& key, const std::string& raw);
    JudgeReply parse_reply(const JudgeRequest& req, std::string raw) const;

    std::shared_ptr<JudgeBackend> backend_;
    PromptLibrary prompts_;
    JudgeClientOptions opts_;
    std::counting_semaphore<1024> inflight_;
    std::shared_mutex cache_mu_;
    std::unordered_map<std::string, std::string> memo_;
    std::atomic<std::uint64_t> backend_calls_{0};
    std::atomic<std::uint64_t> cache_hits_{0};
};

// --- mock backend ----------------------------------------------------------

/// Deterministic offline judge. Replies come from fixtures keyed by
/// (template_id, attached image hashes); unmatched requests get a reply
/// synthesized from a hash of the request, so a whole pipeline run is a
/// pure function of its inputs.
class MockJudge : public JudgeBackend {
public:
    struct Fixture {
        std::string template_id;
        std::vector<std::string> image_hashes; // empty = any images
        std::vector<std::string> replies;      // consumed in order, last one repeats
        bool fail = false;                      // throw BackendError instead
    };

    explicit MockJudge(std::string id = "mock") : id_(std::move(id)) {}

    static std::shared_ptr<MockJudge> from_fixture_file(const std::filesystem::path& path);

    std::string id() const override { return id_; }
    std::string send(const JudgePrompt& prompt, const std::vector<ImageRef>& images) override;

    void add_fixture(Fixture f);
    void set_default(std::function<std::string(const JudgePrompt&)> fn) { default_ = std::move(fn); }

    std::uint64_t calls(const std::string& template_id) const;
    std::uint64_t total_calls() const;
    void reset_counts();

    /// Default reply synthesizer (grammar-conforming, hash-driven).
    static std::string synthesize(const JudgePrompt& prompt);

private:
    std::string id_;
    mutable std::mutex mu_;
    std::vector<Fixture> fixtures_;
    std::map<std::size_t, std::size_t> cursor_;
    std::map<std::string, std::uint64_t> calls_;
    std::function<std::string(const JudgePrompt&)> default_;
};

// --- HTTP backend ----------------------------------------------------------

struct HttpJudgeOptions {
    std::string base_url = "https://api.openai.com"; // scheme://host[:port]
    std::string path = "/v1/chat/completions";
    std::string model = "gpt-4o";
    std::string api_key_env = "FORGE_JUDGE_API_KEY";
    int timeout_s = 120;
};

/// Chat-completions style adapter. Images are sent inline as base64 PNG
/// data URLs; the API key is read from the environment at call time.
class HttpChatJudge : public JudgeBackend {
public:
    explicit HttpChatJudge(HttpJudgeOptions opts);
    std::string id() const override;
    std::string send(const JudgePrompt& prompt, const std::vector<ImageRef>& images) override;

    /// Request body for a prompt (exposed for tests).
    json build_body(const JudgePrompt& prompt, const std::vector<ImageRef>& images) const;
    static std::string extract_content(const json& response);

private:
    HttpJudgeOptions opts_;
};

std::string base64_encode(std::span<const std::uint8_t> bytes);

} // namespace forge
