#include "forge/judge.hpp"
#include "forge/common/digest.hpp"
#include "forge/common/errors.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <regex>
#include <sstream>

namespace forge {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

// Strips markdown emphasis so "**Score:** 4" parses like "Score: 4".
std::string strip_emphasis(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        if (c != '*' && c != '`') out.push_back(c);
    }
    return out;
}

std::optional<double> in_range(double v, double lo, double hi) {
    if (!(v >= lo && v <= hi)) return std::nullopt;
    return v;
}

} // namespace

std::optional<double> parse_score(std::string_view raw, double lo, double hi) {
    if (!(lo < hi)) throw ValidationError("parse_score: lo must be < hi");
    const std::string text = strip_emphasis(raw);
    static const std::regex kTagged(R"(score\s*[:=]\s*(-?\d+(?:\.\d+)?))", std::regex::icase);
    static const std::regex kFraction(R"((-?\d+(?:\.\d+)?)\s*/\s*\d+(?:\.\d+)?)");
    static const std::regex kTrailing(R"((-?\d+(?:\.\d+)?)[\s.!)\]]*$)");

    auto last_match = [&](const std::regex& re) -> std::optional<double> {
        std::optional<double> found;
        for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator(); ++it) {
            found = std::stod((*it)[1].str());
        }
        return found;
    };

    if (auto v = last_match(kTagged)) return in_range(*v, lo, hi);
    if (auto v = last_match(kFraction)) return in_range(*v, lo, hi);
    std::smatch m;
    if (std::regex_search(text, m, kTrailing)) return in_range(std::stod(m[1].str()), lo, hi);
    return std::nullopt;
}

std::optional<std::string> parse_tagged_line(std::string_view raw, std::string_view tag) {
    const std::string text = strip_emphasis(raw);
    std::istringstream in(text);
    std::string line;
    std::optional<std::string> found;
    std::string want(tag);
    std::transform(want.begin(), want.end(), want.begin(), [](unsigned char c) { return std::tolower(c); });
    while (std::getline(in, line)) {
        const std::string t = trim(line);
        const auto colon = t.find(':');
        if (colon == std::string::npos) continue;
        std::string head = trim(std::string_view(t).substr(0, colon));
        std::transform(head.begin(), head.end(), head.begin(), [](unsigned char c) { return std::tolower(c); });
        if (head != want) continue;
        std::string value = trim(std::string_view(t).substr(colon + 1));
        if (!value.empty()) found = value;
    }
    return found;
}

std::optional<std::string> parse_label(std::string_view raw) {
    if (auto v = parse_tagged_line(raw, "label")) return v;
    const std::string t = trim(strip_emphasis(raw));
    if (t.empty() || t.find('\n') != std::string::npos) return std::nullopt;
    std::string v = t;
    while (!v.empty() && (v.back() == '.' || v.back() == '!')) v.pop_back();
    if (v.empty()) return std::nullopt;
    return v;
}

std::optional<std::string> parse_caption(std::string_view raw) {
    if (auto v = parse_tagged_line(raw, "caption")) return v;
    std::string t = trim(raw);
    if (t.empty()) return std::nullopt;
    return t;
}

// --- PromptLibrary ---------------------------------------------------------

PromptLibrary PromptLibrary::load(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw ForgeError("prompt directory not found: " + dir.string());
    PromptLibrary lib;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
        std::ifstream in(entry.path(), std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        lib.add(entry.path().stem().string(), ss.str());
    }
    return lib;
}

bool PromptLibrary::has(const std::string& template_id) const { return templates_.count(template_id) > 0; }

const std::string& PromptLibrary::text(const std::string& template_id) const {
    auto it = templates_.find(template_id);
    if (it == templates_.end()) throw ValidationError("unregistered prompt template: " + template_id);
    return it->second;
}

std::string PromptLibrary::template_hash(const std::string& template_id) const {
    return sha256_hex(text(template_id)).substr(0, 16);
}

std::string PromptLibrary::render(const std::string& template_id,
                                  const std::map<std::string, std::string>& vars) const {
    std::string out = text(template_id);
    for (const auto& [k, v] : vars) {
        const std::string needle = "{" + k + "}";
        for (std::size_t pos = out.find(needle); pos != std::string::npos; pos = out.find(needle, pos + v.size())) {
            out.replace(pos, needle.size(), v);
        }
    }
    if (trim(out).empty()) throw ValidationError("template " + template_id + " rendered empty");
    return out;
}

void PromptLibrary::add(std::string template_id, std::string text) { templates_[std::move(template_id)] = std::move(text); }

// --- JudgeClient -----------------------------------------------------------

JudgeClient::JudgeClient(std::shared_ptr<JudgeBackend> backend, PromptLibrary prompts, JudgeClientOptions opts)
    : backend_(std::move(backend)),
      prompts_(std::move(prompts)),
      opts_(std::move(opts)),
      inflight_(std::clamp(opts_.max_inflight, 1, 1024)) {
    if (!backend_) throw ValidationError("judge client: null backend");
    if (opts_.max_attempts < 1) throw ValidationError("judge client: max_attempts must be >= 1");
}

std::string JudgeClient::cache_key(const JudgeRequest& req) const {
    std::string material;
    for (const auto& img : req.images) material += img.hash + ",";
    material += "\n";
    material += json(req.vars).dump();
    return backend_->id() + "/" + prompts_.template_hash(req.template_id) + "/" +
           sha256_hex(material).substr(0, 32) + ".json";
}

std::optional<std::string> JudgeClient::cache_get(const std::string& key) {
    {
        std::shared_lock lock(cache_mu_);
        if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    }
    if (!opts_.cache_dir) return std::nullopt;
    const fs::path file = *opts_.cache_dir / key;
    if (!fs::exists(file)) return std::nullopt;
    try {
        std::string raw = read_json_file(file).at("raw").get<std::string>();
        std::unique_lock lock(cache_mu_);
        memo_.emplace(key, raw);
        return raw;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

void JudgeClient::cache_put(const std::string& key, const std::string& raw) {
    std::unique_lock lock(cache_mu_);
    memo_[key] = raw;
    if (opts_.cache_dir) {
        write_json_file(*opts_.cache_dir / key, json{{"raw", raw}, {"backend_id", backend_->id()}});
    }
}

JudgeReply JudgeClient::parse_reply(const JudgeRequest& req, std::string raw) const {
    JudgeReply reply;
    reply.kind = req.kind;
    reply.backend_id = backend_->id();
    switch (req.kind) {
    case ReplyKind::Score:
        reply.score = parse_score(raw, req.lo, req.hi);
        reply.parsed_ok = reply.score.has_value();
        break;
    case ReplyKind::Label:
        if (auto l = parse_label(raw)) {
            reply.text = *l;
            reply.parsed_ok = true;
        }
        break;
    case ReplyKind::Caption:
        if (auto c = parse_caption(raw)) {
            reply.text = *c;
            reply.parsed_ok = true;
        }
        break;
    case ReplyKind::Findings:
        reply.text = raw;
        reply.score = parse_score(raw, req.lo, req.hi);
        reply.parsed_ok = reply.score.has_value();
        break;
    }
    if (reply.parsed_ok && req.accept && !req.accept(reply)) reply.parsed_ok = false;
    reply.raw_text = std::move(raw);
    return reply;
}

JudgeReply JudgeClient::ask(const JudgeRequest& req) {
    const std::string key = cache_key(req);
    if (auto raw = cache_get(key)) {
        JudgeReply reply = parse_reply(req, *raw);
        if (reply.parsed_ok) {
            ++cache_hits_;
            reply.from_cache = true;
            return reply;
        }
    }

    JudgePrompt prompt;
    prompt.template_id = req.template_id;
    for (const auto& img : req.images) prompt.attached_image_hashes.push_back(img.hash);
    const std::string base = prompts_.render(req.template_id, req.vars);

    std::string tag = "Caption";
    std::string range_hint;
    if (req.kind == ReplyKind::Label) tag = "Label";
    if (req.kind == ReplyKind::Score || req.kind == ReplyKind::Findings) {
        tag = "Score";
        std::ostringstream hint;
        hint << " with a number between " << req.lo << " and " << req.hi;
        range_hint = hint.str();
    }

    bool reask = false;
    std::string last_problem = "no attempt";
    for (int attempt = 1; attempt <= opts_.max_attempts; ++attempt) {
        prompt.rendered_text = base;
        if (reask && prompts_.has(templates::kReask)) {
            prompt.rendered_text += "\n\n" + prompts_.render(templates::kReask, {{"tag", tag}, {"range_hint", range_hint}});
        }
        std::string raw;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            inflight_.acquire();
            ++backend_calls_;
            try {
                raw = backend_->send(prompt, req.images);
            } catch (...) {
                inflight_.release();
                throw;
            }
            inflight_.release();
        } catch (const BackendError& e) {
            last_problem = std::string("backend error: ") + e.what();
            continue;
        }
        const auto t1 = std::chrono::steady_clock::now();
        JudgeReply reply = parse_reply(req, std::move(raw));
        reply.latency_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        reply.attempts = attempt;
        if (reply.parsed_ok) {
            cache_put(key, reply.raw_text);
            return reply;
        }
        last_problem = "unparseable reply";
        reask = true;
    }
    throw JudgeExhausted(req.template_id + ": " + std::to_string(opts_.max_attempts) +
                         " attempts exhausted (" + last_problem + ")");
}

std::string JudgeClient::caption_content(const ImageRecord& img) {
    JudgeRequest req;
    req.template_id = templates::kCaptionContent;
    req.images = {ref_of(img)};
    req.kind = ReplyKind::Caption;
    return ask(req).text;
}

std::string JudgeClient::imagine_destyled_content(const ImageRecord& style_img) {
    JudgeRequest req;
    req.template_id = templates::kImagineDestyled;
    req.images = {ref_of(style_img)};
    req.kind = ReplyKind::Caption;
    return ask(req).text;
}

std::string JudgeClient::compose_style_prompt(const StyleCategory& style, const std::string& content_class,
                                              const std::string& subtype) {
    JudgeRequest req;
    req.template_id = templates::kComposeStylePrompt;
    req.vars = {{"style_name", style.name},
                {"style_descriptor", style.descriptor},
                {"content_class", content_class},
                {"content_subtype", subtype}};
    req.kind = ReplyKind::Caption;
    return ask(req).text;
}

// --- MockJudge -------------------------------------------------------------

std::shared_ptr<MockJudge> MockJudge::from_fixture_file(const fs::path& path) {
    const json doc = read_json_file(path);
    auto mock = std::make_shared<MockJudge>(doc.value("backend_id", std::string("mock")));
    for (const auto& f : doc.value("fixtures", json::array())) {
        Fixture fx;
        fx.template_id = f.at("template_id").get<std::string>();
        fx.image_hashes = f.value("images", std::vector<std::string>{});
        fx.replies = f.value("replies", std::vector<std::string>{});
        fx.fail = f.value("fail", false);
        mock->add_fixture(std::move(fx));
    }
    return mock;
}

void MockJudge::add_fixture(Fixture f) {
    std::lock_guard lock(mu_);
    fixtures_.push_back(std::move(f));
}

std::string MockJudge::send(const JudgePrompt& prompt, const std::vector<ImageRef>&) {
    std::function<std::string(const JudgePrompt&)> fallback;
    {
        std::lock_guard lock(mu_);
        ++calls_[prompt.template_id];
        // Exact image match beats wildcard fixtures.
        std::optional<std::size_t> hit;
        for (std::size_t i = 0; i < fixtures_.size(); ++i) {
            const auto& f = fixtures_[i];
            if (f.template_id != prompt.template_id) continue;
            if (f.image_hashes == prompt.attached_image_hashes) {
                hit = i;
                break;
            }
            if (f.image_hashes.empty() && !hit) hit = i;
        }
        if (hit) {
            const auto& f = fixtures_[*hit];
            if (f.fail) throw BackendError("mock: injected failure for " + prompt.template_id);
            if (f.replies.empty()) return {};
            std::size_t& cur = cursor_[*hit];
            const std::string& r = f.replies[std::min(cur, f.replies.size() - 1)];
            ++cur;
            return r;
        }
        fallback = default_;
    }
    return fallback ? fallback(prompt) : synthesize(prompt);
}

std::uint64_t MockJudge::calls(const std::string& template_id) const {
    std::lock_guard lock(mu_);
    auto it = calls_.find(template_id);
    return it == calls_.end() ? 0 : it->second;
}

std::uint64_t MockJudge::total_calls() const {
    std::lock_guard lock(mu_);
    std::uint64_t n = 0;
    for (const auto& [_, c] : calls_) n += c;
    return n;
}

void MockJudge::reset_counts() {
    std::lock_guard lock(mu_);
    calls_.clear();
}

std::string MockJudge::synthesize(const JudgePrompt& prompt) {
    std::string material = prompt.template_id + "|";
    for (const auto& h : prompt.attached_image_hashes) material += h + ",";
    if (prompt.attached_image_hashes.empty()) material += prompt.rendered_text;
    // SplitMix64 finalizer spreads FNV's weak high bits.
    std::uint64_t h = fnv1a64(material);
    h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
    h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
    h ^= h >> 31;
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
    const std::string tag(hex, 8);
    const std::string& t = prompt.template_id;

    if (t == templates::kClassifyContent) {
        static const char* kLabels[] = {"Human", "Animal",       "Plant",    "Object",      "Scene",
                                        "Architecture", "Human", "Scene", "Architecture", "Animal",
                                        "Plant",  "Object",       "Abstract", "Abstract",    "NonArtistic",
                                        "Human"};
        return std::string("The image depicts recognizable content.\nLabel: ") + kLabels[h % 16];
    }
    if (t == templates::kCaptionContent) return "Caption: a photograph of subject " + tag;
    if (t == templates::kImagineDestyled) return "Caption: a realistic everyday scene " + tag;
    if (t == templates::kComposeStylePrompt) {
        auto style = parse_tagged_line(prompt.rendered_text, "style").value_or("unknown style");
        auto content = parse_tagged_line(prompt.rendered_text, "content").value_or("unknown content");
        return "Caption: " + content + ", rendered as " + style;
    }
    if (t == templates::kFilterContent) {
        static const char* kRegions[] = {"face", "hands", "text", "scene element"};
        static const int kTable[16] = {5, 5, 5, 5, 5, 5, 4, 4, 4, 4, 3, 3, 2, 1, 0, 5};
        const int n = 1 + static_cast<int>(h % 3);
        std::ostringstream out;
        out << "Step 1: regions identified.\n";
        int lowest = 5;
        for (int i = 0; i < n; ++i) {
            const int s = kTable[(h >> (4 * (i + 2))) & 15];
            lowest = std::min(lowest, s);
            const char* status = s >= 4 ? "intact" : (s >= 2 ? "degraded" : "missing");
            out << "Region: " << kRegions[i] << " | " << status << " | " << s << "\n";
        }
        const int holistic = std::min(5, lowest + static_cast<int>((h >> 40) & 1));
        out << "Score: " << holistic << "\n";
        return out.str();
    }
    if (t == templates::kFilterStyle) {
        static const char* kAttrs[] = {"color palette", "texture", "lighting", "rendering effects"};
        std::ostringstream out;
        int penalty = 0;
        for (int i = 0; i < 4; ++i) {
            const int s = static_cast<int>((h >> (3 * i + 20)) & 7);
            const char* status = s < 6 ? "removed" : (s == 6 ? "softened" : "preserved");
            penalty += s == 7 ? 2 : (s == 6 ? 1 : 0);
            out << "Attribute: " << kAttrs[i] << " | " << status << "\n";
        }
        out << "Score: " << std::max(0, 5 - penalty) << "\n";
        return out.str();
    }
    if (t == templates::kEvalContent || t == templates::kEvalStyle || t == templates::kEvalAesthetic) {
        std::ostringstream out;
        out << "Score: " << (5.0 + static_cast<double>(h % 50) / 10.0);
        return out.str();
    }
    return "Score: 3";
}

} // namespace forge
