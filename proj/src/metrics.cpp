#include "forge/metrics.hpp"
#include "forge/common/digest.hpp"
#include "forge/common/errors.hpp"
#include "forge/common/rng.hpp"
#include "forge/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

namespace forge {

namespace fs = std::filesystem;

double gram_style_loss(const std::vector<FeatureMap>& a, const std::vector<FeatureMap>& b) {
    if (a.empty()) throw ValidationError("style loss needs at least one feature layer");
    if (a.size() != b.size()) throw ValidationError("feature stacks differ in depth");
    double total = 0.0;
    for (std::size_t l = 0; l < a.size(); ++l) {
        const auto& fa = a[l];
        const auto& fb = b[l];
        if (fa.channels != fb.channels || fa.locations != fb.locations)
            throw ValidationError("feature layer " + std::to_string(l) + " shapes differ");
        if (fa.channels == 0 || fa.locations == 0) throw ValidationError("empty feature layer");
        if (fa.values.size() != fa.channels * fa.locations || fb.values.size() != fa.values.size())
            throw ValidationError("feature layer " + std::to_string(l) + " has inconsistent size");
        const std::size_t c = fa.channels;
        std::vector<double> ga(c * c), gb(c * c);
        kernels::gram(c, fa.locations, fa.values, ga);
        kernels::gram(c, fb.locations, fb.values, gb);
        double sq = 0.0;
        for (std::size_t i = 0; i < ga.size(); ++i) {
            const double d = ga[i] - gb[i];
            sq += d * d;
        }
        total += sq / static_cast<double>(ga.size());
    }
    return total / static_cast<double>(a.size());
}

double gram_style_loss(const Image& a, const Image& b, const FeatureBackend& features) {
    return gram_style_loss(features.features(a), features.features(b));
}

double cosine(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ValidationError("embedding dimensions differ");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw NumericError("zero-norm embedding");
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double embed_cosine(const Image& a, const Image& b, const EmbeddingBackend& backend) {
    return cosine(backend.embed_image(a), backend.embed_image(b));
}

double embed_cosine(const Image& img, const std::string& text, const EmbeddingBackend& backend) {
    return cosine(backend.embed_image(img), backend.embed_text(text));
}

JudgeScores judge_scores(const ImageRef& stylized, const ImageRef& content, const ImageRef& style, JudgeClient& judge,
                         QuarantineLog* log, const std::string& item_id) {
    auto one = [&](const char* tmpl, std::vector<ImageRef> images) -> std::optional<double> {
        JudgeRequest req;
        req.template_id = tmpl;
        req.images = std::move(images);
        req.kind = ReplyKind::Score;
        req.lo = 0.0;
        req.hi = 10.0;
        try {
            return judge.ask(req).score;
        } catch (const ForgeError& e) {
            if (log) log->add(item_id, std::string("eval.") + tmpl, e.what());
            return std::nullopt;
        }
    };
    JudgeScores s;
    s.content = one(templates::kEvalContent, {stylized, content});
    s.style = one(templates::kEvalStyle, {stylized, style});
    s.aesthetic = one(templates::kEvalAesthetic, {stylized});
    return s;
}

std::string_view field_name(Metric m) {
    switch (m) {
    case Metric::Dino: return "dino_score";
    case Metric::Clip: return "clip_score";
    case Metric::Csd: return "csd_score";
    case Metric::StyleLoss: return "style_loss";
    case Metric::QwenContent: return "qwen_content";
    case Metric::QwenStyle: return "qwen_style";
    case Metric::QwenAesthetic: return "qwen_aesthetic";
    }
    return "?";
}

std::string_view table_label(Metric m) {
    switch (m) {
    case Metric::Dino: return "DINO-Score ↑";
    case Metric::Clip: return "CLIP-Score ↑";
    case Metric::Csd: return "CSD-Score ↑";
    case Metric::StyleLoss: return "Style Loss ↓";
    case Metric::QwenContent: return "Qwen-Content-Score ↑";
    case Metric::QwenStyle: return "Qwen-Style-Score ↑";
    case Metric::QwenAesthetic: return "Qwen-Aesthetic-Score ↑";
    }
    return "?";
}

void to_json(json& j, const MetricReport& r) {
    j = json{{"method", r.method},
             {"content_id", r.content_id},
             {"style_id", r.style_id},
             {"stylized_hash", r.stylized_hash},
             {"caption", r.caption},
             {"caption_source", r.caption_source}};
    for (Metric m : kMetrics) {
        const auto& v = r[m];
        j[std::string(field_name(m))] = v ? json(*v) : json(nullptr);
    }
    j["failures"] = r.failures;
}

void from_json(const json& j, MetricReport& r) {
    j.at("method").get_to(r.method);
    j.at("content_id").get_to(r.content_id);
    j.at("style_id").get_to(r.style_id);
    r.stylized_hash = j.value("stylized_hash", "");
    r.caption = j.value("caption", "");
    r.caption_source = j.value("caption_source", "");
    for (Metric m : kMetrics) {
        const auto& v = j.at(std::string(field_name(m)));
        r[m] = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
    }
    r.failures = j.value("failures", std::vector<std::string>{});
}

std::string report_violation(const MetricReport& r) {
    for (Metric m : {Metric::Dino, Metric::Clip, Metric::Csd}) {
        const auto& v = r[m];
        if (v && !(*v >= -1.0 && *v <= 1.0)) return std::string(field_name(m)) + " outside [-1, 1]";
    }
    if (r[Metric::StyleLoss] && !(*r[Metric::StyleLoss] >= 0.0)) return "style_loss negative";
    for (Metric m : {Metric::QwenContent, Metric::QwenStyle, Metric::QwenAesthetic}) {
        const auto& v = r[m];
        if (v && !(*v >= 0.0 && *v <= 10.0)) return std::string(field_name(m)) + " outside [0, 10]";
    }
    return {};
}

void to_json(json& j, const BenchmarkSpec& s) {
    j = json{{"content_ids", s.content_ids}, {"style_ids", s.style_ids}, {"methods", s.methods}};
    if (s.contents_manifest) j["contents_manifest"] = s.contents_manifest->string();
    if (s.styles_manifest) j["styles_manifest"] = s.styles_manifest->string();
}

void from_json(const json& j, BenchmarkSpec& s) {
    s.content_ids = j.value("content_ids", std::vector<std::string>{});
    s.style_ids = j.value("style_ids", std::vector<std::string>{});
    s.methods = j.value("methods", std::vector<std::string>{});
    if (j.contains("contents_manifest")) s.contents_manifest = j.at("contents_manifest").get<std::string>();
    if (j.contains("styles_manifest")) s.styles_manifest = j.at("styles_manifest").get<std::string>();
}

BenchmarkSpec load_benchmark_spec(const fs::path& path) {
    BenchmarkSpec s = read_json_file(path).get<BenchmarkSpec>();
    // Relative manifest paths are relative to the spec file.
    const fs::path base = path.parent_path();
    if (s.contents_manifest && s.contents_manifest->is_relative()) s.contents_manifest = base / *s.contents_manifest;
    if (s.styles_manifest && s.styles_manifest->is_relative()) s.styles_manifest = base / *s.styles_manifest;
    return s;
}

std::vector<std::pair<std::string, std::string>> enumerate_jobs(const BenchmarkSpec& spec) {
    std::vector<std::pair<std::string, std::string>> jobs;
    jobs.reserve(spec.jobs_per_method());
    for (const auto& c : spec.content_ids)
        for (const auto& s : spec.style_ids) jobs.emplace_back(c, s);
    return jobs;
}

void to_json(json& j, const MetricAggregate& a) {
    j = json{{"method", a.method}, {"cells", a.cells}, {"failed_cells", a.failed_cells}};
    for (Metric m : kMetrics) {
        const auto i = static_cast<std::size_t>(m);
        j["mean_" + std::string(field_name(m))] = a.means[i] ? json(*a.means[i]) : json(nullptr);
        j["count_" + std::string(field_name(m))] = a.counts[i];
    }
}

MetricAggregate aggregate(const std::string& method, const std::vector<MetricReport>& reports) {
    MetricAggregate a;
    a.method = method;
    std::array<double, kMetricCount> sums{};
    for (const auto& r : reports) {
        if (r.method != method) continue;
        ++a.cells;
        if (r.stylized_hash.empty()) ++a.failed_cells;
        for (std::size_t i = 0; i < kMetricCount; ++i) {
            if (!r.values[i]) continue;
            sums[i] += *r.values[i];
            ++a.counts[i];
        }
    }
    for (std::size_t i = 0; i < kMetricCount; ++i)
        if (a.counts[i] > 0) a.means[i] = sums[i] / static_cast<double>(a.counts[i]);
    return a;
}

std::string render_table(const std::vector<MetricAggregate>& aggregates) {
    std::ostringstream os;
    os << "| Metrics/Model |";
    for (const auto& a : aggregates) os << ' ' << a.method << " |";
    os << "\n|---|";
    for (std::size_t i = 0; i < aggregates.size(); ++i) os << "---|";
    os << '\n';
    char buf[32];
    for (Metric m : kMetrics) {
        os << "| " << table_label(m) << " |";
        for (const auto& a : aggregates) {
            const auto& v = a.means[static_cast<std::size_t>(m)];
            if (v) {
                const bool tiny = *v != 0.0 && std::abs(*v) < 1e-3;
                std::snprintf(buf, sizeof buf, tiny ? "%.3e" : "%.4f", *v);
                os << ' ' << buf << " |";
            } else {
                os << " n/a |";
            }
        }
        os << '\n';
    }
    return os.str();
}

void write_reports(const fs::path& path, std::vector<MetricReport> reports) {
    std::sort(reports.begin(), reports.end(), [](const MetricReport& a, const MetricReport& b) {
        return std::tie(a.method, a.content_id, a.style_id) < std::tie(b.method, b.content_id, b.style_id);
    });
    std::vector<json> rows;
    rows.reserve(reports.size());
    for (const auto& r : reports) rows.emplace_back(r);
    write_jsonl(path, rows);
}

std::vector<MetricReport> read_reports(const fs::path& path) {
    std::vector<MetricReport> out;
    for (const auto& j : read_jsonl(path)) out.push_back(j.get<MetricReport>());
    return out;
}

std::optional<MetricReport> CellCache::get(const std::string& key) {
    std::lock_guard lock(mu_);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    if (!dir_) return std::nullopt;
    const fs::path p = *dir_ / (key + ".json");
    if (!fs::exists(p)) return std::nullopt;
    try {
        auto r = read_json_file(p).get<MetricReport>();
        memo_.emplace(key, r);
        return r;
    } catch (const std::exception&) {
        return std::nullopt; // unreadable entry: recompute
    }
}

void CellCache::put(const std::string& key, const MetricReport& report) {
    std::lock_guard lock(mu_);
    memo_[key] = report;
    if (dir_) {
        fs::create_directories(*dir_);
        write_json_file(*dir_ / (key + ".json"), json(report));
    }
}

std::string cell_key(const std::string& method_id, const std::string& content_hash, const std::string& style_hash,
                     const MetricBackends& b, std::uint64_t seed) {
    std::ostringstream os;
    os << method_id << '\n' << content_hash << '\n' << style_hash << '\n';
    os << (b.dino ? b.dino->id() : "-") << '\n' << (b.clip ? b.clip->id() : "-") << '\n';
    os << (b.csd ? b.csd->id() : "-") << '\n' << (b.features ? b.features->id() : "-") << '\n';
    os << (b.judge ? b.judge->backend_id() : "-") << '\n' << seed;
    return sha256_hex(os.str()).substr(0, 32);
}

namespace {

struct LoadedImage {
    const ImageRecord* rec = nullptr;
    Image img;
};

std::map<std::string, LoadedImage> load_all(const std::vector<std::string>& ids,
                                            const std::vector<ImageRecord>& records, const char* what) {
    std::map<std::string, const ImageRecord*> by_id;
    for (const auto& r : records) by_id.emplace(r.id, &r);
    std::map<std::string, LoadedImage> out;
    for (const auto& id : ids) {
        if (out.count(id)) continue;
        auto it = by_id.find(id);
        if (it == by_id.end()) throw ValidationError(std::string("unresolved ") + what + " id: " + id);
        auto img = load_image(it->second->path);
        if (!img) throw ValidationError(std::string("cannot decode ") + what + " image: " + it->second->path.string());
        out.emplace(id, LoadedImage{it->second, std::move(*img)});
    }
    return out;
}

std::string safe_name(std::string s) {
    for (auto& c : s)
        if (c == '/' || c == '\\' || c == ' ') c = '_';
    return s;
}

template <class F>
void try_metric(MetricReport& r, Metric m, F&& f) {
    try {
        r[m] = f();
    } catch (const std::exception& e) {
        r.failures.push_back(std::string(field_name(m)) + ": " + e.what());
    }
}

} // namespace

BenchmarkResult run_benchmark(const BenchmarkSpec& spec, const std::vector<ImageRecord>& contents,
                              const std::vector<ImageRecord>& styles, const StylizerBackend& method,
                              const MetricBackends& backends, const BenchmarkOptions& opts) {
    const auto content_imgs = load_all(spec.content_ids, contents, "content");
    const auto style_imgs = load_all(spec.style_ids, styles, "style");
    const std::string method_id = method.id();

    BenchmarkResult result;

    // One caption per content image, shared by every cell.
    std::map<std::string, std::pair<std::string, std::string>> captions;
    for (const auto& [id, li] : content_imgs) {
        std::string caption, source;
        if (backends.judge) {
            try {
                caption = backends.judge->caption_content(*li.rec);
                source = "judge:" + backends.judge->backend_id();
            } catch (const ForgeError& e) {
                result.quarantine.add(id, "eval.caption", e.what());
            }
        }
        if (caption.empty() && li.rec->prompt) {
            caption = *li.rec->prompt;
            source = "record-prompt";
        }
        captions[id] = {caption, source};
    }

    const auto jobs = enumerate_jobs(spec);
    result.reports.resize(jobs.size());
    std::vector<char> cached(jobs.size(), 0);
    const fs::path img_dir = opts.out_dir / "stylized" / safe_name(method_id);
    fs::create_directories(img_dir);

#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        const auto& [cid, sid] = jobs[i];
        const LoadedImage& content = content_imgs.at(cid);
        const LoadedImage& style = style_imgs.at(sid);
        const std::string key =
            cell_key(method_id, content.rec->content_hash, style.rec->content_hash, backends, opts.seed);
        if (opts.cache) {
            if (auto hit = opts.cache->get(key)) {
                hit->content_id = cid;
                hit->style_id = sid;
                result.reports[i] = std::move(*hit);
                cached[i] = 1;
                continue;
            }
        }

        MetricReport r;
        r.method = method_id;
        r.content_id = cid;
        r.style_id = sid;
        r.caption = captions.at(cid).first;
        r.caption_source = captions.at(cid).second;
        const std::string item = method_id + "/" + cid + "/" + sid;

        Image out;
        try {
            out = method.stylize(content.img, style.img, derive_seed(opts.seed, fnv1a64(cid + "\n" + sid)));
            if (out.empty()) throw BackendError("stylizer returned an empty image");
        } catch (const std::exception& e) {
            r.failures.push_back(std::string("stylize: ") + e.what());
            result.quarantine.add(item, "eval.stylize", e.what());
            result.reports[i] = std::move(r);
            continue;
        }
        r.stylized_hash = content_hash(out);
        const fs::path out_path = img_dir / (safe_name(cid) + "__" + safe_name(sid) + ".png");
        save_png(out, out_path);

        if (backends.dino) try_metric(r, Metric::Dino, [&] { return embed_cosine(out, content.img, *backends.dino); });
        if (backends.clip) {
            try_metric(r, Metric::Clip, [&] {
                if (r.caption.empty()) throw ValidationError("no caption for content image");
                return embed_cosine(out, r.caption, *backends.clip);
            });
        }
        if (backends.csd) try_metric(r, Metric::Csd, [&] { return embed_cosine(out, style.img, *backends.csd); });
        if (backends.features) {
            try_metric(r, Metric::StyleLoss, [&] { return gram_style_loss(out, style.img, *backends.features); });
        }
        if (backends.judge) {
            const auto s = judge_scores(ImageRef{r.stylized_hash, out_path}, ref_of(*content.rec), ref_of(*style.rec),
                                        *backends.judge, &result.quarantine, item);
            r[Metric::QwenContent] = s.content;
            r[Metric::QwenStyle] = s.style;
            r[Metric::QwenAesthetic] = s.aesthetic;
            if (!s.content || !s.style || !s.aesthetic) r.failures.push_back("judge: unavailable");
        }
        for (std::size_t m = 0; m < kMetricCount; ++m)
            if (r.values[m] && !std::isfinite(*r.values[m])) r.values[m].reset();
        if (opts.cache && r.failures.empty()) opts.cache->put(key, r);
        result.reports[i] = std::move(r);
    }

    for (char c : cached) (c ? result.cached_cells : result.computed_cells)++;
    result.aggregate = aggregate(method_id, result.reports);
    return result;
}

} // namespace forge
