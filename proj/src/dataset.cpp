#include "forge/dataset.hpp"
#include "forge/common/digest.hpp"
#include "forge/common/errors.hpp"
#include "forge/common/rng.hpp"
#include "forge/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <unordered_map>

namespace forge {

namespace fs = std::filesystem;

namespace {

template <class T, class Key>
void write_sorted(const fs::path& path, std::vector<T> items, Key key) {
    std::sort(items.begin(), items.end(), [&](const T& a, const T& b) { return key(a) < key(b); });
    std::vector<json> rows;
    rows.reserve(items.size());
    for (const auto& it : items) rows.emplace_back(it);
    write_jsonl(path, rows);
}

template <class T>
std::vector<T> read_all(const fs::path& path) {
    std::vector<T> out;
    for (const auto& j : read_jsonl(path)) out.push_back(j.get<T>());
    return out;
}

std::unordered_map<std::string, const ImageRecord*> index_by_id(const std::vector<ImageRecord>& records) {
    std::unordered_map<std::string, const ImageRecord*> m;
    for (const auto& r : records) m.emplace(r.id, &r);
    return m;
}

Image load_or_throw(const ImageRecord& rec) {
    auto img = load_image(rec.path);
    if (!img) throw ForgeError("cannot decode image " + rec.path.string());
    return std::move(*img);
}

} // namespace

// --- DST training set ----------------------------------------------------------

void to_json(json& j, const DstTrainSample& s) {
    j = json{{"stylized_id", s.stylized_id},
             {"content_id", s.content_id},
             {"caption", s.caption},
             {"stylizer", std::string(to_string(s.stylizer))},
             {"style_ref_id", s.style_ref_id}};
}

void from_json(const json& j, DstTrainSample& s) {
    j.at("stylized_id").get_to(s.stylized_id);
    j.at("content_id").get_to(s.content_id);
    j.at("caption").get_to(s.caption);
    const auto kind = parse_stylizer_kind(j.at("stylizer").get<std::string>());
    if (!kind) throw ParseError("unknown stylizer: " + j.at("stylizer").get<std::string>());
    s.stylizer = *kind;
    j.at("style_ref_id").get_to(s.style_ref_id);
}

TrainsetResult build_dst_trainset(const std::vector<ImageRecord>& contents, const std::vector<ImageRecord>& styles,
                                  const std::vector<const StylizerBackend*>& stylizers, JudgeClient& captioner,
                                  const TrainsetOptions& opts) {
    if (opts.refs_per_content == 0) throw ValidationError("refs_per_content must be positive");
    if (opts.refs_per_content > styles.size())
        throw ValidationError("refs_per_content exceeds the number of style references");
    if (stylizers.empty()) throw ValidationError("no stylizer configured");
    for (const auto* s : stylizers)
        if (!s) throw ValidationError("null stylizer backend");

    TrainsetResult result;

    struct Job {
        const ImageRecord* content;
        const ImageRecord* ref;
        const StylizerBackend* stylizer;
        std::string caption;
    };
    std::vector<Job> jobs;
    for (const auto& c : contents) {
        std::string caption;
        try {
            caption = captioner.caption_content(c);
        } catch (const ForgeError& e) {
            result.quarantine.add(c.id, "trainset.caption", e.what());
            continue;
        }
        if (caption.empty()) {
            result.quarantine.add(c.id, "trainset.caption", "empty caption");
            continue;
        }
        // Partial Fisher-Yates over style indices.
        std::vector<std::size_t> idx(styles.size());
        std::iota(idx.begin(), idx.end(), 0);
        SplitMix64 rng(derive_seed(opts.seed, fnv1a64(c.id)));
        for (std::size_t k = 0; k < opts.refs_per_content; ++k) {
            std::swap(idx[k], idx[k + rng.below(idx.size() - k)]);
            for (const auto* s : stylizers) jobs.push_back({&c, &styles[idx[k]], s, caption});
        }
    }

    const fs::path img_dir = opts.out_dir / "images";
    fs::create_directories(img_dir);
    std::vector<std::optional<std::pair<DstTrainSample, ImageRecord>>> out(jobs.size());

#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        const Job& job = jobs[i];
        const std::string key = job.content->id + "\n" + job.ref->id + "\n" + job.stylizer->id();
        const std::string id = "dst-" + sha256_hex(key).substr(0, 16);
        const std::uint64_t seed = derive_seed(opts.seed, fnv1a64(key));
        try {
            const Image img = job.stylizer->stylize(load_or_throw(*job.content), load_or_throw(*job.ref), seed);
            ImageRecord rec;
            rec.id = id;
            rec.path = img_dir / (id + ".png");
            rec.source = ImageSource::Stylized;
            rec.content_class = job.content->content_class;
            rec.style_category = category_of(*job.ref);
            rec.width = img.width;
            rec.height = img.height;
            rec.content_hash = content_hash(img);
            rec.seed = seed;
            save_png(img, rec.path);
            DstTrainSample s{id, job.content->id, job.caption, job.stylizer->kind(), job.ref->id};
            out[i].emplace(std::move(s), std::move(rec));
        } catch (const std::exception& e) {
            result.quarantine.add(id, "trainset.stylize", e.what());
        }
    }

    for (auto& o : out) {
        if (!o) continue;
        result.samples.push_back(std::move(o->first));
        result.stylized.push_back(std::move(o->second));
    }
    std::sort(result.samples.begin(), result.samples.end(),
              [](const auto& a, const auto& b) { return a.stylized_id < b.stylized_id; });
    std::sort(result.stylized.begin(), result.stylized.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    return result;
}

void write_trainset(const fs::path& path, std::vector<DstTrainSample> samples) {
    write_sorted(path, std::move(samples), [](const DstTrainSample& s) { return s.stylized_id; });
}

std::vector<DstTrainSample> read_trainset(const fs::path& path) { return read_all<DstTrainSample>(path); }

// --- prompts and pairs -----------------------------------------------------------

void to_json(json& j, const PromptRecord& p) { j = json{{"style_id", p.style_id}, {"prompt", p.prompt}}; }

void from_json(const json& j, PromptRecord& p) {
    j.at("style_id").get_to(p.style_id);
    j.at("prompt").get_to(p.prompt);
}

PromptResult generate_destyle_prompts(const std::vector<ImageRecord>& styles, JudgeClient& judge) {
    PromptResult result;
    std::vector<std::optional<PromptRecord>> out(styles.size());

#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < styles.size(); ++i) {
        try {
            auto text = judge.imagine_destyled_content(styles[i]);
            if (text.empty()) throw ValidationError("empty prompt");
            out[i] = PromptRecord{styles[i].id, std::move(text)};
        } catch (const ForgeError& e) {
            result.quarantine.add(styles[i].id, "prompts", e.what());
        }
    }
    for (auto& o : out)
        if (o) result.prompts.push_back(std::move(*o));
    std::sort(result.prompts.begin(), result.prompts.end(),
              [](const auto& a, const auto& b) { return a.style_id < b.style_id; });
    return result;
}

void write_prompts(const fs::path& path, std::vector<PromptRecord> prompts) {
    write_sorted(path, std::move(prompts), [](const PromptRecord& p) { return p.style_id; });
}

std::vector<PromptRecord> read_prompts(const fs::path& path) { return read_all<PromptRecord>(path); }

void to_json(json& j, const PairRecord& p) {
    j = json{{"pair_id", p.pair_id}, {"style_id", p.style_id}, {"desty_id", p.desty_id}};
}

void from_json(const json& j, PairRecord& p) {
    j.at("pair_id").get_to(p.pair_id);
    j.at("style_id").get_to(p.style_id);
    j.at("desty_id").get_to(p.desty_id);
}

DestyResult run_destylization(const std::vector<ImageRecord>& styles, const DestylizerBackend& backend,
                              const std::vector<PromptRecord>& prompts, const DestyOptions& opts) {
    std::unordered_map<std::string, const std::string*> prompt_of;
    for (const auto& p : prompts) prompt_of.emplace(p.style_id, &p.prompt);

    DestyResult result;
    const fs::path img_dir = opts.out_dir / "images";
    fs::create_directories(img_dir);
    std::vector<std::optional<std::pair<PairRecord, ImageRecord>>> out(styles.size());

#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < styles.size(); ++i) {
        const ImageRecord& style = styles[i];
        const auto it = prompt_of.find(style.id);
        if (it == prompt_of.end() || it->second->empty()) {
            result.quarantine.add(style.id, "destylize", "missing content prompt");
            continue;
        }
        const std::uint64_t seed = derive_seed(opts.seed, fnv1a64(style.id));
        try {
            const Image img = backend.destylize(load_or_throw(style), *it->second, seed);
            if (img.empty()) throw BackendError("destylizer returned an empty image");
            ImageRecord rec;
            rec.id = "desty-" + style.id;
            rec.path = img_dir / (rec.id + ".png");
            rec.source = ImageSource::Destylized;
            rec.content_class = style.content_class;
            rec.width = img.width;
            rec.height = img.height;
            rec.content_hash = content_hash(img);
            rec.prompt = *it->second;
            rec.seed = seed;
            save_png(img, rec.path);
            out[i].emplace(PairRecord{"pair-" + style.id, style.id, rec.id}, std::move(rec));
        } catch (const std::exception& e) {
            result.quarantine.add(style.id, "destylize", e.what());
        }
    }

    for (auto& o : out) {
        if (!o) continue;
        result.pairs.push_back(std::move(o->first));
        result.desty.push_back(std::move(o->second));
    }
    std::sort(result.pairs.begin(), result.pairs.end(), [](const auto& a, const auto& b) { return a.pair_id < b.pair_id; });
    std::sort(result.desty.begin(), result.desty.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    return result;
}

void write_pairs(const fs::path& path, std::vector<PairRecord> pairs) {
    write_sorted(path, std::move(pairs), [](const PairRecord& p) { return p.pair_id; });
}

std::vector<PairRecord> read_pairs(const fs::path& path) { return read_all<PairRecord>(path); }

std::vector<PairRef> resolve_pairs(const std::vector<PairRecord>& pairs, const std::vector<ImageRecord>& styles,
                                   const std::vector<ImageRecord>& desty) {
    const auto s = index_by_id(styles);
    const auto d = index_by_id(desty);
    std::vector<PairRef> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) {
        const auto si = s.find(p.style_id);
        const auto di = d.find(p.desty_id);
        if (si == s.end()) throw ValidationError("pair " + p.pair_id + ": unresolved style id " + p.style_id);
        if (di == d.end()) throw ValidationError("pair " + p.pair_id + ": unresolved desty id " + p.desty_id);
        out.push_back(PairRef{p.pair_id, *si->second, *di->second});
    }
    return out;
}

// --- reference selection -----------------------------------------------------------

std::string select_reference(const std::string& style_id, const std::vector<EmbeddedImage>& pool) {
    const auto self = std::find_if(pool.begin(), pool.end(), [&](const EmbeddedImage& e) { return e.id == style_id; });
    if (self == pool.end()) throw ValidationError("style " + style_id + " is not in its category pool");

    const std::string* best_id = nullptr;
    double best = 0.0;
    for (const auto& cand : pool) {
        if (cand.id == style_id) continue;
        double c = 0.0;
        try {
            c = cosine(self->embedding, cand.embedding);
        } catch (const NumericError&) {
            c = 0.0;
        }
        if (!best_id || c > best || (c == best && cand.id < *best_id)) {
            best = c;
            best_id = &cand.id;
        }
    }
    if (!best_id) throw NoReference("no other image in the category of " + style_id);
    return *best_id;
}

std::string select_reference(const std::string& style_id, const std::vector<ImageRecord>& pool,
                             const EmbeddingBackend& embedder) {
    std::vector<EmbeddedImage> emb(pool.size());
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < pool.size(); ++i) {
        emb[i].id = pool[i].id;
        if (auto img = load_image(pool[i].path)) emb[i].embedding = embedder.embed_image(*img);
    }
    return select_reference(style_id, emb);
}

std::optional<std::string> category_of(const ImageRecord& rec) {
    if (rec.style_category && !rec.style_category->empty()) return rec.style_category;
    return std::nullopt;
}

void to_json(json& j, const DstTriplet& t) {
    j = json{{"desty_id", t.desty_id},
             {"reference_id", t.reference_id},
             {"style_id", t.style_id},
             {"category", t.category},
             {"verdict_id", t.verdict_id}};
}

void from_json(const json& j, DstTriplet& t) {
    j.at("desty_id").get_to(t.desty_id);
    j.at("reference_id").get_to(t.reference_id);
    j.at("style_id").get_to(t.style_id);
    j.at("category").get_to(t.category);
    j.at("verdict_id").get_to(t.verdict_id);
}

AssembleResult assemble_triplets(const std::vector<FilterVerdict>& verdicts, const std::vector<ImageRecord>& styles,
                                 const EmbeddingBackend& embedder) {
    const auto by_id = index_by_id(styles);

    // Embed each style image once.
    std::vector<std::vector<double>> emb(styles.size());
    std::vector<char> ok(styles.size(), 0);
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < styles.size(); ++i) {
        if (!category_of(styles[i])) continue;
        try {
            if (auto img = load_image(styles[i].path)) {
                emb[i] = embedder.embed_image(*img);
                ok[i] = 1;
            }
        } catch (const std::exception&) {
        }
    }
    std::map<std::string, std::vector<EmbeddedImage>> pools;
    for (std::size_t i = 0; i < styles.size(); ++i)
        if (ok[i]) pools[*category_of(styles[i])].push_back({styles[i].id, emb[i]});

    std::vector<const FilterVerdict*> accepted;
    for (const auto& v : verdicts)
        if (v.accepted) accepted.push_back(&v);

    std::vector<std::optional<DstTriplet>> out(accepted.size());
    std::vector<std::string> reasons(accepted.size());

#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < accepted.size(); ++i) {
        const FilterVerdict& v = *accepted[i];
        const auto it = by_id.find(v.style_id);
        if (it == by_id.end()) {
            reasons[i] = "unresolved-style";
            continue;
        }
        const auto cat = category_of(*it->second);
        if (!cat) {
            reasons[i] = "no-category";
            continue;
        }
        const auto pool = pools.find(*cat);
        if (pool == pools.end()) {
            reasons[i] = "style-unembeddable";
            continue;
        }
        try {
            out[i] = DstTriplet{v.desty_id, select_reference(v.style_id, pool->second), v.style_id, *cat, v.pair_id};
        } catch (const NoReference&) {
            reasons[i] = "no-reference";
        } catch (const ValidationError&) {
            reasons[i] = "style-unembeddable";
        }
    }

    AssembleResult result;
    for (std::size_t i = 0; i < accepted.size(); ++i) {
        if (out[i]) {
            ++result.per_category[out[i]->category];
            result.triplets.push_back(std::move(*out[i]));
        } else {
            ++result.drop_reasons[reasons[i]];
            result.drops.push_back({accepted[i]->pair_id, reasons[i]});
        }
    }
    std::sort(result.triplets.begin(), result.triplets.end(),
              [](const auto& a, const auto& b) { return a.verdict_id < b.verdict_id; });
    std::sort(result.drops.begin(), result.drops.end(),
              [](const auto& a, const auto& b) { return a.verdict_id < b.verdict_id; });
    return result;
}

void write_triplets(const fs::path& path, std::vector<DstTriplet> triplets) {
    write_sorted(path, std::move(triplets), [](const DstTriplet& t) { return t.verdict_id; });
}

std::vector<DstTriplet> read_triplets(const fs::path& path) { return read_all<DstTriplet>(path); }

std::vector<std::string> check_triplets(const std::vector<DstTriplet>& triplets,
                                        const std::vector<FilterVerdict>& verdicts,
                                        const std::vector<ImageRecord>& styles, const std::vector<ImageRecord>& desty,
                                        const QuarantineLog& quarantine) {
    std::unordered_map<std::string, const FilterVerdict*> verdict_of;
    for (const auto& v : verdicts) verdict_of.emplace(v.pair_id, &v);
    const auto s = index_by_id(styles);
    const auto d = index_by_id(desty);

    std::vector<std::string> problems;
    for (const auto& t : triplets) {
        const std::string tag = "triplet " + t.verdict_id + ": ";
        const auto v = verdict_of.find(t.verdict_id);
        if (v == verdict_of.end()) {
            problems.push_back(tag + "verdict missing");
        } else {
            if (!v->second->accepted) problems.push_back(tag + "verdict not accepted");
            if (v->second->style_id != t.style_id || v->second->desty_id != t.desty_id)
                problems.push_back(tag + "ids disagree with verdict");
        }
        if (!d.count(t.desty_id)) problems.push_back(tag + "unresolved desty id");
        const auto st = s.find(t.style_id);
        const auto ref = s.find(t.reference_id);
        if (st == s.end()) problems.push_back(tag + "unresolved style id");
        if (ref == s.end()) problems.push_back(tag + "unresolved reference id");
        if (t.reference_id == t.style_id) problems.push_back(tag + "reference equals style");
        if (st != s.end() && ref != s.end() && category_of(*st->second) != category_of(*ref->second))
            problems.push_back(tag + "reference from another category");
        for (const auto* id : {&t.desty_id, &t.style_id, &t.reference_id})
            if (quarantine.contains(*id)) problems.push_back(tag + "uses quarantined image " + *id);
    }
    return problems;
}

} // namespace forge
