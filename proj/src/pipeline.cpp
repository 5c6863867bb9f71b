#include "forge/pipeline.hpp"
#include "forge/common/digest.hpp"
#include "forge/common/errors.hpp"
#include "forge/dataset.hpp"
#include "forge/denoiser/autoencoder.hpp"
#include "forge/denoiser/checkpoint.hpp"
#include "forge/dst_filter.hpp"
#include "forge/metrics.hpp"
#include "forge/taxonomy.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace forge {

namespace fs = std::filesystem;

// --- stages ----------------------------------------------------------------------

std::string_view to_string(Stage s) {
    switch (s) {
    case Stage::Pool: return "pool";
    case Stage::Prompts: return "prompts";
    case Stage::Destylize: return "destylize";
    case Stage::Filter: return "filter";
    case Stage::Assemble: return "assemble";
    case Stage::Train: return "train";
    case Stage::Eval: return "eval";
    }
    return "?";
}

std::optional<Stage> parse_stage(std::string_view s) {
    for (Stage st : kStages)
        if (to_string(st) == s) return st;
    return std::nullopt;
}

std::string_view to_string(StageStatus s) {
    switch (s) {
    case StageStatus::Pending: return "pending";
    case StageStatus::Done: return "done";
    case StageStatus::Failed: return "failed";
    }
    return "?";
}

std::vector<Stage> dependencies(const PipelineConfig& cfg, Stage s) {
    switch (s) {
    case Stage::Pool: return {};
    case Stage::Prompts: return {Stage::Pool};
    case Stage::Destylize: return {Stage::Pool, Stage::Prompts};
    case Stage::Filter: return {Stage::Destylize};
    case Stage::Assemble: return {Stage::Pool, Stage::Filter};
    case Stage::Train: return {Stage::Pool, Stage::Destylize, Stage::Assemble};
    case Stage::Eval: {
        std::vector<Stage> d{Stage::Pool};
        if (!cfg.content_dir) d.push_back(Stage::Destylize);
        if (cfg.eval_method == "omnistyle2") d.push_back(Stage::Train);
        return d;
    }
    }
    return {};
}

// --- config ------------------------------------------------------------------------

namespace {

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!obj.is_object()) throw ValidationError(where + ": expected an object");
    for (const auto& [key, _] : obj.items()) {
        if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) == allowed.end())
            throw ValidationError(where + ": unknown key \"" + key + "\"");
    }
}

void check_keys_like(const json& obj, const json& reference, const std::string& where) {
    if (!obj.is_object()) throw ValidationError(where + ": expected an object");
    for (const auto& [key, _] : obj.items())
        if (!reference.contains(key)) throw ValidationError(where + ": unknown key \"" + key + "\"");
}

json section(const json& doc, const char* key) { return doc.contains(key) ? doc.at(key) : json::object(); }

template <class T>
T get_or(const json& obj, const char* key, T fallback, const std::string& where) {
    if (!obj.contains(key) || obj.at(key).is_null()) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ValidationError(where + "." + key + ": wrong type");
    }
}

fs::path resolve(const fs::path& base, const fs::path& p) {
    return (p.is_absolute() ? p : base / p).lexically_normal();
}

bool valid_method(const std::string& m) {
    if (m == "stub" || m == "omnistyle2") return true;
    if (m.rfind("stub-", 0) == 0 && m.size() > 5)
        return std::all_of(m.begin() + 5, m.end(), [](char c) { return c >= '0' && c <= '9'; });
    return false;
}

int stub_variant(const std::string& m) { return m.size() > 5 ? std::stoi(m.substr(5)) : 0; }

} // namespace

PipelineConfig parse_config(const json& doc, const fs::path& config_dir) {
    check_keys(doc, {"paths", "seed", "taxonomy", "pool", "judge", "destylizer", "embedder", "thresholds", "train",
                     "trainset", "eval"},
               "config");
    PipelineConfig c;
    c.config_dir = fs::absolute(config_dir).lexically_normal();
    const fs::path& base = c.config_dir;

    const json paths = section(doc, "paths");
    check_keys(paths, {"work_dir", "pool_dir", "manifests_dir", "cache_dir", "checkpoints_dir", "eval_dir", "data_dir"},
               "paths");
    c.work_dir = resolve(base, get_or<std::string>(paths, "work_dir", "run", "paths"));
    auto sub = [&](const char* key, const char* dflt) {
        return paths.contains(key) ? resolve(base, paths.at(key).get<std::string>()) : c.work_dir / dflt;
    };
    c.pool_dir = sub("pool_dir", "pool");
    c.manifests_dir = sub("manifests_dir", "manifests");
    c.cache_dir = sub("cache_dir", "cache");
    c.checkpoints_dir = sub("checkpoints_dir", "checkpoints");
    c.eval_dir = sub("eval_dir", "eval");
    c.data_dir = paths.contains("data_dir") ? resolve(base, paths.at("data_dir").get<std::string>())
                                            : default_data_dir();

    c.seed = get_or<std::uint64_t>(doc, "seed", 0, "config");

    const json tax = section(doc, "taxonomy");
    check_keys(tax, {"strict", "expected_count"}, "taxonomy");
    c.taxonomy_strict = get_or<bool>(tax, "strict", true, "taxonomy");
    c.taxonomy_expected = get_or<std::size_t>(tax, "expected_count", 65, "taxonomy");

    const json pool = section(doc, "pool");
    check_keys(pool, {"real_sources", "content_dir", "resolution", "min_side", "synthetic"}, "pool");
    if (pool.contains("real_sources")) {
        for (const auto& s : pool.at("real_sources")) {
            check_keys(s, {"dir", "source"}, "pool.real_sources[]");
            RealSource rs;
            rs.dir = resolve(base, s.at("dir").get<std::string>());
            const auto src = parse_image_source(get_or<std::string>(s, "source", "wikiart", "pool.real_sources[]"));
            if (!src) throw ValidationError("pool.real_sources[]: unknown source");
            rs.source = *src;
            c.real_sources.push_back(rs);
        }
    }
    if (pool.contains("content_dir") && !pool.at("content_dir").is_null())
        c.content_dir = resolve(base, pool.at("content_dir").get<std::string>());
    c.resolution = get_or<int>(pool, "resolution", kPoolResolution, "pool");
    c.min_side = get_or<int>(pool, "min_side", kDefaultMinSide, "pool");
    const json synth = section(pool, "synthetic");
    check_keys(synth, {"per_style", "images_per_prompt", "max_styles"}, "pool.synthetic");
    c.synth_per_style = get_or<std::size_t>(synth, "per_style", 0, "pool.synthetic");
    c.synth_images_per_prompt = get_or<std::size_t>(synth, "images_per_prompt", 8, "pool.synthetic");
    c.synth_max_styles = get_or<std::size_t>(synth, "max_styles", 0, "pool.synthetic");

    const json judge = section(doc, "judge");
    check_keys(judge, {"backend", "fixtures", "base_url", "model", "api_key_env", "max_attempts", "max_inflight"},
               "judge");
    c.judge_backend = get_or<std::string>(judge, "backend", "mock", "judge");
    if (judge.contains("fixtures") && !judge.at("fixtures").is_null())
        c.judge_fixtures = resolve(base, judge.at("fixtures").get<std::string>());
    c.judge_base_url = get_or<std::string>(judge, "base_url", c.judge_base_url, "judge");
    c.judge_model = get_or<std::string>(judge, "model", c.judge_model, "judge");
    c.judge_api_key_env = get_or<std::string>(judge, "api_key_env", c.judge_api_key_env, "judge");
    c.judge_max_attempts = get_or<int>(judge, "max_attempts", 3, "judge");
    c.judge_max_inflight = get_or<int>(judge, "max_inflight", 4, "judge");

    const json desty = section(doc, "destylizer");
    check_keys(desty, {"backend", "checkpoint", "work_side", "steps"}, "destylizer");
    c.destylizer = get_or<std::string>(desty, "backend", "stub", "destylizer");
    if (desty.contains("checkpoint") && !desty.at("checkpoint").is_null())
        c.dst_checkpoint = resolve(base, desty.at("checkpoint").get<std::string>());
    c.adapter_work_side = get_or<int>(desty, "work_side", 32, "destylizer");
    c.adapter_steps = get_or<int>(desty, "steps", 8, "destylizer");

    const json emb = section(doc, "embedder");
    check_keys(emb, {"dim", "seed"}, "embedder");
    c.embed_dim = get_or<std::size_t>(emb, "dim", 64, "embedder");
    c.embed_seed = get_or<std::uint64_t>(emb, "seed", 0, "embedder");

    const json th = section(doc, "thresholds");
    check_keys(th, {"content", "style"}, "thresholds");
    c.content_threshold = get_or<int>(th, "content", 4, "thresholds");
    c.style_threshold = get_or<int>(th, "style", 4, "thresholds");

    const json train = section(doc, "train");
    check_keys(train, {"model", "dst", "o2", "max_examples"}, "train");
    if (train.contains("model")) {
        check_keys_like(train.at("model"), json(c.model), "train.model");
        c.model = train.at("model").get<denoiser::ModelConfig>();
    }
    try {
        if (train.contains("dst")) {
            check_keys_like(train.at("dst"), json(c.dst_train), "train.dst");
            train.at("dst").get_to(c.dst_train);
        }
        if (train.contains("o2")) {
            check_keys_like(train.at("o2"), json(c.o2_train), "train.o2");
            train.at("o2").get_to(c.o2_train);
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("train: ") + e.what());
    }
    c.train_max_examples = get_or<std::size_t>(train, "max_examples", 64, "train");

    const json ts = section(doc, "trainset");
    check_keys(ts, {"refs_per_content", "stylizers"}, "trainset");
    c.refs_per_content = get_or<std::size_t>(ts, "refs_per_content", 1, "trainset");
    c.trainset_stylizers = get_or<std::vector<std::string>>(ts, "stylizers", c.trainset_stylizers, "trainset");

    const json ev = section(doc, "eval");
    check_keys(ev, {"method", "max_contents", "max_styles"}, "eval");
    c.eval_method = get_or<std::string>(ev, "method", "stub", "eval");
    c.eval_max_contents = get_or<std::size_t>(ev, "max_contents", 55, "eval");
    c.eval_max_styles = get_or<std::size_t>(ev, "max_styles", 56, "eval");

    // --- range and consistency checks
    auto in_0_5 = [](int v) { return v >= 0 && v <= 5; };
    if (!in_0_5(c.content_threshold)) throw ValidationError("thresholds.content must be in [0, 5]");
    if (!in_0_5(c.style_threshold)) throw ValidationError("thresholds.style must be in [0, 5]");
    if (c.resolution <= 0) throw ValidationError("pool.resolution must be positive");
    if (c.min_side <= 0) throw ValidationError("pool.min_side must be positive");
    if (c.judge_backend != "mock" && c.judge_backend != "http")
        throw ValidationError("judge.backend must be \"mock\" or \"http\"");
    if (c.judge_max_attempts < 1) throw ValidationError("judge.max_attempts must be >= 1");
    if (c.judge_max_inflight < 1) throw ValidationError("judge.max_inflight must be >= 1");
    if (c.destylizer != "stub" && c.destylizer != "model")
        throw ValidationError("destylizer.backend must be \"stub\" or \"model\"");
    if (c.adapter_work_side <= 0 || c.adapter_work_side % 8 != 0)
        throw ValidationError("destylizer.work_side must be a positive multiple of 8");
    if (c.adapter_steps < 1) throw ValidationError("destylizer.steps must be >= 1");
    if (c.embed_dim == 0) throw ValidationError("embedder.dim must be positive");
    if (!valid_method(c.eval_method)) throw ValidationError("eval.method must be stub, stub-<n> or omnistyle2");
    if (c.refs_per_content == 0) throw ValidationError("trainset.refs_per_content must be positive");
    if (c.trainset_stylizers.empty()) throw ValidationError("trainset.stylizers must not be empty");
    for (const auto& s : c.trainset_stylizers)
        if (!valid_method(s) || s == "omnistyle2") throw ValidationError("trainset.stylizers: unknown stylizer " + s);
    c.dst_train.validate();
    c.o2_train.validate();
    if (c.o2_train.lora_rank < 1) throw ValidationError("train.o2 must use LoRA (lora_rank >= 1)");
    if (c.model.token_width != 4) throw ValidationError("train.model.token_width must match the 4-channel autoencoder");

    for (const auto& rs : c.real_sources)
        if (!fs::is_directory(rs.dir)) throw ValidationError("pool source not found: " + rs.dir.string());
    if (c.content_dir && !fs::is_directory(*c.content_dir))
        throw ValidationError("pool.content_dir not found: " + c.content_dir->string());
    if (c.judge_fixtures && !fs::is_regular_file(*c.judge_fixtures))
        throw ValidationError("judge.fixtures not found: " + c.judge_fixtures->string());
    if (c.dst_checkpoint && !fs::is_directory(*c.dst_checkpoint))
        throw ValidationError("destylizer.checkpoint not found: " + c.dst_checkpoint->string());
    if (!fs::is_directory(c.data_dir / "prompts")) throw ValidationError("no prompts under " + c.data_dir.string());
    if (c.real_sources.empty() && c.synth_per_style == 0)
        throw ValidationError("pool: configure real_sources or synthetic.per_style");

    const std::vector<std::pair<const char*, fs::path>> outputs{{"pool_dir", c.pool_dir},
                                                                {"manifests_dir", c.manifests_dir},
                                                                {"cache_dir", c.cache_dir},
                                                                {"checkpoints_dir", c.checkpoints_dir},
                                                                {"eval_dir", c.eval_dir}};
    for (std::size_t i = 0; i < outputs.size(); ++i) {
        for (std::size_t j = i + 1; j < outputs.size(); ++j)
            if (outputs[i].second == outputs[j].second)
                throw ValidationError(std::string("paths.") + outputs[i].first + " and paths." + outputs[j].first +
                                      " are the same directory");
        for (const auto& rs : c.real_sources)
            if (outputs[i].second == rs.dir)
                throw ValidationError(std::string("paths.") + outputs[i].first + " overlaps a pool source");
        if (c.content_dir && outputs[i].second == *c.content_dir)
            throw ValidationError(std::string("paths.") + outputs[i].first + " overlaps pool.content_dir");
    }
    return c;
}

PipelineConfig validate_config(const fs::path& path) {
    if (!fs::is_regular_file(path)) throw ValidationError("config not found: " + path.string());
    json doc;
    try {
        doc = read_json_file(path);
    } catch (const std::exception& e) {
        throw ValidationError(std::string("config: ") + e.what());
    }
    return parse_config(doc, fs::absolute(path).parent_path());
}

void to_json(json& j, const PipelineConfig& c) {
    json sources = json::array();
    for (const auto& rs : c.real_sources)
        sources.push_back({{"dir", rs.dir.string()}, {"source", std::string(to_string(rs.source))}});
    auto opt_path = [](const std::optional<fs::path>& p) { return p ? json(p->string()) : json(nullptr); };
    j = json{
        {"paths",
         {{"work_dir", c.work_dir.string()},
          {"pool_dir", c.pool_dir.string()},
          {"manifests_dir", c.manifests_dir.string()},
          {"cache_dir", c.cache_dir.string()},
          {"checkpoints_dir", c.checkpoints_dir.string()},
          {"eval_dir", c.eval_dir.string()},
          {"data_dir", c.data_dir.string()}}},
        {"seed", c.seed},
        {"taxonomy", {{"strict", c.taxonomy_strict}, {"expected_count", c.taxonomy_expected}}},
        {"pool",
         {{"real_sources", sources},
          {"content_dir", opt_path(c.content_dir)},
          {"resolution", c.resolution},
          {"min_side", c.min_side},
          {"synthetic",
           {{"per_style", c.synth_per_style},
            {"images_per_prompt", c.synth_images_per_prompt},
            {"max_styles", c.synth_max_styles}}}}},
        {"judge",
         {{"backend", c.judge_backend},
          {"fixtures", opt_path(c.judge_fixtures)},
          {"base_url", c.judge_base_url},
          {"model", c.judge_model},
          {"api_key_env", c.judge_api_key_env},
          {"max_attempts", c.judge_max_attempts},
          {"max_inflight", c.judge_max_inflight}}},
        {"destylizer",
         {{"backend", c.destylizer},
          {"checkpoint", opt_path(c.dst_checkpoint)},
          {"work_side", c.adapter_work_side},
          {"steps", c.adapter_steps}}},
        {"embedder", {{"dim", c.embed_dim}, {"seed", c.embed_seed}}},
        {"thresholds", {{"content", c.content_threshold}, {"style", c.style_threshold}}},
        {"train", {{"model", c.model}, {"dst", c.dst_train}, {"o2", c.o2_train}, {"max_examples", c.train_max_examples}}},
        {"trainset", {{"refs_per_content", c.refs_per_content}, {"stylizers", c.trainset_stylizers}}},
        {"eval",
         {{"method", c.eval_method}, {"max_contents", c.eval_max_contents}, {"max_styles", c.eval_max_styles}}},
    };
}

// --- declared outputs ---------------------------------------------------------------

namespace {

fs::path manifest(const PipelineConfig& c, const char* name) { return c.manifests_dir / name; }
fs::path quarantine_file(const PipelineConfig& c, Stage s) {
    return c.manifests_dir / "quarantine" / (std::string(to_string(s)) + ".jsonl");
}

} // namespace

std::vector<fs::path> stage_outputs(const PipelineConfig& c, Stage s) {
    switch (s) {
    case Stage::Pool: {
        std::vector<fs::path> out{manifest(c, "styles.manifest.jsonl"), manifest(c, "pool_report.json"),
                                  quarantine_file(c, s)};
        if (c.content_dir) out.push_back(manifest(c, "contents.manifest.jsonl"));
        return out;
    }
    case Stage::Prompts: return {manifest(c, "prompts.manifest.jsonl"), quarantine_file(c, s)};
    case Stage::Destylize:
        return {manifest(c, "desty.manifest.jsonl"), manifest(c, "pairs.manifest.jsonl"), quarantine_file(c, s)};
    case Stage::Filter: return {manifest(c, "verdicts.jsonl"), quarantine_file(c, s)};
    case Stage::Assemble: return {manifest(c, "triplets.manifest.jsonl"), manifest(c, "assemble_report.json")};
    case Stage::Train:
        return {c.checkpoints_dir / "o2" / "config.json", c.checkpoints_dir / "o2" / "params.bin",
                c.checkpoints_dir / "o2" / "adapters.bin", manifest(c, "train_report.json")};
    case Stage::Eval:
        return {c.eval_dir / "benchmark.spec.json", c.eval_dir / "reports.jsonl", c.eval_dir / "table.md",
                quarantine_file(c, s)};
    }
    return {};
}

std::string output_digest(const PipelineConfig& cfg, Stage s) {
    std::string acc;
    for (const auto& p : stage_outputs(cfg, s)) {
        if (!fs::is_regular_file(p)) return {};
        acc += p.filename().string() + "=" + sha256_file(p) + "\n";
    }
    return sha256_hex(acc);
}

// --- ledger ---------------------------------------------------------------------------

bool RunLedger::done(Stage s) const {
    const auto it = stages.find(s);
    return it != stages.end() && it->second.status == StageStatus::Done && !it->second.output_digest.empty();
}

void to_json(json& j, const RunLedger& l) {
    json stages = json::object();
    for (const auto& [s, r] : l.stages) {
        stages[std::string(to_string(s))] = {{"status", std::string(to_string(r.status))},
                                             {"input_digest", r.input_digest},
                                             {"output_digest", r.output_digest},
                                             {"quarantined", r.quarantined},
                                             {"message", r.message}};
    }
    json executed = json::array();
    for (Stage s : l.executed) executed.push_back(std::string(to_string(s)));
    j = json{{"stages", stages}, {"executed", executed}};
}

void from_json(const json& j, RunLedger& l) {
    l = RunLedger{};
    for (const auto& [name, r] : j.at("stages").items()) {
        const auto s = parse_stage(name);
        if (!s) throw ParseError("ledger: unknown stage " + name);
        StageRecord rec;
        const auto status = r.at("status").get<std::string>();
        rec.status = status == "done" ? StageStatus::Done : status == "failed" ? StageStatus::Failed : StageStatus::Pending;
        rec.input_digest = r.value("input_digest", "");
        rec.output_digest = r.value("output_digest", "");
        rec.quarantined = r.value("quarantined", std::size_t{0});
        rec.message = r.value("message", "");
        l.stages[*s] = rec;
    }
    for (const auto& e : j.value("executed", json::array()))
        if (auto s = parse_stage(e.get<std::string>())) l.executed.push_back(*s);
}

RunLedger read_ledger(const fs::path& path) { return read_json_file(path).get<RunLedger>(); }

void write_ledger(const fs::path& path, const RunLedger& l) {
    fs::create_directories(path.parent_path());
    write_json_file(path, json(l));
}

fs::path ledger_path(const PipelineConfig& cfg) { return cfg.work_dir / "ledger.json"; }

// --- stage bodies -------------------------------------------------------------------------

namespace {

class Context {
public:
    explicit Context(const PipelineConfig& c) : cfg(c) {}

    const PipelineConfig& cfg;

    JudgeClient& judge() {
        if (!judge_) {
            std::shared_ptr<JudgeBackend> backend;
            if (cfg.judge_backend == "mock") {
                backend = cfg.judge_fixtures ? std::shared_ptr<JudgeBackend>(MockJudge::from_fixture_file(*cfg.judge_fixtures))
                                             : std::make_shared<MockJudge>();
            } else {
                HttpJudgeOptions o;
                o.base_url = cfg.judge_base_url;
                o.model = cfg.judge_model;
                o.api_key_env = cfg.judge_api_key_env;
                backend = std::make_shared<HttpChatJudge>(o);
            }
            JudgeClientOptions o;
            o.max_attempts = cfg.judge_max_attempts;
            o.max_inflight = cfg.judge_max_inflight;
            o.cache_dir = cfg.cache_dir / "judge";
            judge_ = std::make_unique<JudgeClient>(backend, PromptLibrary::load(cfg.data_dir / "prompts"), o);
        }
        return *judge_;
    }

    std::vector<ImageRecord> styles() const { return read_image_manifest(manifest(cfg, "styles.manifest.jsonl")); }

private:
    std::unique_ptr<JudgeClient> judge_;
};

std::size_t write_quarantine(const PipelineConfig& c, Stage s, const QuarantineLog& q) {
    fs::create_directories(quarantine_file(c, s).parent_path());
    q.write(quarantine_file(c, s));
    return q.size();
}

std::size_t stage_pool(Context& ctx) {
    const auto& c = ctx.cfg;
    QuarantineLog q;
    json report = json::object();
    std::vector<ImageRecord> styles;
    std::set<std::string> seen;
    auto take = [&](std::vector<ImageRecord> recs) {
        for (auto& r : recs)
            if (seen.insert(r.id).second) styles.push_back(std::move(r));
    };

    std::optional<ArtVocab> vocab;
    if (fs::exists(c.data_dir / "art_vocab.json")) vocab = load_art_vocab(c.data_dir / "art_vocab.json");

    json real = json::array();
    for (const auto& rs : c.real_sources) {
        IngestOptions o;
        o.min_side = c.min_side;
        o.resolution = c.resolution;
        o.source = rs.source;
        o.vocab = vocab ? &*vocab : nullptr;
        auto res = ingest_real_pool(rs.dir, c.pool_dir / "styles", &ctx.judge(), o);
        real.push_back({{"source", std::string(to_string(rs.source))}, {"report", res.report}});
        q.merge(res.quarantine);
        take(std::move(res.records));
    }
    report["real"] = real;

    if (c.synth_per_style > 0) {
        TaxonomyOptions to;
        to.strict = c.taxonomy_strict;
        to.expected_count = c.taxonomy_expected;
        auto tax = load_taxonomy(c.data_dir / "taxonomy.json", to);
        if (c.synth_max_styles > 0 && tax.categories.size() > c.synth_max_styles)
            tax.categories.resize(c.synth_max_styles);
        const auto tree = load_content_tree(c.data_dir / "content_tree.json");
        const auto pairs = sample_style_content_pairs(tax, tree, c.synth_per_style, c.seed);
        StubImageGen gen;
        SynthOptions so;
        so.images_per_prompt = c.synth_images_per_prompt;
        so.seed = c.seed;
        so.resolution = c.resolution;
        auto res = synthesize_style_pool(pairs, tax, gen, ctx.judge(), so, c.pool_dir / "styles");
        report["synthetic"] = {{"pairs", pairs.size()}, {"images", res.records.size()}, {"failed_pairs", res.failed_pairs}};
        q.merge(res.quarantine);
        take(std::move(res.records));
    }

    if (c.content_dir) {
        IngestOptions o;
        o.min_side = c.min_side;
        o.resolution = c.resolution;
        o.source = ImageSource::User;
        o.classify = false;
        auto res = ingest_real_pool(*c.content_dir, c.pool_dir / "contents", nullptr, o);
        report["contents"] = res.report;
        q.merge(res.quarantine);
        write_image_manifest(manifest(c, "contents.manifest.jsonl"), res.records);
    }

    if (styles.empty()) throw ForgeError("pool stage produced no style images");
    report["styles"] = styles.size();
    write_image_manifest(manifest(c, "styles.manifest.jsonl"), styles);
    write_json_file(manifest(c, "pool_report.json"), report);
    return write_quarantine(c, Stage::Pool, q);
}

std::size_t stage_prompts(Context& ctx) {
    auto res = generate_destyle_prompts(ctx.styles(), ctx.judge());
    write_prompts(manifest(ctx.cfg, "prompts.manifest.jsonl"), res.prompts);
    return write_quarantine(ctx.cfg, Stage::Prompts, res.quarantine);
}

std::shared_ptr<const denoiser::AutoencoderBackend> toy_autoencoder() {
    return std::make_shared<denoiser::ToyAutoencoder>();
}

std::unique_ptr<DestylizerBackend> make_destylizer(const PipelineConfig& c) {
    if (c.destylizer == "stub") return std::make_unique<StubDestylizer>();
    const fs::path dir = c.dst_checkpoint ? *c.dst_checkpoint : c.checkpoints_dir / "dst";
    auto model = std::make_shared<denoiser::ToyDiT>(denoiser::load_checkpoint(dir));
    return std::make_unique<ModelDestylizer>(model, toy_autoencoder(),
                                             ModelAdapterOptions{c.adapter_work_side, c.adapter_steps});
}

std::size_t stage_destylize(Context& ctx) {
    const auto& c = ctx.cfg;
    const auto backend = make_destylizer(c);
    DestyOptions o;
    o.seed = c.seed;
    o.out_dir = c.pool_dir / "desty";
    auto res = run_destylization(ctx.styles(), *backend, read_prompts(manifest(c, "prompts.manifest.jsonl")), o);
    write_image_manifest(manifest(c, "desty.manifest.jsonl"), res.desty);
    write_pairs(manifest(c, "pairs.manifest.jsonl"), res.pairs);
    return write_quarantine(c, Stage::Destylize, res.quarantine);
}

std::size_t stage_filter(Context& ctx) {
    const auto& c = ctx.cfg;
    const auto pairs = resolve_pairs(read_pairs(manifest(c, "pairs.manifest.jsonl")), ctx.styles(),
                                     read_image_manifest(manifest(c, "desty.manifest.jsonl")));
    auto res = filter_pairs(pairs, ctx.judge(), GateThresholds{c.content_threshold, c.style_threshold});
    write_verdicts(manifest(c, "verdicts.jsonl"), res.verdicts);
    return write_quarantine(c, Stage::Filter, res.quarantine);
}

std::size_t stage_assemble(Context& ctx) {
    const auto& c = ctx.cfg;
    const ProjectionEmbedder csd(EmbedRole::Style, c.embed_dim, c.embed_seed);
    auto res = assemble_triplets(read_verdicts(manifest(c, "verdicts.jsonl")), ctx.styles(), csd);
    json drops = json::array();
    for (const auto& d : res.drops) drops.push_back({{"verdict_id", d.verdict_id}, {"reason", d.reason}});
    write_triplets(manifest(c, "triplets.manifest.jsonl"), res.triplets);
    write_json_file(manifest(c, "assemble_report.json"), json{{"triplets", res.triplets.size()},
                                                             {"per_category", res.per_category},
                                                             {"drop_reasons", res.drop_reasons},
                                                             {"drops", drops}});
    return 0;
}

std::size_t stage_train(Context& ctx) {
    const auto& c = ctx.cfg;
    const auto triplets = read_triplets(manifest(c, "triplets.manifest.jsonl"));
    if (triplets.empty()) throw ForgeError("no triplets to train on");
    std::map<std::string, ImageRecord> by_id;
    for (auto& r : ctx.styles()) by_id.emplace(r.id, r);
    for (auto& r : read_image_manifest(manifest(c, "desty.manifest.jsonl"))) by_id.emplace(r.id, r);

    const auto ae = toy_autoencoder();
    auto enc = [&](const std::string& id) {
        const auto img = load_image(by_id.at(id).path);
        if (!img) throw ForgeError("cannot decode " + id);
        return ae->encode(center_crop_resize(*img, c.adapter_work_side));
    };
    std::vector<denoiser::O2Example> data;
    for (const auto& t : triplets) {
        if (data.size() >= c.train_max_examples) break;
        data.push_back({enc(t.style_id), enc(t.reference_id), enc(t.desty_id)});
    }
    denoiser::ToyDiT model(c.model);
    auto cfg = c.o2_train;
    if (cfg.seed == 0) cfg.seed = c.seed;
    const auto report = denoiser::train_o2(model, data, cfg);
    denoiser::save_checkpoint(c.checkpoints_dir / "o2", model, "o2", cfg);
    write_json_file(manifest(c, "train_report.json"), json{{"scheme", "o2"},
                                                          {"examples", data.size()},
                                                          {"trainable_parameters", report.trainable_parameters},
                                                          {"used_lora", report.used_lora},
                                                          {"losses", report.losses}});
    return 0;
}

std::vector<ImageRecord> first_n(std::vector<ImageRecord> recs, std::size_t n) {
    std::sort(recs.begin(), recs.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    if (recs.size() > n) recs.resize(n);
    return recs;
}

std::unique_ptr<StylizerBackend> make_stylizer(const PipelineConfig& c, const std::string& name) {
    if (name == "omnistyle2") {
        auto model = std::make_shared<denoiser::ToyDiT>(denoiser::load_checkpoint(c.checkpoints_dir / "o2"));
        return std::make_unique<ModelStylizer>(model, toy_autoencoder(),
                                               ModelAdapterOptions{c.adapter_work_side, c.adapter_steps});
    }
    return std::make_unique<StubStylizer>(stub_variant(name));
}

std::size_t stage_eval(Context& ctx) {
    const auto& c = ctx.cfg;
    const auto contents = first_n(read_image_manifest(c.content_dir ? manifest(c, "contents.manifest.jsonl")
                                                                    : manifest(c, "desty.manifest.jsonl")),
                                  c.eval_max_contents);
    const auto styles = first_n(ctx.styles(), c.eval_max_styles);
    if (contents.empty() || styles.empty()) throw ForgeError("nothing to evaluate");

    BenchmarkSpec spec;
    for (const auto& r : contents) spec.content_ids.push_back(r.id);
    for (const auto& r : styles) spec.style_ids.push_back(r.id);
    spec.methods = {c.eval_method};
    spec.contents_manifest = c.content_dir ? manifest(c, "contents.manifest.jsonl") : manifest(c, "desty.manifest.jsonl");
    spec.styles_manifest = manifest(c, "styles.manifest.jsonl");
    fs::create_directories(c.eval_dir);
    json spec_json = spec;
    spec_json["contents_manifest"] = spec.contents_manifest->lexically_relative(c.eval_dir).string();
    spec_json["styles_manifest"] = spec.styles_manifest->lexically_relative(c.eval_dir).string();
    write_json_file(c.eval_dir / "benchmark.spec.json", spec_json);

    const auto method = make_stylizer(c, c.eval_method);
    const ProjectionEmbedder dino(EmbedRole::Structure, c.embed_dim, c.embed_seed);
    const ProjectionEmbedder clip(EmbedRole::Semantic, c.embed_dim, c.embed_seed);
    const ProjectionEmbedder csd(EmbedRole::Style, c.embed_dim, c.embed_seed);
    const RandomFeatureStack feats(c.embed_seed);
    CellCache cache(c.cache_dir / "eval");
    MetricBackends b{&dino, &clip, &csd, &feats, &ctx.judge()};
    BenchmarkOptions o;
    o.out_dir = c.eval_dir;
    o.seed = c.seed;
    o.cache = &cache;
    auto res = run_benchmark(spec, contents, styles, *method, b, o);
    // Name the column after the configured method rather than the backend id.
    for (auto& r : res.reports) r.method = c.eval_method;
    res.aggregate = aggregate(c.eval_method, res.reports);
    write_reports(c.eval_dir / "reports.jsonl", res.reports);
    std::ofstream(c.eval_dir / "table.md") << render_table({res.aggregate});
    return write_quarantine(c, Stage::Eval, res.quarantine);
}

std::size_t run_stage(Context& ctx, Stage s) {
    fs::create_directories(ctx.cfg.manifests_dir);
    switch (s) {
    case Stage::Pool: return stage_pool(ctx);
    case Stage::Prompts: return stage_prompts(ctx);
    case Stage::Destylize: return stage_destylize(ctx);
    case Stage::Filter: return stage_filter(ctx);
    case Stage::Assemble: return stage_assemble(ctx);
    case Stage::Train: return stage_train(ctx);
    case Stage::Eval: return stage_eval(ctx);
    }
    return 0;
}

json stage_inputs(const PipelineConfig& c, Stage s) {
    const json all = c;
    auto pick = [&](std::initializer_list<const char*> keys) {
        json j = json::object();
        for (const char* k : keys) j[k] = all.at(k);
        return j;
    };
    json judge = all.at("judge");
    if (c.judge_fixtures) judge["fixtures_digest"] = sha256_file(*c.judge_fixtures);
    json prompts = json::object();
    for (const auto& e : fs::directory_iterator(c.data_dir / "prompts"))
        if (e.is_regular_file()) prompts[e.path().filename().string()] = sha256_file(e.path());
    judge["templates"] = prompts;

    json in;
    switch (s) {
    case Stage::Pool: {
        in = pick({"seed", "taxonomy", "pool"});
        in["judge"] = judge;
        for (const char* f : {"taxonomy.json", "content_tree.json", "art_vocab.json"})
            if (fs::exists(c.data_dir / f)) in["data"][f] = sha256_file(c.data_dir / f);
        break;
    }
    case Stage::Prompts: in["judge"] = judge; break;
    case Stage::Destylize: {
        in = pick({"seed", "destylizer"});
        const fs::path ckpt = c.dst_checkpoint ? *c.dst_checkpoint : c.checkpoints_dir / "dst";
        if (c.destylizer == "model" && fs::exists(ckpt / "params.bin"))
            in["checkpoint_digest"] = sha256_file(ckpt / "params.bin");
        break;
    }
    case Stage::Filter:
        in = pick({"thresholds"});
        in["judge"] = judge;
        break;
    case Stage::Assemble: in = pick({"embedder"}); break;
    case Stage::Train: in = pick({"seed", "train", "destylizer"}); break;
    case Stage::Eval:
        in = pick({"seed", "eval", "embedder", "destylizer"});
        in["judge"] = judge;
        break;
    }
    in["paths"] = all.at("paths");
    return in;
}

std::string input_digest(const PipelineConfig& c, Stage s, const RunLedger& ledger) {
    json in = stage_inputs(c, s);
    for (Stage d : dependencies(c, s)) {
        const auto it = ledger.stages.find(d);
        in["upstream"][std::string(to_string(d))] = it == ledger.stages.end() ? "" : it->second.output_digest;
    }
    return sha256_hex(in.dump());
}

} // namespace

RunLedger run_pipeline(const PipelineConfig& cfg, const std::vector<Stage>& stages, const RunOptions& opts) {
    RunLedger ledger;
    if ((opts.resume || opts.load_ledger) && fs::exists(ledger_path(cfg))) ledger = read_ledger(ledger_path(cfg));
    ledger.executed.clear();
    Context ctx(cfg);

    for (Stage s : kStages) {
        if (std::find(stages.begin(), stages.end(), s) == stages.end()) continue;
        StageRecord& rec = ledger.stages[s];

        std::string blocked;
        for (Stage d : dependencies(cfg, s)) {
            const bool ok = ledger.done(d) && output_digest(cfg, d) == ledger.stages.at(d).output_digest;
            if (!ok) blocked += (blocked.empty() ? "" : ", ") + std::string(to_string(d));
        }
        if (!blocked.empty()) {
            rec.status = StageStatus::Failed;
            rec.message = "dependencies not done: " + blocked;
            write_ledger(ledger_path(cfg), ledger);
            continue;
        }

        const std::string in = input_digest(cfg, s, ledger);
        if (opts.resume && rec.status == StageStatus::Done && rec.input_digest == in && !rec.output_digest.empty() &&
            output_digest(cfg, s) == rec.output_digest)
            continue;

        ledger.executed.push_back(s);
        try {
            rec.quarantined = run_stage(ctx, s);
            rec.input_digest = in;
            rec.output_digest = output_digest(cfg, s);
            if (rec.output_digest.empty()) throw ForgeError("stage did not write all declared outputs");
            rec.status = StageStatus::Done;
            rec.message.clear();
        } catch (const std::exception& e) {
            rec.status = StageStatus::Failed;
            rec.input_digest = in;
            rec.output_digest.clear();
            rec.message = e.what();
        }
        write_ledger(ledger_path(cfg), ledger);
    }
    return ledger;
}

// --- side commands ------------------------------------------------------------------------

json run_trainset(const PipelineConfig& cfg) {
    const auto contents_path = manifest(cfg, "contents.manifest.jsonl");
    if (!fs::exists(contents_path)) throw ForgeError("trainset needs pool.content_dir and a completed pool stage");
    Context ctx(cfg);
    std::vector<std::unique_ptr<StylizerBackend>> owned;
    std::vector<const StylizerBackend*> stylizers;
    for (const auto& name : cfg.trainset_stylizers) {
        owned.push_back(std::make_unique<StubStylizer>(stub_variant(name)));
        stylizers.push_back(owned.back().get());
    }
    TrainsetOptions o;
    o.refs_per_content = cfg.refs_per_content;
    o.seed = cfg.seed;
    o.out_dir = cfg.pool_dir / "stylized";
    auto res = build_dst_trainset(read_image_manifest(contents_path), ctx.styles(), stylizers, ctx.judge(), o);
    write_trainset(manifest(cfg, "dst_train.manifest.jsonl"), res.samples);
    write_image_manifest(manifest(cfg, "stylized.manifest.jsonl"), res.stylized);
    res.quarantine.write(cfg.manifests_dir / "quarantine" / "trainset.jsonl");
    return json{{"samples", res.samples.size()}, {"quarantined", res.quarantine.size()}};
}

json run_train_dst(const PipelineConfig& cfg) {
    const auto samples = read_trainset(manifest(cfg, "dst_train.manifest.jsonl"));
    if (samples.empty()) throw ForgeError("empty DST training set");
    std::map<std::string, ImageRecord> by_id;
    for (auto& r : read_image_manifest(manifest(cfg, "contents.manifest.jsonl"))) by_id.emplace(r.id, r);
    for (auto& r : read_image_manifest(manifest(cfg, "stylized.manifest.jsonl"))) by_id.emplace(r.id, r);

    const auto ae = toy_autoencoder();
    const denoiser::TextEmbedder text(cfg.model.token_width);
    auto enc = [&](const std::string& id) {
        const auto img = load_image(by_id.at(id).path);
        if (!img) throw ForgeError("cannot decode " + id);
        return ae->encode(center_crop_resize(*img, cfg.adapter_work_side));
    };
    std::vector<denoiser::DstExample> data;
    for (const auto& s : samples) {
        if (data.size() >= cfg.train_max_examples) break;
        data.push_back({enc(s.stylized_id), text.embed(s.caption), enc(s.content_id)});
    }
    denoiser::ToyDiT model(cfg.model);
    auto tc = cfg.dst_train;
    if (tc.seed == 0) tc.seed = cfg.seed;
    const auto report = denoiser::train_dst(model, data, tc);
    denoiser::save_checkpoint(cfg.checkpoints_dir / "dst", model, "dst", tc);
    return json{{"scheme", "dst"},
                {"examples", data.size()},
                {"trainable_parameters", report.trainable_parameters},
                {"first_loss", report.losses.empty() ? 0.0 : report.losses.front()},
                {"last_loss", report.losses.empty() ? 0.0 : report.losses.back()}};
}

} // namespace forge
