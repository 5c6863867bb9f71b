// forge: command-line entry for every pipeline stage.

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>

#include "forge/common/errors.hpp"
#include "forge/dataset.hpp"
#include "forge/denoiser/checkpoint.hpp"
#include "forge/metrics.hpp"
#include "forge/pipeline.hpp"

namespace fs = std::filesystem;
using namespace forge;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    bool resume = false;
};

PipelineConfig load(const Common& c) {
    if (c.config.empty()) throw ValidationError("--config is required");
    auto cfg = validate_config(c.config);
    if (c.seed) cfg.seed = *c.seed;
    return cfg;
}

int print_ledger(const RunLedger& ledger, const std::vector<Stage>& requested) {
    bool all_done = true;
    for (Stage s : requested) {
        const auto it = ledger.stages.find(s);
        const StageRecord rec = it == ledger.stages.end() ? StageRecord{} : it->second;
        const bool ran = std::find(ledger.executed.begin(), ledger.executed.end(), s) != ledger.executed.end();
        std::cout << to_string(s) << ": " << to_string(rec.status);
        if (rec.status == StageStatus::Done) std::cout << (ran ? " (ran)" : " (skipped)");
        std::cout << " quarantined=" << rec.quarantined;
        if (!rec.output_digest.empty()) std::cout << " digest=" << rec.output_digest.substr(0, 16);
        if (!rec.message.empty()) std::cout << " [" << rec.message << "]";
        std::cout << '\n';
        all_done = all_done && rec.status == StageStatus::Done;
    }
    return all_done ? 0 : 1;
}

int run_stages(const Common& c, const std::vector<Stage>& stages, bool load_ledger) {
    const auto cfg = load(c);
    RunOptions o;
    o.resume = c.resume;
    o.load_ledger = load_ledger;
    return print_ledger(run_pipeline(cfg, stages, o), stages);
}

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config", c.config, "pipeline config (JSON)");
    app->add_option("--seed", c.seed, "override the config seed");
    app->add_flag("--resume", c.resume, "skip stages already done with unchanged inputs");
}

std::unique_ptr<StylizerBackend> make_method(const std::string& name, const std::string& checkpoint, int work_side,
                                             int steps) {
    if (name == "omnistyle2") {
        if (checkpoint.empty()) throw ValidationError("--checkpoint is required for omnistyle2");
        auto model = std::make_shared<denoiser::ToyDiT>(denoiser::load_checkpoint(checkpoint));
        return std::make_unique<ModelStylizer>(model, std::make_shared<denoiser::ToyAutoencoder>(),
                                               ModelAdapterOptions{work_side, steps});
    }
    if (name == "stub") return std::make_unique<StubStylizer>(0);
    if (name.rfind("stub-", 0) == 0) return std::make_unique<StubStylizer>(std::stoi(name.substr(5)));
    throw ValidationError("unknown method: " + name);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"forge: destylization dataset and style-transfer pipeline"};
    app.require_subcommand(1);
    int exit_code = 0;

    // config
    Common cfg_common;
    auto* config = app.add_subcommand("config", "inspect or check a pipeline config");
    config->require_subcommand(1);
    auto* show = config->add_subcommand("show", "print the config with defaults applied");
    auto* validate = config->add_subcommand("validate", "check a config and exit 0 when valid");
    for (auto* sc : {show, validate}) sc->add_option("--config", cfg_common.config)->required();
    show->callback([&] { std::cout << json(load(cfg_common)).dump(2) << '\n'; });
    validate->callback([&] {
        load(cfg_common);
        std::cout << "ok\n";
    });

    // run
    Common run_common;
    std::string stage_list;
    auto* run = app.add_subcommand("run", "run pipeline stages in dependency order");
    add_common(run, run_common);
    run->add_option("--stages", stage_list, "comma-separated subset (default: all)");
    run->callback([&] {
        std::vector<Stage> stages;
        if (stage_list.empty()) {
            stages.assign(kStages.begin(), kStages.end());
        } else {
            std::stringstream ss(stage_list);
            std::string name;
            while (std::getline(ss, name, ',')) {
                const auto s = parse_stage(name);
                if (!s) throw ValidationError("unknown stage: " + name);
                stages.push_back(*s);
            }
        }
        exit_code = run_stages(run_common, stages, false);
    });

    // pool
    Common pool_common;
    auto* pool = app.add_subcommand("pool", "build the style pool (stage)");
    add_common(pool, pool_common);
    pool->require_subcommand(0, 2);
    std::string src_dir, out_dir, source = "wikiart";
    int min_side = kDefaultMinSide, resolution = kPoolResolution;
    bool no_classify = false;
    auto* ingest = pool->add_subcommand("ingest", "ingest one directory of real images (mock judge)");
    ingest->add_option("--src", src_dir)->required();
    ingest->add_option("--out", out_dir)->required();
    ingest->add_option("--source", source);
    ingest->add_option("--min-side", min_side);
    ingest->add_option("--resolution", resolution);
    ingest->add_flag("--no-classify", no_classify);
    ingest->callback([&] {
        IngestOptions o;
        o.min_side = min_side;
        o.resolution = resolution;
        o.classify = !no_classify;
        const auto src = parse_image_source(source);
        if (!src) throw ValidationError("unknown source: " + source);
        o.source = *src;
        JudgeClient judge(std::make_shared<MockJudge>(), PromptLibrary::load(default_data_dir() / "prompts"));
        auto res = ingest_real_pool(src_dir, out_dir, &judge, o);
        write_image_manifest(fs::path(out_dir) / "pool.manifest.jsonl", res.records);
        res.quarantine.write(fs::path(out_dir) / "quarantine.jsonl");
        std::cout << json(res.report).dump(2) << '\n';
    });
    auto* synth = pool->add_subcommand("synth", "run the pool stage from --config");
    synth->callback([&] { exit_code = run_stages(pool_common, {Stage::Pool}, true); });
    pool->callback([&] {
        if (pool->get_subcommands().empty()) exit_code = run_stages(pool_common, {Stage::Pool}, true);
    });

    // single-stage commands driven by the config
    Common stage_common[2];
    const std::pair<const char*, Stage> simple[] = {{"prompts", Stage::Prompts}, {"destylize", Stage::Destylize}};
    for (std::size_t i = 0; i < 2; ++i) {
        auto* sc = app.add_subcommand(simple[i].first, std::string("run the ") + simple[i].first + " stage");
        add_common(sc, stage_common[i]);
        const Stage st = simple[i].second;
        sc->callback([&, i, st] { exit_code = run_stages(stage_common[i], {st}, true); });
    }

    // filter
    Common filter_common;
    std::string pairs_file, verdicts_out, filter_pools, judge_fixtures;
    GateThresholds th;
    auto* filter = app.add_subcommand("filter", "two-stage content/style gate over destylized pairs");
    add_common(filter, filter_common);
    filter->add_option("--pairs", pairs_file, "pairs.manifest.jsonl");
    filter->add_option("--out", verdicts_out, "verdicts output (jsonl)");
    filter->add_option("--pools", filter_pools, "directory holding styles/desty manifests (default: next to --pairs)");
    filter->add_option("--fixtures", judge_fixtures, "mock judge fixture file");
    filter->add_option("--content-threshold", th.content)->check(CLI::Range(0, 5));
    filter->add_option("--style-threshold", th.style)->check(CLI::Range(0, 5));
    filter->callback([&] {
        if (!filter_common.config.empty()) {
            exit_code = run_stages(filter_common, {Stage::Filter}, true);
            return;
        }
        if (pairs_file.empty() || verdicts_out.empty())
            throw ValidationError("filter needs --config or both --pairs and --out");
        const fs::path pools = filter_pools.empty() ? fs::path(pairs_file).parent_path() : fs::path(filter_pools);
        const auto refs = resolve_pairs(read_pairs(pairs_file), read_image_manifest(pools / "styles.manifest.jsonl"),
                                        read_image_manifest(pools / "desty.manifest.jsonl"));
        std::shared_ptr<JudgeBackend> backend = judge_fixtures.empty()
                                                    ? std::make_shared<MockJudge>()
                                                    : MockJudge::from_fixture_file(judge_fixtures);
        JudgeClient judge(backend, PromptLibrary::load(default_data_dir() / "prompts"));
        auto res = filter_pairs(refs, judge, th);
        write_verdicts(verdicts_out, res.verdicts);
        res.quarantine.write(fs::path(verdicts_out).replace_extension(".quarantine.jsonl"));
        const auto accepted = std::count_if(res.verdicts.begin(), res.verdicts.end(), [](const auto& v) { return v.accepted; });
        std::cout << json{{"pairs", refs.size()}, {"verdicts", res.verdicts.size()}, {"accepted", accepted}}.dump(2)
                  << '\n';
    });

    // assemble
    Common asm_common;
    std::string verdicts_file, pools_dir, triplets_out;
    std::size_t dim = 64;
    std::uint64_t embed_seed = 0;
    auto* assemble = app.add_subcommand("assemble", "build triplets from accepted verdicts");
    add_common(assemble, asm_common);
    assemble->add_option("--verdicts", verdicts_file);
    assemble->add_option("--pools", pools_dir, "directory holding styles.manifest.jsonl");
    assemble->add_option("--out", triplets_out);
    assemble->add_option("--dim", dim);
    assemble->add_option("--embed-seed", embed_seed);
    assemble->callback([&] {
        if (!asm_common.config.empty()) {
            exit_code = run_stages(asm_common, {Stage::Assemble}, true);
            return;
        }
        if (verdicts_file.empty() || pools_dir.empty() || triplets_out.empty())
            throw ValidationError("assemble needs --config or all of --verdicts, --pools, --out");
        const ProjectionEmbedder csd(EmbedRole::Style, dim, embed_seed);
        auto res = assemble_triplets(read_verdicts(verdicts_file),
                                     read_image_manifest(fs::path(pools_dir) / "styles.manifest.jsonl"), csd);
        write_triplets(triplets_out, res.triplets);
        std::cout << json{{"triplets", res.triplets.size()},
                          {"per_category", res.per_category},
                          {"drop_reasons", res.drop_reasons}}
                         .dump(2)
                  << '\n';
    });

    // trainset
    Common ts_common;
    auto* trainset = app.add_subcommand("trainset", "build the stylized-content-caption DST training set");
    add_common(trainset, ts_common);
    trainset->callback([&] { std::cout << run_trainset(load(ts_common)).dump(2) << '\n'; });

    // train
    Common train_common;
    auto* train = app.add_subcommand("train", "train a toy denoiser");
    train->require_subcommand(1);
    auto* train_dst = train->add_subcommand("dst", "full fine-tune on the DST training set");
    auto* train_o2 = train->add_subcommand("o2", "LoRA fine-tune on the triplets (train stage)");
    add_common(train_dst, train_common);
    add_common(train_o2, train_common);
    train_dst->callback([&] { std::cout << run_train_dst(load(train_common)).dump(2) << '\n'; });
    train_o2->callback([&] { exit_code = run_stages(train_common, {Stage::Train}, true); });

    // stylize
    std::string content_img, style_img, out_img, method = "stub", checkpoint;
    std::uint64_t seed = 0;
    int work_side = 32, steps = 8;
    auto* stylize = app.add_subcommand("stylize", "stylize one content image with one style reference");
    stylize->add_option("--content", content_img)->required();
    stylize->add_option("--style,--ref", style_img)->required();
    stylize->add_option("--out", out_img)->required();
    stylize->add_option("--method", method);
    stylize->add_option("--checkpoint", checkpoint);
    stylize->add_option("--seed", seed);
    stylize->add_option("--work-side", work_side);
    stylize->add_option("--steps", steps);
    stylize->callback([&] {
        const auto content = load_image(content_img);
        const auto style = load_image(style_img);
        if (!content || !style) throw ValidationError("cannot decode input image");
        const auto backend = make_method(method, checkpoint, work_side, steps);
        save_png(backend->stylize(*content, *style, seed), out_img);
    });

    // eval
    Common eval_common;
    std::string spec_file, eval_method, eval_out = "eval", eval_ckpt;
    auto* eval = app.add_subcommand("eval", "run the stylization benchmark");
    add_common(eval, eval_common);
    eval->add_option("--spec", spec_file);
    eval->add_option("--method", eval_method);
    eval->add_option("--out", eval_out);
    eval->add_option("--checkpoint", eval_ckpt);
    eval->callback([&] {
        if (!eval_common.config.empty()) {
            exit_code = run_stages(eval_common, {Stage::Eval}, true);
            return;
        }
        if (spec_file.empty()) throw ValidationError("eval needs --config or --spec");
        const auto spec = load_benchmark_spec(spec_file);
        if (!spec.contents_manifest || !spec.styles_manifest)
            throw ValidationError("spec must name contents_manifest and styles_manifest");
        const auto contents = read_image_manifest(*spec.contents_manifest);
        const auto styles = read_image_manifest(*spec.styles_manifest);
        std::vector<std::string> methods = spec.methods;
        if (!eval_method.empty()) methods = {eval_method};
        if (methods.empty()) methods = {"stub"};

        const ProjectionEmbedder dino(EmbedRole::Structure), clip(EmbedRole::Semantic), csd(EmbedRole::Style);
        const RandomFeatureStack feats;
        JudgeClient judge(std::make_shared<MockJudge>(), PromptLibrary::load(default_data_dir() / "prompts"),
                          JudgeClientOptions{3, 4, fs::path(eval_out) / "cache" / "judge"});
        CellCache cache(fs::path(eval_out) / "cache" / "cells");
        std::vector<MetricReport> all;
        std::vector<MetricAggregate> aggs;
        for (const auto& name : methods) {
            const auto backend = make_method(name, eval_ckpt, 32, 8);
            BenchmarkOptions o;
            o.out_dir = eval_out;
            o.seed = eval_common.seed.value_or(0);
            o.cache = &cache;
            auto res = run_benchmark(spec, contents, styles, *backend, {&dino, &clip, &csd, &feats, &judge}, o);
            for (auto& r : res.reports) r.method = name;
            aggs.push_back(aggregate(name, res.reports));
            all.insert(all.end(), res.reports.begin(), res.reports.end());
        }
        write_reports(fs::path(eval_out) / "reports.jsonl", all);
        std::ofstream(fs::path(eval_out) / "table.md") << render_table(aggs);
        std::cout << render_table(aggs);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const ValidationError& e) {
        std::cerr << "forge: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "forge: " << e.what() << '\n';
        return 1;
    }
    return exit_code;
}
