#include <doctest.h>

#include <algorithm>
#include <fstream>

#include "forge/common/errors.hpp"
#include "forge/pipeline.hpp"
#include "support.hpp"

using namespace forge;
using forge::testing::TempDir;
namespace fs = std::filesystem;

namespace {

/// Small real-source corpus plus a config document pointing at it.
struct Fixture {
    TempDir dir{"pipe"};

    explicit Fixture(int n_images = 6) {
        for (int i = 0; i < n_images; ++i) {
            const auto p = dir / "art" / (i % 2 ? "Cubism" : "Baroque") / ("img" + std::to_string(i) + ".png");
            fs::create_directories(p.parent_path());
            save_png(forge::testing::pattern_image(64, 64, 10 + i), p);
        }
        fs::create_directories(dir / "photos");
        for (int i = 0; i < 2; ++i)
            save_png(forge::testing::pattern_image(64, 64, 90 + i), dir / "photos" / ("p" + std::to_string(i) + ".png"));
    }

    json doc() const {
        return {{"paths", {{"work_dir", "run"}}},
                {"seed", 3},
                {"pool",
                 {{"real_sources", json::array({{{"dir", "art"}, {"source", "wikiart"}}})},
                  {"content_dir", "photos"},
                  {"resolution", 32},
                  {"min_side", 32}}},
                {"train", {{"o2", {{"steps", 4}, {"batch_size", 2}}}}},
                {"eval", {{"max_contents", 2}, {"max_styles", 2}}}};
    }

    PipelineConfig config(const json& d) const { return parse_config(d, dir.path()); }
    PipelineConfig config() const { return config(doc()); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace

TEST_CASE("minimal config fills the documented defaults") {
    Fixture fx;
    const auto cfg = fx.config({{"pool", {{"synthetic", {{"per_style", 1}}}}}});
    CHECK(cfg.dst_train.learning_rate == 1e-4);
    CHECK(cfg.o2_train.learning_rate == 1e-4);
    CHECK(cfg.dst_train.batch_size == 8);
    CHECK(cfg.o2_train.batch_size == 48);
    CHECK(cfg.content_threshold == 4);
    CHECK(cfg.style_threshold == 4);
    CHECK(cfg.resolution == 1024);
    CHECK(cfg.work_dir == fx.dir / "run");
    CHECK(cfg.manifests_dir == fx.dir / "run" / "manifests");
    const json shown = cfg;
    CHECK(shown["thresholds"]["content"] == 4);
    CHECK(shown["train"]["dst"]["learning_rate"] == 1e-4);
    CHECK(shown["pool"]["resolution"] == 1024);
    CHECK(shown["judge"]["api_key_env"] == "FORGE_JUDGE_API_KEY");
}

TEST_CASE("config validation errors") {
    Fixture fx;
    auto d = fx.doc();
    d["thresholds"] = {{"content", 6}};
    CHECK_THROWS_AS(fx.config(d), ValidationError);

    d = fx.doc();
    d["paths"]["eval_dir"] = "run/out";
    d["paths"]["cache_dir"] = "run/out";
    CHECK_THROWS_AS(fx.config(d), ValidationError);

    d = fx.doc();
    d["paths"]["pool_dir"] = "art";
    CHECK_THROWS_AS(fx.config(d), ValidationError);

    d = fx.doc();
    d["pool"]["bogus"] = 1;
    CHECK_THROWS_AS(fx.config(d), ValidationError);

    d = fx.doc();
    d["train"]["o2"]["learning_rat"] = 1e-4;
    CHECK_THROWS_AS(fx.config(d), ValidationError);

    d = fx.doc();
    d["pool"]["real_sources"][0]["dir"] = "nowhere";
    CHECK_THROWS_AS(fx.config(d), ValidationError);

    d = fx.doc();
    d["pool"].erase("real_sources");
    CHECK_THROWS_AS(fx.config(d), ValidationError);

    d = fx.doc();
    d["eval"]["method"] = "unknown";
    CHECK_THROWS_AS(fx.config(d), ValidationError);

    CHECK_THROWS_AS(validate_config(fx.dir / "missing.json"), ValidationError);
}

TEST_CASE("config file is resolved against its own directory") {
    Fixture fx;
    write_json_file(fx.dir / "cfg.json", fx.doc());
    const auto cfg = validate_config(fx.dir / "cfg.json");
    REQUIRE(cfg.real_sources.size() == 1);
    CHECK(cfg.real_sources[0].dir == fx.dir / "art");
    CHECK(cfg.config_dir == fx.dir.path());
}

TEST_CASE("fresh run of pool and prompts marks both done") {
    Fixture fx;
    const auto cfg = fx.config();
    const auto ledger = run_pipeline(cfg, {Stage::Pool, Stage::Prompts});
    CHECK(ledger.done(Stage::Pool));
    CHECK(ledger.done(Stage::Prompts));
    CHECK_FALSE(ledger.done(Stage::Destylize));
    CHECK(ledger.executed == std::vector<Stage>{Stage::Pool, Stage::Prompts});
    CHECK(ledger.stages.at(Stage::Pool).output_digest == output_digest(cfg, Stage::Pool));
    CHECK(fs::exists(ledger_path(cfg)));
    const auto reread = read_ledger(ledger_path(cfg));
    CHECK(reread.stages.at(Stage::Prompts).output_digest == ledger.stages.at(Stage::Prompts).output_digest);
}

TEST_CASE("unchanged rerun with resume does no work") {
    Fixture fx;
    const auto cfg = fx.config();
    const auto first = run_pipeline(cfg, {Stage::Pool, Stage::Prompts});
    const auto second = run_pipeline(cfg, {Stage::Pool, Stage::Prompts}, {.resume = true});
    CHECK(second.executed.empty());
    for (auto s : {Stage::Pool, Stage::Prompts}) {
        CHECK(second.stages.at(s).input_digest == first.stages.at(s).input_digest);
        CHECK(second.stages.at(s).output_digest == first.stages.at(s).output_digest);
    }
}

TEST_CASE("corrupt manifest re-queues its stage only") {
    Fixture fx;
    const auto cfg = fx.config();
    const auto first = run_pipeline(cfg, {Stage::Pool, Stage::Prompts});
    const auto manifest = cfg.manifests_dir / "prompts.manifest.jsonl";
    REQUIRE(fs::exists(manifest));
    const auto good = slurp(manifest);
    std::ofstream(manifest, std::ios::app) << "{\"style_id\": \"bogus\", \"prompt\": \"x\"}\n";

    const auto second = run_pipeline(cfg, {Stage::Pool, Stage::Prompts}, {.resume = true});
    CHECK(second.executed == std::vector<Stage>{Stage::Prompts});
    CHECK(second.done(Stage::Prompts));
    CHECK(slurp(manifest) == good);
    CHECK(second.stages.at(Stage::Prompts).output_digest == first.stages.at(Stage::Prompts).output_digest);
}

TEST_CASE("config change invalidates the dependent stages") {
    Fixture fx;
    run_pipeline(fx.config(), {Stage::Pool, Stage::Prompts});
    auto d = fx.doc();
    d["judge"] = {{"max_attempts", 5}};
    const auto again = run_pipeline(fx.config(d), {Stage::Pool, Stage::Prompts}, {.resume = true});
    CHECK(again.done(Stage::Prompts));
    CHECK(std::find(again.executed.begin(), again.executed.end(), Stage::Prompts) != again.executed.end());
}

TEST_CASE("missing dependency fails the stage and blocks dependents, not independents") {
    Fixture fx;
    const auto cfg = fx.config();
    const auto l = run_pipeline(cfg, {Stage::Prompts, Stage::Destylize});
    CHECK(l.stages.at(Stage::Prompts).status == StageStatus::Failed);
    CHECK(l.stages.at(Stage::Destylize).status == StageStatus::Failed);
    CHECK(l.executed.empty());

    run_pipeline(cfg, {Stage::Pool});
    const auto l2 = run_pipeline(cfg, {Stage::Filter, Stage::Prompts}, {.load_ledger = true});
    CHECK(l2.stages.at(Stage::Filter).status == StageStatus::Failed);
    CHECK(l2.done(Stage::Prompts));
}

TEST_CASE("full run stays inside its declared directories and is reproducible") {
    Fixture fx;
    write_json_file(fx.dir / "judge.json",
                    {{"fixtures", json::array({{{"template_id", "filter_content_cot"},
                                                {"replies", {"Region: subject | intact | 5\nScore: 5"}}},
                                               {{"template_id", "filter_style_cot"},
                                                {"replies", {"Attribute: palette | removed\nScore: 5"}}}})}});
    auto base = fx.doc();
    base["judge"] = {{"fixtures", "judge.json"}};
    const auto cfg = fx.config(base);
    const auto l = run_pipeline(cfg, std::vector<Stage>(kStages.begin(), kStages.end()));
    for (auto s : kStages) {
        INFO(to_string(s), ": ", l.stages.at(s).message);
        CHECK(l.done(s));
        for (const auto& out : stage_outputs(cfg, s)) CHECK(fs::exists(out));
    }
    for (const auto& e : fs::recursive_directory_iterator(cfg.work_dir)) {
        if (!e.is_regular_file()) continue;
        const auto p = e.path();
        bool inside = p == ledger_path(cfg);
        for (const auto& root : {cfg.pool_dir, cfg.manifests_dir, cfg.cache_dir, cfg.checkpoints_dir, cfg.eval_dir}) {
            const auto rel = p.lexically_relative(root);
            inside = inside || (!rel.empty() && *rel.begin() != "..");
        }
        INFO(p.string());
        CHECK(inside);
    }
    CHECK(slurp(cfg.eval_dir / "table.md").find("| Metrics/Model | stub |") != std::string::npos);

    // Same inputs into a second run directory give identical manifests.
    auto d = base;
    d["paths"]["work_dir"] = "run2";
    const auto cfg2 = fx.config(d);
    run_pipeline(cfg2, std::vector<Stage>(kStages.begin(), kStages.end()));
    for (const char* f : {"styles.manifest.jsonl", "prompts.manifest.jsonl", "desty.manifest.jsonl",
                          "pairs.manifest.jsonl", "verdicts.jsonl", "triplets.manifest.jsonl"}) {
        INFO(f);
        CHECK(slurp(cfg.manifests_dir / f) == slurp(cfg2.manifests_dir / f));
    }
    CHECK(slurp(cfg.eval_dir / "reports.jsonl") == slurp(cfg2.eval_dir / "reports.jsonl"));
}

TEST_CASE("stage names parse and dependencies follow the configuration") {
    for (auto s : kStages) CHECK(parse_stage(to_string(s)) == s);
    CHECK_FALSE(parse_stage("bogus").has_value());
    Fixture fx;
    const auto cfg = fx.config();
    CHECK(dependencies(cfg, Stage::Pool).empty());
    const auto ev = dependencies(cfg, Stage::Eval);
    CHECK(std::find(ev.begin(), ev.end(), Stage::Train) == ev.end());
    auto d = fx.doc();
    d["eval"]["method"] = "omnistyle2";
    const auto ev2 = dependencies(fx.config(d), Stage::Eval);
    CHECK(std::find(ev2.begin(), ev2.end(), Stage::Train) != ev2.end());
}
