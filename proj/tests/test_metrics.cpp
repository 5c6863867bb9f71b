#include <doctest.h>

#include <atomic>
#include <cmath>
#include <set>

#include "forge/common/errors.hpp"
#include "forge/embedding.hpp"
#include "forge/metrics.hpp"
#include "support.hpp"

using namespace forge;
using forge::testing::TempDir;
using forge::testing::pattern_image;

namespace {

class CountingStylizer : public StylizerBackend {
public:
    std::string id() const override { return inner_.id(); }
    StylizerKind kind() const override { return inner_.kind(); }
    Image stylize(const Image& c, const Image& s, std::uint64_t seed) const override {
        ++calls;
        return inner_.stylize(c, s, seed);
    }
    mutable std::atomic<int> calls{0};

private:
    StubStylizer inner_;
};

struct Desk {
    TempDir dir{"metrics"};
    std::vector<ImageRecord> contents, styles;
    BenchmarkSpec spec;
    ProjectionEmbedder dino{EmbedRole::Structure}, clip{EmbedRole::Semantic}, csd{EmbedRole::Style};
    RandomFeatureStack features;

    Desk(int nc, int ns) {
        for (int i = 0; i < nc; ++i) {
            contents.push_back(forge::testing::write_record(dir / "c", "content" + std::to_string(i), pattern_image(48, 48, i)));
            spec.content_ids.push_back(contents.back().id);
        }
        for (int i = 0; i < ns; ++i) {
            styles.push_back(
                forge::testing::write_record(dir / "s", "style" + std::to_string(i), pattern_image(48, 48, 100 + i), "cyberpunk"));
            spec.style_ids.push_back(styles.back().id);
        }
        spec.methods = {"stub"};
    }
    MetricBackends backends(JudgeClient* judge) { return {&dino, &clip, &csd, &features, judge}; }
};

FeatureMap fm(std::size_t c, std::size_t l, std::vector<double> v) { return {c, l, std::move(v)}; }

} // namespace

TEST_CASE("hand-computed 2x2 Gram case is 9/32") {
    const std::vector<FeatureMap> a{fm(2, 2, {1, 0, 0, 1})}, b{fm(2, 2, {2, 0, 0, 2})};
    CHECK(gram_style_loss(a, b) == 9.0 / 32.0);
    CHECK(forge::testing::gram_loss_oracle(a, b) == 9.0 / 32.0);
}

TEST_CASE("Gram loss properties on random stacks") {
    SplitMix64 rng(1);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<FeatureMap> a, b, pa;
        for (std::size_t k = 0; k < 3; ++k) {
            const std::size_t c = 2 + rng.below(6), l = 3 + rng.below(20);
            a.push_back(forge::testing::random_feature_map(c, l, rng));
            b.push_back(forge::testing::random_feature_map(c, l, rng));
            pa.push_back(forge::testing::permute_locations(a.back(), rng));
        }
        CHECK(gram_style_loss(a, a) == 0.0);
        const double ab = gram_style_loss(a, b);
        CHECK(ab > 0.0);
        CHECK(ab == doctest::Approx(gram_style_loss(b, a)).epsilon(1e-14));
        CHECK(gram_style_loss(pa, b) == doctest::Approx(ab).epsilon(1e-12));
        CHECK(gram_style_loss(a, pa) <= 1e-24);
        CHECK(ab == doctest::Approx(forge::testing::gram_loss_oracle(a, b)).epsilon(1e-12));
    }
}

TEST_CASE("Gram loss shape errors") {
    SplitMix64 rng(2);
    const std::vector<FeatureMap> a{forge::testing::random_feature_map(2, 3, rng)};
    const std::vector<FeatureMap> b{forge::testing::random_feature_map(3, 3, rng)};
    CHECK_THROWS_AS(gram_style_loss(a, b), ValidationError);
    CHECK_THROWS_AS(gram_style_loss(a, {}), ValidationError);
    CHECK_THROWS_AS(gram_style_loss({}, {}), ValidationError);
}

TEST_CASE("image-level style loss through the feature stack") {
    RandomFeatureStack stack;
    const auto a = pattern_image(64, 64, 1), b = pattern_image(64, 64, 2);
    CHECK(gram_style_loss(a, a, stack) == 0.0);
    CHECK(gram_style_loss(a, b, stack) > 0.0);
    CHECK(gram_style_loss(a, b, stack) == doctest::Approx(gram_style_loss(b, a, stack)).epsilon(1e-12));
    const auto f = stack.features(a);
    CHECK(f.size() == 3);
    CHECK(f[0].channels == 8);
    CHECK(f[2].channels == 32);
}

TEST_CASE("cosine examples") {
    const std::vector<double> x{1, 0}, y{0, 1}, z{-1, 0};
    CHECK(cosine(x, x) == 1.0);
    CHECK(cosine(x, y) == 0.0);
    CHECK(cosine(x, z) == -1.0);
    CHECK_THROWS_AS(cosine(x, std::vector<double>{1, 0, 0}), ValidationError);
    CHECK_THROWS_AS(cosine(x, std::vector<double>{0, 0}), NumericError);
}

TEST_CASE("cosine is invariant to positive scaling") {
    SplitMix64 rng(5);
    for (int i = 0; i < 100; ++i) {
        std::vector<double> a(16), b(16), sa(16);
        const double k = 0.01 + 100 * rng.uniform();
        for (std::size_t j = 0; j < 16; ++j) {
            a[j] = rng.normal();
            b[j] = rng.normal();
            sa[j] = k * a[j];
        }
        CHECK(cosine(sa, b) == doctest::Approx(cosine(a, b)).epsilon(1e-12));
    }
}

TEST_CASE("embedding self-cosine and table stubs") {
    const auto img = pattern_image(40, 40, 3);
    for (auto role : {EmbedRole::Structure, EmbedRole::Semantic, EmbedRole::Style}) {
        ProjectionEmbedder e(role);
        CHECK(embed_cosine(img, img, e) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(e.embed_image(img).size() == 64);
    }
    TableEmbedder t(2);
    const auto a = pattern_image(8, 8, 1), b = pattern_image(8, 8, 2), c = pattern_image(8, 8, 3);
    t.set(content_hash(a), {1, 0});
    t.set(content_hash(b), {0, 1});
    t.set(content_hash(c), {-1, 0});
    t.set_text("a cat", {1, 0});
    CHECK(embed_cosine(a, b, t) == 0.0);
    CHECK(embed_cosine(a, c, t) == -1.0);
    CHECK(embed_cosine(a, std::string("a cat"), t) == 1.0);
    CHECK_THROWS_AS(t.embed_image(pattern_image(8, 8, 4)), ValidationError);
    CHECK_THROWS_AS(ProjectionEmbedder(EmbedRole::Style).embed_text("x"), ValidationError);
}

TEST_CASE("judge scores pass through and outages give nulls") {
    TempDir dir("metrics");
    const auto s = forge::testing::write_record(dir.path(), "s", pattern_image(16, 16, 1));
    const auto c = forge::testing::write_record(dir.path(), "c", pattern_image(16, 16, 2));
    const auto r = forge::testing::write_record(dir.path(), "r", pattern_image(16, 16, 3));
    {
        auto mock = std::make_shared<MockJudge>();
        for (auto t : {templates::kEvalContent, templates::kEvalStyle, templates::kEvalAesthetic})
            mock->add_fixture({t, {}, {"Score: 8.7"}, false});
        JudgeClient judge(mock, forge::testing::bundled_prompts());
        const auto js = judge_scores(ref_of(s), ref_of(c), ref_of(r), judge);
        CHECK(js.content == 8.7);
        CHECK(js.style == 8.7);
        CHECK(js.aesthetic == 8.7);
    }
    {
        auto mock = std::make_shared<MockJudge>();
        for (auto t : {templates::kEvalContent, templates::kEvalStyle, templates::kEvalAesthetic})
            mock->add_fixture({t, {}, {}, true});
        JudgeClient judge(mock, forge::testing::bundled_prompts());
        QuarantineLog log;
        const auto js = judge_scores(ref_of(s), ref_of(c), ref_of(r), judge, &log, "cell-1");
        CHECK_FALSE(js.content.has_value());
        CHECK_FALSE(js.style.has_value());
        CHECK_FALSE(js.aesthetic.has_value());
        CHECK(log.contains("cell-1"));
        CHECK(log.size() == 3);
    }
}

TEST_CASE("55 contents by 56 styles enumerate 3080 jobs") {
    BenchmarkSpec spec;
    for (int i = 0; i < 55; ++i) spec.content_ids.push_back("c" + std::to_string(i));
    for (int i = 0; i < 56; ++i) spec.style_ids.push_back("s" + std::to_string(i));
    spec.methods = {"m"};
    CHECK(spec.job_count() == 3080);
    const auto jobs = enumerate_jobs(spec);
    CHECK(jobs.size() == 3080);
    std::set<std::pair<std::string, std::string>> uniq(jobs.begin(), jobs.end());
    CHECK(uniq.size() == 3080);
    CHECK(jobs.front() == std::make_pair(std::string("c0"), std::string("s0")));
}

TEST_CASE("benchmark spec round trip resolves manifest paths") {
    TempDir dir("metrics");
    BenchmarkSpec spec{{"c0"}, {"s0", "s1"}, {"stub"}, std::filesystem::path("contents.jsonl"), std::nullopt};
    write_json_file(dir / "spec.json", json(spec));
    const auto back = load_benchmark_spec(dir / "spec.json");
    CHECK(back.style_ids == spec.style_ids);
    REQUIRE(back.contents_manifest.has_value());
    CHECK(*back.contents_manifest == dir / "contents.jsonl");
}

TEST_CASE("2x3 desk run: six reports and aggregates equal to cell means") {
    Desk desk(2, 3);
    auto mock = std::make_shared<MockJudge>();
    JudgeClient judge(mock, forge::testing::bundled_prompts());
    StubStylizer method;
    const auto res = run_benchmark(desk.spec, desk.contents, desk.styles, method, desk.backends(&judge),
                                   {.out_dir = desk.dir / "out"});
    REQUIRE(res.reports.size() == 6);
    CHECK(res.computed_cells == 6);
    for (const auto& r : res.reports) {
        CHECK(report_violation(r).empty());
        CHECK(r.caption_source.rfind("judge:", 0) == 0);
    }
    for (auto m : kMetrics) {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& r : res.reports)
            if (r[m]) {
                sum += *r[m];
                ++n;
            }
        REQUIRE(n == 6);
        REQUIRE(res.aggregate.means[static_cast<std::size_t>(m)].has_value());
        CHECK(std::abs(*res.aggregate.means[static_cast<std::size_t>(m)] - sum / 6.0) <= 1e-12);
    }
    const auto again = aggregate(method.id(), res.reports);
    CHECK(again.means == res.aggregate.means);
}

TEST_CASE("warm cache reruns make no backend calls and give the same table") {
    Desk desk(2, 3);
    auto mock = std::make_shared<MockJudge>();
    JudgeClient judge(mock, forge::testing::bundled_prompts(), {.cache_dir = desk.dir / "jcache"});
    CountingStylizer method;
    CellCache cache(desk.dir / "cells");
    const auto first = run_benchmark(desk.spec, desk.contents, desk.styles, method, desk.backends(&judge),
                                     {.out_dir = desk.dir / "out", .cache = &cache});
    const int stylize_calls = method.calls.load();
    const auto judge_calls = mock->total_calls();
    CHECK(stylize_calls == 6);

    CellCache cold_from_disk(desk.dir / "cells");
    const auto second = run_benchmark(desk.spec, desk.contents, desk.styles, method, desk.backends(&judge),
                                      {.out_dir = desk.dir / "out", .cache = &cold_from_disk});
    CHECK(method.calls.load() == stylize_calls);
    CHECK(mock->total_calls() == judge_calls);
    CHECK(second.cached_cells == 6);
    CHECK(second.computed_cells == 0);
    CHECK(render_table({second.aggregate}) == render_table({first.aggregate}));
    CHECK(second.reports == first.reports);
}

TEST_CASE("records without a judge fall back to the record prompt for captions") {
    Desk desk(1, 1);
    desk.contents[0].prompt = "a red barn";
    StubStylizer method;
    const auto res = run_benchmark(desk.spec, desk.contents, desk.styles, method, desk.backends(nullptr),
                                   {.out_dir = desk.dir / "out"});
    REQUIRE(res.reports.size() == 1);
    CHECK(res.reports[0].caption == "a red barn");
    CHECK(res.reports[0].caption_source == "record-prompt");
    CHECK_FALSE(res.reports[0][Metric::QwenAesthetic].has_value());
    CHECK(res.reports[0][Metric::Dino].has_value());
}

TEST_CASE("unresolved spec ids are a validation error") {
    Desk desk(1, 1);
    desk.spec.style_ids.push_back("ghost");
    StubStylizer method;
    CHECK_THROWS_AS(run_benchmark(desk.spec, desk.contents, desk.styles, method, desk.backends(nullptr),
                                  {.out_dir = desk.dir / "out"}),
                    ValidationError);
}

TEST_CASE("aggregates skip nulls and count failed cells") {
    MetricReport a, b, c;
    a.method = b.method = c.method = "m";
    a.stylized_hash = b.stylized_hash = "h";
    a[Metric::Dino] = 0.5;
    b[Metric::Dino] = 0.25;
    a[Metric::StyleLoss] = 0.1;
    const auto agg = aggregate("m", {a, b, c});
    CHECK(agg.cells == 3);
    CHECK(agg.failed_cells == 1);
    CHECK(agg.means[0] == 0.375);
    CHECK(agg.counts[0] == 2);
    CHECK(agg.means[static_cast<std::size_t>(Metric::StyleLoss)] == 0.1);
    CHECK_FALSE(agg.means[static_cast<std::size_t>(Metric::Clip)].has_value());
    MetricReport other;
    other.method = "x";
    CHECK(aggregate("m", {a, other}).cells == 1);
}

TEST_CASE("table mirrors the metric rows with one column per method") {
    MetricReport a;
    a.method = "m1";
    a.stylized_hash = "h";
    a[Metric::Csd] = 0.5606;
    a[Metric::StyleLoss] = 0.00001;
    const auto table = render_table({aggregate("m1", {a})});
    CHECK(table.find("| Metrics/Model | m1 |") != std::string::npos);
    for (auto m : kMetrics) CHECK(table.find(std::string(table_label(m))) != std::string::npos);
    CHECK(table.find("0.5606") != std::string::npos);
    CHECK(table.find("1.000e-05") != std::string::npos);
    CHECK(table.find("n/a") != std::string::npos);
    CHECK(table_label(Metric::QwenAesthetic) == "Qwen-Aesthetic-Score ↑");
    CHECK(table_label(Metric::StyleLoss) == "Style Loss ↓");
}

TEST_CASE("reports round trip with null metrics") {
    TempDir dir("metrics");
    MetricReport a;
    a.method = "m";
    a.content_id = "c1";
    a.style_id = "s0";
    a[Metric::Dino] = 0.75;
    a.failures = {"judge: unavailable"};
    MetricReport b = a;
    b.content_id = "c0";
    write_reports(dir / "r.jsonl", {a, b});
    const auto back = read_reports(dir / "r.jsonl");
    REQUIRE(back.size() == 2);
    CHECK(back[0] == b);
    CHECK(back[1] == a);
    CHECK(json(a)["qwen_style"].is_null());
    CHECK(field_name(Metric::Dino) == "dino_score");
}

TEST_CASE("report range invariants") {
    MetricReport r;
    r[Metric::Dino] = 1.5;
    CHECK_FALSE(report_violation(r).empty());
    r[Metric::Dino] = 0.5;
    r[Metric::StyleLoss] = -0.1;
    CHECK_FALSE(report_violation(r).empty());
    r[Metric::StyleLoss] = 0.1;
    r[Metric::QwenAesthetic] = 11;
    CHECK_FALSE(report_violation(r).empty());
}

TEST_CASE("cell key changes with every input") {
    ProjectionEmbedder d(EmbedRole::Structure), c(EmbedRole::Semantic), s(EmbedRole::Style), s2(EmbedRole::Style, 64, 1);
    RandomFeatureStack f;
    MetricBackends b{&d, &c, &s, &f, nullptr};
    MetricBackends b2{&d, &c, &s2, &f, nullptr};
    const auto k = cell_key("m", "ch", "sh", b, 0);
    CHECK(k.size() == 32);
    CHECK(k == cell_key("m", "ch", "sh", b, 0));
    CHECK(k != cell_key("m2", "ch", "sh", b, 0));
    CHECK(k != cell_key("m", "ch2", "sh", b, 0));
    CHECK(k != cell_key("m", "ch", "sh2", b, 0));
    CHECK(k != cell_key("m", "ch", "sh", b2, 0));
    CHECK(k != cell_key("m", "ch", "sh", b, 1));
}
