#include <doctest.h>

#include <set>

#include "forge/common/digest.hpp"
#include "forge/common/errors.hpp"
#include "forge/dataset.hpp"
#include "forge/embedding.hpp"
#include "support.hpp"

using namespace forge;
using forge::testing::TempDir;
using forge::testing::pattern_image;
using forge::testing::write_record;

namespace {

std::vector<ImageRecord> make_records(const std::filesystem::path& dir, const std::string& prefix, int n,
                                      std::uint64_t seed, std::optional<std::string> category = std::nullopt) {
    std::vector<ImageRecord> out;
    for (int i = 0; i < n; ++i)
        out.push_back(write_record(dir, prefix + std::to_string(i), pattern_image(32, 32, seed + i), category));
    return out;
}

std::vector<PromptRecord> prompts_for(const std::vector<ImageRecord>& styles) {
    std::vector<PromptRecord> out;
    for (const auto& s : styles) out.push_back({s.id, "a quiet harbor with boats " + s.id});
    return out;
}

FilterVerdict verdict(const std::string& style_id, bool accepted) {
    FilterVerdict v;
    v.pair_id = "pair-" + style_id;
    v.style_id = style_id;
    v.desty_id = "desty-" + style_id;
    v.content_score = accepted ? 5 : 2;
    if (accepted) {
        v.style_score = 5;
        v.stage_reached = StageReached::Both;
    }
    v.accepted = accepted;
    return v;
}

} // namespace

TEST_CASE("three contents with two stylizers give six samples") {
    TempDir dir("ds");
    const auto contents = make_records(dir / "c", "content", 3, 1);
    const auto styles = make_records(dir / "s", "style", 4, 50);
    StubStylizer a(0, StylizerKind::Strotss), b(1, StylizerKind::Csgo);
    JudgeClient captioner(std::make_shared<MockJudge>(), forge::testing::bundled_prompts());
    const auto res = build_dst_trainset(contents, styles, {&a, &b}, captioner, {.refs_per_content = 1, .out_dir = dir / "out"});
    REQUIRE(res.samples.size() == 6);
    CHECK(res.stylized.size() == 6);
    std::set<std::string> ids;
    std::map<StylizerKind, int> per_kind;
    for (const auto& s : res.samples) {
        CHECK_FALSE(s.caption.empty());
        ids.insert(s.stylized_id);
        ++per_kind[s.stylizer];
    }
    CHECK(ids.size() == 6);
    CHECK(per_kind[StylizerKind::Strotss] == 3);
    CHECK(per_kind[StylizerKind::Csgo] == 3);
    for (const auto& r : res.stylized) CHECK(std::filesystem::exists(r.path));
}

TEST_CASE("each content is captioned once and refs are drawn without replacement") {
    TempDir dir("ds");
    const auto contents = make_records(dir / "c", "content", 2, 1);
    const auto styles = make_records(dir / "s", "style", 5, 50);
    StubStylizer a(0);
    auto mock = std::make_shared<MockJudge>();
    JudgeClient captioner(mock, forge::testing::bundled_prompts());
    const auto res = build_dst_trainset(contents, styles, {&a}, captioner, {.refs_per_content = 3, .out_dir = dir / "out"});
    CHECK(res.samples.size() == 6);
    CHECK(mock->calls(templates::kCaptionContent) == 2);
    std::map<std::string, std::set<std::string>> refs;
    for (const auto& s : res.samples) refs[s.content_id].insert(s.style_ref_id);
    for (const auto& [c, r] : refs) CHECK(r.size() == 3);
    CHECK_THROWS_AS(build_dst_trainset(contents, styles, {&a}, captioner, {.refs_per_content = 6, .out_dir = dir / "o2"}),
                    ValidationError);
}

TEST_CASE("failed captions drop that content only") {
    TempDir dir("ds");
    const auto contents = make_records(dir / "c", "content", 2, 1);
    const auto styles = make_records(dir / "s", "style", 2, 50);
    auto mock = std::make_shared<MockJudge>();
    mock->add_fixture({templates::kCaptionContent, {contents[0].content_hash}, {}, true});
    JudgeClient captioner(mock, forge::testing::bundled_prompts());
    StubStylizer a(0);
    const auto res = build_dst_trainset(contents, styles, {&a}, captioner, {.out_dir = dir / "out"});
    REQUIRE(res.samples.size() == 1);
    CHECK(res.samples[0].content_id == contents[1].id);
    CHECK(res.quarantine.contains(contents[0].id));
}

TEST_CASE("trainset manifest round trip") {
    TempDir dir("ds");
    std::vector<DstTrainSample> s{{"dst-b", "c1", "a dog", StylizerKind::StyleId, "s1"},
                                  {"dst-a", "c0", "a cat", StylizerKind::AttentionDistillation, "s0"}};
    write_trainset(dir / "t.jsonl", s);
    const auto back = read_trainset(dir / "t.jsonl");
    REQUIRE(back.size() == 2);
    CHECK(back[0] == s[1]);
    CHECK(back[1] == s[0]);
}

TEST_CASE("five styles give five resolvable pairs") {
    TempDir dir("ds");
    const auto styles = make_records(dir / "s", "style", 5, 1, "cyberpunk");
    StubDestylizer desty;
    const auto res = run_destylization(styles, desty, prompts_for(styles), {.seed = 0, .out_dir = dir / "d"});
    CHECK(res.pairs.size() == 5);
    CHECK(res.desty.size() == 5);
    CHECK(res.quarantine.size() == 0);
    const auto refs = resolve_pairs(res.pairs, styles, res.desty);
    CHECK(refs.size() == 5);
    for (const auto& r : refs) {
        CHECK(r.desty.source == ImageSource::Destylized);
        CHECK(load_image(r.desty.path).has_value());
    }
}

TEST_CASE("missing prompt quarantines that style only") {
    TempDir dir("ds");
    const auto styles = make_records(dir / "s", "style", 3, 1);
    auto prompts = prompts_for(styles);
    prompts.erase(prompts.begin() + 1);
    StubDestylizer desty;
    const auto res = run_destylization(styles, desty, prompts, {.out_dir = dir / "d"});
    CHECK(res.pairs.size() == 2);
    CHECK(res.quarantine.contains(styles[1].id));
    CHECK(res.quarantine.entries()[0].reason == "missing content prompt");
}

TEST_CASE("destylized images are byte-identical across runs") {
    TempDir a("ds"), b("ds");
    const auto styles = make_records(a / "s", "style", 3, 1);
    StubDestylizer desty;
    const auto ra = run_destylization(styles, desty, prompts_for(styles), {.seed = 4, .out_dir = a / "d"});
    const auto rb = run_destylization(styles, desty, prompts_for(styles), {.seed = 4, .out_dir = b / "d"});
    REQUIRE(ra.desty.size() == rb.desty.size());
    for (std::size_t i = 0; i < ra.desty.size(); ++i) {
        CHECK(ra.desty[i].content_hash == rb.desty[i].content_hash);
        CHECK(sha256_file(ra.desty[i].path) == sha256_file(rb.desty[i].path));
    }
    write_pairs(a / "p1.jsonl", ra.pairs);
    write_pairs(b / "p2.jsonl", rb.pairs);
    CHECK(sha256_file(a / "p1.jsonl") == sha256_file(b / "p2.jsonl"));
    CHECK(read_pairs(a / "p1.jsonl") == ra.pairs);
}

TEST_CASE("unresolved pair ids are rejected") {
    TempDir dir("ds");
    const auto styles = make_records(dir / "s", "style", 1, 1);
    CHECK_THROWS_AS(resolve_pairs({{"pair-x", "nope", "desty-x"}}, styles, {}), ValidationError);
}

TEST_CASE("prompt generation and round trip") {
    TempDir dir("ds");
    const auto styles = make_records(dir / "s", "style", 3, 1);
    auto mock = std::make_shared<MockJudge>();
    mock->add_fixture({templates::kImagineDestyled, {styles[0].content_hash}, {"Caption: a stone bridge over a river at dusk"}, false});
    mock->add_fixture({templates::kImagineDestyled, {styles[2].content_hash}, {}, true});
    JudgeClient judge(mock, forge::testing::bundled_prompts());
    const auto res = generate_destyle_prompts(styles, judge);
    REQUIRE(res.prompts.size() == 2);
    CHECK(res.prompts[0] == PromptRecord{styles[0].id, "a stone bridge over a river at dusk"});
    CHECK(res.quarantine.contains(styles[2].id));
    write_prompts(dir / "p.jsonl", res.prompts);
    CHECK(read_prompts(dir / "p.jsonl") == res.prompts);
}

TEST_CASE("reference selection examples") {
    std::vector<EmbeddedImage> pool{{"style", {1, 0}}, {"a", {0.9, 0.1}}, {"b", {0, 1}}};
    CHECK(select_reference("style", pool) == "a");
    pool.push_back({"z", {1, 0}});
    CHECK(select_reference("style", pool) == "z");
    std::vector<EmbeddedImage> tie{{"style", {1, 0}}, {"q", {1, 1}}, {"p", {1, -1}}, {"r", {2, 2}}};
    CHECK(select_reference("style", tie) == "p");
}

TEST_CASE("reference selection error paths") {
    CHECK_THROWS_AS(select_reference("s", {{"s", {1, 0}}}), NoReference);
    CHECK_THROWS_AS(select_reference("missing", {{"s", {1, 0}}, {"t", {0, 1}}}), ValidationError);
    // Zero-norm candidates score 0.
    CHECK(select_reference("s", {{"s", {1, 0}}, {"a", {0, 0}}, {"b", {-1, 0.1}}}) == "a");
}

TEST_CASE("reference selection agrees with the brute-force oracle") {
    SplitMix64 rng(77);
    for (int trial = 0; trial < 200; ++trial) {
        const auto n = 2 + rng.below(20);
        std::vector<EmbeddedImage> pool;
        std::vector<std::pair<std::string, std::vector<double>>> raw;
        for (std::uint64_t i = 0; i < n; ++i) {
            std::vector<double> e(3);
            for (auto& x : e) x = static_cast<double>(static_cast<int>(rng.below(5)) - 2);
            const std::string id = "id" + std::to_string(rng.below(1000)) + "-" + std::to_string(i);
            pool.push_back({id, e});
            raw.emplace_back(id, e);
        }
        const auto& style = pool[rng.below(n)].id;
        CHECK(select_reference(style, pool) == forge::testing::brute_force_reference(style, raw));
    }
}

TEST_CASE("three accepted and two rejected verdicts give three triplets") {
    TempDir dir("ds");
    auto styles = make_records(dir / "s", "style", 5, 1, "cyberpunk");
    std::vector<FilterVerdict> verdicts;
    for (int i = 0; i < 5; ++i) verdicts.push_back(verdict(styles[i].id, i < 3));
    const ProjectionEmbedder emb(EmbedRole::Style);
    const auto res = assemble_triplets(verdicts, styles, emb);
    REQUIRE(res.triplets.size() == 3);
    CHECK(res.drops.empty());
    CHECK(res.per_category.at("cyberpunk") == 3);
    for (const auto& t : res.triplets) {
        CHECK(t.reference_id != t.style_id);
        CHECK(t.category == "cyberpunk");
        CHECK(t.desty_id == "desty-" + t.style_id);
    }
}

TEST_CASE("singleton category drops the verdict with a reason") {
    TempDir dir("ds");
    auto styles = make_records(dir / "s", "style", 2, 1, "cyberpunk");
    styles.push_back(write_record(dir / "s", "lonely", pattern_image(32, 32, 9), "low-poly"));
    styles.push_back(write_record(dir / "s", "nocat", pattern_image(32, 32, 10)));
    const std::vector<FilterVerdict> verdicts{verdict(styles[0].id, true), verdict("lonely", true), verdict("nocat", true),
                                              verdict("ghost", true)};
    const auto res = assemble_triplets(verdicts, styles, ProjectionEmbedder(EmbedRole::Style));
    CHECK(res.triplets.size() == 1);
    CHECK(res.drop_reasons.at("no-reference") == 1);
    CHECK(res.drop_reasons.at("no-category") == 1);
    CHECK(res.drop_reasons.at("unresolved-style") == 1);
}

TEST_CASE("assembled triplets pass the integrity scan and a broken one does not") {
    TempDir dir("ds");
    const auto styles = make_records(dir / "s", "style", 4, 1, "line-art");
    StubDestylizer d;
    const auto desty = run_destylization(styles, d, prompts_for(styles), {.out_dir = dir / "d"});
    std::vector<FilterVerdict> verdicts;
    for (const auto& p : desty.pairs) {
        auto v = verdict(p.style_id, true);
        v.pair_id = p.pair_id;
        v.desty_id = p.desty_id;
        verdicts.push_back(v);
    }
    const auto res = assemble_triplets(verdicts, styles, ProjectionEmbedder(EmbedRole::Style));
    REQUIRE(res.triplets.size() == 4);
    QuarantineLog q;
    CHECK(check_triplets(res.triplets, verdicts, styles, desty.desty, q).empty());

    write_triplets(dir / "t.jsonl", res.triplets);
    CHECK(read_triplets(dir / "t.jsonl") == res.triplets);

    auto broken = res.triplets;
    broken[0].reference_id = broken[0].style_id;
    broken[1].desty_id = "nope";
    q.add(broken[2].style_id, "pool", "test");
    CHECK(check_triplets(broken, verdicts, styles, desty.desty, q).size() >= 3);
}

TEST_CASE("category comes from the style label") {
    ImageRecord r;
    CHECK_FALSE(category_of(r).has_value());
    r.style_category = "Impressionism";
    CHECK(category_of(r) == std::optional<std::string>("Impressionism"));
}
