// Acceptance suite: one PASS/FAIL line per criterion, each with its measured
// value, tolerance and wall time. Exit status is the number of failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "forge/common/digest.hpp"
#include "forge/dataset.hpp"
#include "forge/metrics.hpp"
#include "forge/pipeline.hpp"
#include "support.hpp"

using namespace forge;
using namespace forge::denoiser;
namespace fs = std::filesystem;
namespace ft = forge::testing;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

int g_failures = 0;

void run(const char* name, double time_limit_s, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = time_limit_s <= 0 || secs < time_limit_s;
    const bool pass = o.pass && in_time;
    if (!pass) ++g_failures;
    std::ostringstream limit;
    if (time_limit_s > 0) limit << ", limit " << time_limit_s << " s";
    std::printf("%s  %-26s %s  [%.2f s%s]\n", pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs, limit.str().c_str());
    std::fflush(stdout);
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

// --- 1 ----------------------------------------------------------------------

Outcome gate_truth_table() {
    ft::TempDir dir("acc");
    const auto pair = ft::make_pair(dir.path(), "s", 1);
    int wrong = 0, style_calls_below = 0, cells = 0;
    for (int c = 0; c <= 5; ++c) {
        for (int s = 0; s <= 5; ++s) {
            auto mock = std::make_shared<MockJudge>();
            mock->add_fixture({templates::kFilterContent, {}, {ft::content_reply({{"subject", 5}}, c)}, false});
            mock->add_fixture({templates::kFilterStyle, {}, {ft::style_reply({{"palette", "removed"}}, s)}, false});
            JudgeClient judge(mock, ft::bundled_prompts());
            const auto v = gate(pair, judge);
            ++cells;
            const bool expect = c >= 4 && s >= 4;
            if (v.accepted != expect || v.content_score != c) ++wrong;
            if (c < 4) {
                style_calls_below += static_cast<int>(mock->calls(templates::kFilterStyle));
                if (v.style_score || v.stage_reached != StageReached::ContentOnly) ++wrong;
            } else if (v.style_score != s || v.stage_reached != StageReached::Both) {
                ++wrong;
            }
        }
    }
    return {wrong == 0 && style_calls_below == 0,
            std::to_string(cells - wrong) + "/" + std::to_string(cells) +
                " cells correct, style calls with content<4: " + std::to_string(style_calls_below)};
}

// --- 2 ----------------------------------------------------------------------

Outcome conservative_rule() {
    ft::TempDir dir("acc");
    const auto pair = ft::make_pair(dir.path(), "s", 2);
    SplitMix64 rng(2024);
    int violations = 0, clamped = 0;
    for (int i = 0; i < 100; ++i) {
        std::vector<std::pair<std::string, int>> regions;
        const auto n = 1 + rng.below(6);
        int lowest = 5;
        for (std::uint64_t k = 0; k < n; ++k) {
            const int s = static_cast<int>(rng.below(6));
            regions.emplace_back("region" + std::to_string(k), s);
            lowest = std::min(lowest, s);
        }
        const int holistic = static_cast<int>(rng.below(6));
        auto mock = std::make_shared<MockJudge>();
        mock->add_fixture({templates::kFilterContent, {}, {ft::content_reply(regions, holistic)}, false});
        JudgeClient judge(mock, ft::bundled_prompts());
        const auto a = score_content(pair.style, pair.desty, judge);
        if (a.content_score > lowest || a.content_score != std::min(holistic, lowest)) ++violations;
        if (holistic > lowest) ++clamped;
    }
    return {violations == 0, std::to_string(violations) + " violations of score <= min region over 100 fixtures (" +
                                 std::to_string(clamped) + " needed clamping)"};
}

// --- 3 ----------------------------------------------------------------------

// Each index in [0, total) covered by exactly one segment; offsets start at 0.
bool exact_cover(const TokenLayout& l, std::size_t rows) {
    std::vector<int> cover(rows, 0);
    std::size_t sum = 0;
    for (const auto& s : l.segments) {
        if (s.offset + s.length > rows) return false;
        for (std::size_t i = s.offset; i < s.offset + s.length; ++i) ++cover[i];
        sum += s.length;
    }
    if (!l.segments.empty() && l.segments.front().offset != 0) return false;
    for (std::size_t k = 1; k < l.segments.size(); ++k)
        if (l.segments[k].offset != l.segments[k - 1].offset + l.segments[k - 1].length) return false;
    return sum == rows && std::all_of(cover.begin(), cover.end(), [](int c) { return c == 1; });
}

Outcome token_layout() {
    SplitMix64 rng(11);
    int bad = 0;
    for (int i = 0; i < 500; ++i) {
        auto dim = [&] { return 1 + static_cast<int>(rng.below(6)); };
        const int h = dim(), w = dim();
        const auto text_len = rng.below(11);
        const auto dst = assemble_dst_sequence(LatentGrid(4, h, w), Matrix(text_len, 4), LatentGrid(4, h, w));
        const auto o2 = assemble_o2_sequence(LatentGrid(4, dim(), dim()), LatentGrid(4, dim(), dim()),
                                             LatentGrid(4, dim(), dim()));
        bool ok = exact_cover(dst.layout, dst.tokens.rows) && exact_cover(o2.layout, o2.tokens.rows);
        ok = ok && dst.layout.violation().empty() && o2.layout.violation().empty();
        ok = ok && dst.layout.segments.size() == 3 && dst.layout.segments[1].length == text_len;
        ok = ok && o2.layout.segments.size() == 3;
        for (const auto& s : o2.layout.segments) ok = ok && s.name != seg::kText;
        if (!ok) ++bad;
    }
    return {bad == 0, std::to_string(500 - bad) + "/500 draws with exact contiguous cover, no text segment in O2"};
}

// --- 4 ----------------------------------------------------------------------

Outcome flow_endpoints() {
    SplitMix64 rng(5);
    double worst0 = 0.0, worst1 = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const int c = 1 + static_cast<int>(rng.below(4)), h = 1 + static_cast<int>(rng.below(8)),
                  w = 1 + static_cast<int>(rng.below(8));
        const auto x0 = gaussian_grid(c, h, w, rng.next());
        const auto seed = rng.next();
        const auto s0 = make_noisy(x0, 0.0, seed);
        const auto s1 = make_noisy(x0, 1.0, seed);
        worst0 = std::max(worst0, max_abs_diff(s0.x_t.values, x0.values));
        worst1 = std::max(worst1, max_abs_diff(s1.x_t.values, s1.eps.values));
    }
    const double tol = 1e-15;
    return {worst0 <= tol && worst1 <= tol,
            "max |x_t(0)-x0| = " + fmt("%.1e", worst0) + ", max |x_t(1)-eps| = " + fmt("%.1e", worst1) +
                " over 1000 grids (tol 1e-15)"};
}

// --- 5 ----------------------------------------------------------------------

Outcome gradient_check() {
    ToyDiT model(ft::grad_check_config(1));
    const auto res = ft::gradient_check(model, {ft::grad_check_item(1)});
    return {res.max_rel_error <= 1e-3, "max rel err " + fmt("%.2e", res.max_rel_error) + " over " +
                                           std::to_string(res.checked) + " params, 2 tokens x width 8 (tol 1e-3)"};
}

// --- 6 ----------------------------------------------------------------------

Outcome overfit() {
    const auto data = ft::overfit_triplets();
    const auto cfg = ft::overfit_config();
    ToyDiT a(ft::overfit_model()), b(ft::overfit_model());
    const auto ra = train_o2(a, data, cfg);
    const auto rb = train_o2(b, data, cfg);
    const double ratio = ra.losses.back() / ra.losses.front();
    const bool det = ra.losses == rb.losses;
    return {ratio <= 0.5 && det && ra.losses.size() == 200,
            "final/step-0 loss " + fmt("%.3f", ratio) + " (need <= 0.5) after " + std::to_string(ra.losses.size()) +
                " steps, lr 1e-4, batch 4; rerun identical: " + (det ? "yes" : "no")};
}

// --- 7 ----------------------------------------------------------------------

Outcome lora_identity() {
    ToyDiT base(ModelConfig{}), adapted(ModelConfig{});
    const LoraConfig lc{4, 16.0};
    adapted.apply_lora(lc);
    SplitMix64 rng(77);
    int mismatched = 0;
    for (int i = 0; i < 50; ++i) {
        Matrix x(1 + rng.below(48), 4);
        for (auto& v : x.data) v = rng.normal();
        const double t = rng.uniform();
        if (!(base.forward(x, t) == adapted.forward(x, t))) ++mismatched;
    }
    int bad_inventory = 0;
    std::size_t expected_total = 0;
    const auto names = adapted.adapted_matrices();
    for (const auto& n : names) {
        const auto* w = adapted.params().find(n + ".weight");
        const auto* down = adapted.params().find(n + ".lora_down");
        const auto* up = adapted.params().find(n + ".lora_up");
        if (!w || !down || !up) {
            ++bad_inventory;
            continue;
        }
        const std::size_t out = w->shape[0], in = w->shape[1];
        const std::size_t want = static_cast<std::size_t>(lc.rank) * (in + out); // 2 x rank x width when square
        if (down->size() + up->size() != want) ++bad_inventory;
        expected_total += want;
    }
    std::size_t base_trainable = 0;
    for (const auto& p : adapted.params().all())
        if (p.trainable && !p.adapter) base_trainable += p.size();
    const bool ok = mismatched == 0 && bad_inventory == 0 && base_trainable == 0 &&
                    adapted.params().trainable_count() == expected_total && names.size() == 12;
    return {ok, std::to_string(50 - mismatched) + "/50 forwards bitwise equal; " + std::to_string(names.size()) +
                    " adapted matrices, trainable " + std::to_string(adapted.params().trainable_count()) +
                    " = sum rank*(in+out) (256 per 32x32 matrix), frozen base trainable " +
                    std::to_string(base_trainable)};
}

// --- 8 ----------------------------------------------------------------------

Outcome sampler_oracle() {
    double worst = 0.0;
    for (int k = 0; k < 20; ++k) {
        const auto x0 = gaussian_grid(4, 4, 4, 1000 + k);
        ft::ExactVelocity oracle(x0);
        const auto cond = k % 2 ? Conditions::o2(gaussian_grid(4, 4, 4, 1), gaussian_grid(4, 4, 4, 2))
                                : Conditions::dst(gaussian_grid(4, 4, 4, 3), Matrix(3, 4));
        for (int steps : {1, 4, 16}) worst = std::max(worst, max_abs_diff(sample(oracle, cond, steps, k).values, x0.values));
    }
    return {worst <= 1e-5, "max |x_hat - x0| = " + fmt("%.1e", worst) + " for steps {1,4,16} (tol 1e-5)"};
}

// --- 9 ----------------------------------------------------------------------

Outcome reference_oracle() {
    SplitMix64 rng(99);
    int disagree = 0, ties = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const auto n = 2 + rng.below(49);
        const auto dim = 2 + rng.below(15);
        std::vector<EmbeddedImage> pool;
        std::vector<std::pair<std::string, std::vector<double>>> raw;
        std::set<std::string> used;
        for (std::uint64_t i = 0; i < n; ++i) {
            std::vector<double> e(dim);
            const auto kind = rng.below(10);
            if (kind == 0 && !pool.empty()) {
                e = pool[rng.below(pool.size())].embedding; // exact duplicate, forces a tie
                ++ties;
            } else if (kind == 1) {
                // zero vector
            } else {
                for (auto& x : e) x = rng.normal();
            }
            std::string id;
            do id = "img-" + std::to_string(rng.below(100000)); while (!used.insert(id).second);
            pool.push_back({id, e});
            raw.emplace_back(id, e);
        }
        const auto& style = pool[rng.below(n)].id;
        if (select_reference(style, pool) != ft::brute_force_reference(style, raw)) ++disagree;
    }
    return {disagree == 0, std::to_string(1000 - disagree) + "/1000 pools (n <= 50, " + std::to_string(ties) +
                               " duplicate embeddings) match brute-force argmax with id tie-break"};
}

// --- 10 ---------------------------------------------------------------------

Outcome gram_properties() {
    const double hand = gram_style_loss({{2, 2, {1, 0, 0, 1}}}, {{2, 2, {2, 0, 0, 2}}});
    SplitMix64 rng(3);
    double worst_identity = 0.0, worst_sym = 0.0, worst_perm = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<FeatureMap> a, b, pa;
        const auto depth = 1 + rng.below(3);
        for (std::uint64_t k = 0; k < depth; ++k) {
            const std::size_t c = 1 + rng.below(8), l = 1 + rng.below(30);
            a.push_back(ft::random_feature_map(c, l, rng));
            b.push_back(ft::random_feature_map(c, l, rng));
            pa.push_back(ft::permute_locations(a.back(), rng));
        }
        const double ab = gram_style_loss(a, b);
        worst_identity = std::max(worst_identity, std::abs(gram_style_loss(a, a)));
        worst_sym = std::max(worst_sym, std::abs(ab - gram_style_loss(b, a)) / std::max(ab, 1e-300));
        worst_perm = std::max(worst_perm, std::abs(gram_style_loss(pa, b) - ab) / std::max(ab, 1e-300));
    }
    const bool ok = hand == 9.0 / 32.0 && worst_identity == 0.0 && worst_sym <= 1e-12 && worst_perm <= 1e-12;
    return {ok, "2x2 case = " + fmt("%.17g", hand) + " (9/32 exact: " + (hand == 9.0 / 32.0 ? "yes" : "no") +
                    "), L(a,a) max " + fmt("%.1e", worst_identity) + ", asym " + fmt("%.1e", worst_sym) +
                    ", perm " + fmt("%.1e", worst_perm) + " (tol 1e-12)"};
}

// --- 11 ---------------------------------------------------------------------

Outcome benchmark_matrix() {
    BenchmarkSpec big;
    for (int i = 0; i < 55; ++i) big.content_ids.push_back("c" + std::to_string(i));
    for (int i = 0; i < 56; ++i) big.style_ids.push_back("s" + std::to_string(i));
    big.methods = {"stub"};
    const auto jobs = enumerate_jobs(big);
    const std::set<std::pair<std::string, std::string>> uniq(jobs.begin(), jobs.end());

    ft::TempDir dir("acc");
    BenchmarkSpec desk;
    std::vector<ImageRecord> contents, styles;
    for (int i = 0; i < 2; ++i) {
        contents.push_back(ft::write_record(dir / "c", "content" + std::to_string(i), ft::pattern_image(48, 48, i)));
        desk.content_ids.push_back(contents.back().id);
    }
    for (int i = 0; i < 3; ++i) {
        styles.push_back(ft::write_record(dir / "s", "style" + std::to_string(i), ft::pattern_image(48, 48, 50 + i)));
        desk.style_ids.push_back(styles.back().id);
    }
    desk.methods = {"stub"};
    ProjectionEmbedder dino(EmbedRole::Structure), clip(EmbedRole::Semantic), csd(EmbedRole::Style);
    RandomFeatureStack feats;
    JudgeClient judge(std::make_shared<MockJudge>(), ft::bundled_prompts());
    StubStylizer method;
    const auto res = run_benchmark(desk, contents, styles, method, {&dino, &clip, &csd, &feats, &judge},
                                   {.out_dir = dir / "out"});
    double worst = 0.0;
    bool all_present = true;
    for (auto m : kMetrics) {
        double sum = 0.0;
        int n = 0;
        for (const auto& r : res.reports)
            if (r[m]) {
                sum += *r[m];
                ++n;
            }
        const auto& mean = res.aggregate.means[static_cast<std::size_t>(m)];
        if (!mean || n != 6) {
            all_present = false;
            continue;
        }
        worst = std::max(worst, std::abs(*mean - sum / n));
    }
    const bool ok = big.job_count() == 3080 && jobs.size() == 3080 && uniq.size() == 3080 && res.reports.size() == 6 &&
                    all_present && worst <= 1e-12;
    return {ok, "55x56 spec -> " + std::to_string(jobs.size()) + " unique jobs; 2x3 desk run -> " +
                    std::to_string(res.reports.size()) + " reports, max |aggregate - cell mean| = " +
                    fmt("%.1e", worst) + " (tol 1e-12)"};
}

// --- 12 ---------------------------------------------------------------------

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome e2e_determinism() {
    ft::TempDir dir("acc");
    const char* movements[] = {"Baroque", "Cubism", "Impressionism", "Ukiyo-e", "Pointillism"};
    for (int i = 0; i < 50; ++i) {
        const auto p = dir / "corpus" / movements[i % 5] / ("art" + std::to_string(i) + ".png");
        fs::create_directories(p.parent_path());
        save_png(ft::pattern_image(640, 512, 7000 + i), p);
    }
    fs::create_directories(dir / "photos");
    for (int i = 0; i < 4; ++i)
        save_png(ft::pattern_image(600, 600, 9000 + i), dir / "photos" / ("photo" + std::to_string(i) + ".png"));

    auto doc = [&](const std::string& work) {
        return json{{"paths", {{"work_dir", work}}},
                    {"seed", 17},
                    {"pool", {{"real_sources", json::array({{{"dir", "corpus"}, {"source", "wikiart"}}})},
                              {"content_dir", "photos"}}},
                    {"eval", {{"method", "stub"}, {"max_contents", 4}, {"max_styles", 6}}}};
    };
    const std::vector<Stage> stages{Stage::Pool, Stage::Prompts, Stage::Destylize, Stage::Filter, Stage::Assemble,
                                    Stage::Eval};
    const auto cfg_a = parse_config(doc("run_a"), dir.path());
    const auto cfg_b = parse_config(doc("run_b"), dir.path());
    const auto la = run_pipeline(cfg_a, stages);
    const auto lb = run_pipeline(cfg_b, stages);
    for (auto s : stages)
        if (!la.done(s) || !lb.done(s)) return {false, std::string("stage ") + std::string(to_string(s)) + " not done"};

    const std::vector<fs::path> finals{"manifests/styles.manifest.jsonl",  "manifests/prompts.manifest.jsonl",
                                       "manifests/desty.manifest.jsonl",   "manifests/pairs.manifest.jsonl",
                                       "manifests/verdicts.jsonl",         "manifests/triplets.manifest.jsonl",
                                       "manifests/contents.manifest.jsonl", "eval/reports.jsonl",
                                       "eval/table.md"};
    int differing = 0;
    for (const auto& f : finals)
        if (slurp(cfg_a.work_dir / f) != slurp(cfg_b.work_dir / f) || slurp(cfg_a.work_dir / f).empty()) ++differing;
    const auto styles = read_image_manifest(cfg_a.manifests_dir / "styles.manifest.jsonl");
    const auto triplets = read_triplets(cfg_a.manifests_dir / "triplets.manifest.jsonl");
    const auto verdicts = read_verdicts(cfg_a.manifests_dir / "verdicts.jsonl");
    const auto accepted = std::count_if(verdicts.begin(), verdicts.end(), [](const auto& v) { return v.accepted; });
    return {differing == 0, std::to_string(finals.size() - differing) + "/" + std::to_string(finals.size()) +
                                " final manifests byte-identical across two runs (" + std::to_string(styles.size()) +
                                " pool images, " + std::to_string(verdicts.size()) + " verdicts, " +
                                std::to_string(accepted) + " accepted, " + std::to_string(triplets.size()) +
                                " triplets)"};
}

} // namespace

int main() {
    run("filter-gate-truth-table", 5, gate_truth_table);
    run("conservative-content-rule", 0, conservative_rule);
    run("token-layout", 0, token_layout);
    run("flow-endpoints", 0, flow_endpoints);
    run("gradient-check", 30, gradient_check);
    run("overfit-convergence", 120, overfit);
    run("lora-identity", 0, lora_identity);
    run("sampler-oracle", 0, sampler_oracle);
    run("reference-selection", 0, reference_oracle);
    run("gram-style-loss", 0, gram_properties);
    run("benchmark-matrix", 0, benchmark_matrix);
    run("e2e-determinism", 180, e2e_determinism);
    std::printf("%d of 12 criteria failed\n", g_failures);
    return g_failures == 0 ? 0 : 1;
}
