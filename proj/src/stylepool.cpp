#include "forge/stylepool.hpp"
#include "forge/common/digest.hpp"
#include "forge/common/errors.hpp"
#include "forge/common/rng.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <unordered_set>

namespace forge {

namespace fs = std::filesystem;

void to_json(json& j, const PoolFilterReport& r) {
    j = json{{"input_count", r.input_count},
             {"rejected_undecodable", r.rejected_undecodable},
             {"rejected_low_resolution", r.rejected_low_resolution},
             {"rejected_duplicate", r.rejected_duplicate},
             {"rejected_non_artistic", r.rejected_non_artistic},
             {"rejected_abstract", r.rejected_abstract},
             {"quarantined", r.quarantined},
             {"accepted_count", r.accepted_count}};
}

void from_json(const json& j, PoolFilterReport& r) {
    j.at("input_count").get_to(r.input_count);
    j.at("rejected_undecodable").get_to(r.rejected_undecodable);
    j.at("rejected_low_resolution").get_to(r.rejected_low_resolution);
    j.at("rejected_duplicate").get_to(r.rejected_duplicate);
    j.at("rejected_non_artistic").get_to(r.rejected_non_artistic);
    j.at("rejected_abstract").get_to(r.rejected_abstract);
    j.at("quarantined").get_to(r.quarantined);
    j.at("accepted_count").get_to(r.accepted_count);
}

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

struct SourceMeta {
    std::optional<std::string> movement;
    std::optional<std::string> artist;
};

std::map<std::string, SourceMeta> load_metadata(const fs::path& src_dir) {
    std::map<std::string, SourceMeta> out;
    const fs::path file = src_dir / "metadata.jsonl";
    if (!fs::exists(file)) return out;
    for (const auto& row : read_jsonl(file)) {
        SourceMeta m;
        if (row.contains("movement") && row["movement"].is_string()) m.movement = row["movement"].get<std::string>();
        if (row.contains("artist") && row["artist"].is_string()) m.artist = row["artist"].get<std::string>();
        out[row.at("file").get<std::string>()] = m;
    }
    return out;
}

struct Candidate {
    fs::path path;
    std::string rel;
    std::optional<Image> image;
    std::string hash;
};

} // namespace

ClassifyOutcome classify_pool_image(const ImageRecord& img, JudgeClient& judge) {
    JudgeRequest req;
    req.template_id = templates::kClassifyContent;
    req.images = {ref_of(img)};
    req.kind = ReplyKind::Label;
    auto interpret = [](const std::string& label) -> std::optional<ClassifyOutcome> {
        const std::string key = lower(label);
        if (key == "nonartistic" || key == "non-artistic" || key == "photograph" || key == "document") {
            return ClassifyOutcome{PoolLabel::NonArtistic, ContentClass::AbstractRejected};
        }
        const auto cls = parse_content_class(label);
        if (!cls) return std::nullopt;
        if (*cls == ContentClass::AbstractRejected) return ClassifyOutcome{PoolLabel::Abstract, *cls};
        return ClassifyOutcome{PoolLabel::Content, *cls};
    };
    req.accept = [&](const JudgeReply& r) { return interpret(r.text).has_value(); };
    return *interpret(judge.ask(req).text);
}

ContentClass classify_content(const ImageRecord& img, JudgeClient& judge) {
    return classify_pool_image(img, judge).content_class;
}

IngestResult ingest_real_pool(const fs::path& src_dir, const fs::path& out_dir, JudgeClient* judge,
                              const IngestOptions& opts) {
    if (opts.min_side < 1) throw ValidationError("ingest: min_side must be >= 1");
    if (opts.resolution < 1) throw ValidationError("ingest: resolution must be >= 1");
    if (!fs::is_directory(src_dir)) throw ForgeError("ingest: not a directory: " + src_dir.string());
    if (opts.classify && !judge) throw ValidationError("ingest: classification requires a judge");

    std::vector<Candidate> cands;
    for (const auto& entry : fs::recursive_directory_iterator(src_dir)) {
        if (!entry.is_regular_file() || !is_image_extension(entry.path())) continue;
        cands.push_back({entry.path(), fs::relative(entry.path(), src_dir).generic_string(), std::nullopt, {}});
    }
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) { return a.rel < b.rel; });

    IngestResult result;
    auto& rep = result.report;
    rep.input_count = cands.size();

    // Decode + hash: independent per file.
    const auto n = static_cast<std::int64_t>(cands.size());
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < n; ++i) {
        auto& c = cands[static_cast<std::size_t>(i)];
        c.image = load_image(c.path);
        if (c.image) c.hash = content_hash(*c.image);
    }

    const auto meta = load_metadata(src_dir);
    std::unordered_set<std::string> seen;
    std::vector<ImageRecord> staged;
    std::vector<const Image*> staged_pixels;
    for (auto& c : cands) {
        if (!c.image) {
            ++rep.rejected_undecodable;
            result.quarantine.add(c.rel, "pool.decode", "undecodable image");
            continue;
        }
        if (std::min(c.image->width, c.image->height) < opts.min_side) {
            ++rep.rejected_low_resolution;
            continue;
        }
        if (!seen.insert(c.hash).second) {
            ++rep.rejected_duplicate;
            continue;
        }
        ImageRecord rec;
        rec.id = std::string(to_string(opts.source)) + "-" + c.hash.substr(0, 16);
        rec.path = c.path;
        rec.source = opts.source;
        rec.width = c.image->width;
        rec.height = c.image->height;
        rec.content_hash = c.hash;
        SourceMeta m;
        if (auto it = meta.find(c.rel); it != meta.end()) {
            m = it->second;
        } else if (fs::path(c.rel).has_parent_path()) {
            m.movement = fs::path(c.rel).parent_path().filename().string();
        }
        if (m.movement && opts.vocab) {
            if (auto canon = opts.vocab->find_movement(*m.movement)) m.movement = canon;
        }
        if (m.artist && opts.vocab) {
            if (auto canon = opts.vocab->find_artist(*m.artist)) m.artist = canon;
        }
        rec.style_category = m.movement;
        rec.artist = m.artist;
        staged.push_back(std::move(rec));
        staged_pixels.push_back(&*c.image);
    }

    std::vector<std::optional<ClassifyOutcome>> outcomes(staged.size());
    std::vector<std::string> failures(staged.size());
    if (opts.classify) {
        const auto m = static_cast<std::int64_t>(staged.size());
#pragma omp parallel for schedule(dynamic)
        for (std::int64_t i = 0; i < m; ++i) {
            const auto k = static_cast<std::size_t>(i);
            try {
                outcomes[k] = classify_pool_image(staged[k], *judge);
            } catch (const ForgeError& e) {
                failures[k] = e.what();
            }
        }
    }

    std::vector<std::size_t> keep;
    for (std::size_t k = 0; k < staged.size(); ++k) {
        if (!opts.classify) {
            keep.push_back(k);
            continue;
        }
        if (!outcomes[k]) {
            ++rep.quarantined;
            result.quarantine.add(staged[k].id, "pool.classify", failures[k]);
            continue;
        }
        switch (outcomes[k]->label) {
        case PoolLabel::NonArtistic: ++rep.rejected_non_artistic; continue;
        case PoolLabel::Abstract: ++rep.rejected_abstract; continue;
        case PoolLabel::Content: staged[k].content_class = outcomes[k]->content_class; keep.push_back(k);
        }
    }

    const fs::path image_dir = out_dir / "images";
    fs::create_directories(image_dir);
    std::vector<ImageRecord> accepted(keep.size());
    const auto kept = static_cast<std::int64_t>(keep.size());
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < kept; ++i) {
        const std::size_t k = keep[static_cast<std::size_t>(i)];
        ImageRecord rec = staged[k];
        const Image norm = center_crop_resize(*staged_pixels[k], opts.resolution);
        rec.path = image_dir / (rec.id + ".png");
        save_png(norm, rec.path);
        rec.width = norm.width;
        rec.height = norm.height;
        rec.content_hash = content_hash(norm);
        accepted[static_cast<std::size_t>(i)] = std::move(rec);
    }
    rep.accepted_count = accepted.size();
    std::sort(accepted.begin(), accepted.end(), [](const ImageRecord& a, const ImageRecord& b) { return a.id < b.id; });
    result.records = std::move(accepted);
    return result;
}

Image StubImageGen::generate(const std::string& prompt, std::uint64_t seed, int resolution) {
    if (resolution < 1) throw BackendError("stub-gen: bad resolution");
    SplitMix64 palette(fnv1a64(prompt));
    SplitMix64 layout(seed);
    double base[3];
    double accent[3];
    for (int c = 0; c < 3; ++c) {
        base[c] = palette.uniform();
        accent[c] = palette.uniform();
    }
    const double fx = 1.0 + 6.0 * layout.uniform();
    const double fy = 1.0 + 6.0 * layout.uniform();
    const double phase = 2.0 * std::numbers::pi * layout.uniform();
    const double cx = layout.uniform();
    const double cy = layout.uniform();
    const double radius = 0.15 + 0.3 * layout.uniform();

    Image img(resolution, resolution);
    for (int y = 0; y < resolution; ++y) {
        const double v = (y + 0.5) / resolution;
        for (int x = 0; x < resolution; ++x) {
            const double u = (x + 0.5) / resolution;
            const double wave = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * (fx * u + fy * v) + phase);
            const double d = std::hypot(u - cx, v - cy);
            const double blob = d < radius ? 1.0 - d / radius : 0.0;
            auto* px = img.at(x, y);
            for (int c = 0; c < 3; ++c) {
                const double val = base[c] * (1.0 - blob) * wave + accent[c] * blob + 0.1 * (1.0 - wave);
                px[c] = static_cast<std::uint8_t>(std::lround(std::clamp(val, 0.0, 1.0) * 255.0));
            }
        }
    }
    return img;
}

SynthResult synthesize_style_pool(const std::vector<StyleContentPair>& pairs, const StyleTaxonomy& tax,
                                  ImageGenBackend& gen, JudgeClient& judge, const SynthOptions& opts,
                                  const fs::path& out_dir) {
    if (pairs.empty()) throw ValidationError("synth: no style-content pairs");
    if (opts.images_per_prompt == 0) throw ValidationError("synth: images_per_prompt must be >= 1");

    SynthResult result;
    std::vector<std::vector<ImageRecord>> per_pair(pairs.size());
    const fs::path image_dir = out_dir / "images";
    fs::create_directories(image_dir);

    const auto n = static_cast<std::int64_t>(pairs.size());
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < n; ++i) {
        const auto& pair = pairs[static_cast<std::size_t>(i)];
        const StyleCategory* style = tax.find(pair.style);
        if (!style) {
            result.quarantine.add(pair.pair_id, "pool.synth", "style not in taxonomy: " + pair.style);
            continue;
        }
        const auto cls = parse_content_class(pair.content_class);
        std::string prompt;
        try {
            prompt = judge.compose_style_prompt(*style, pair.content_class, pair.subtype);
        } catch (const ForgeError& e) {
            result.quarantine.add(pair.pair_id, "pool.synth", e.what());
            continue;
        }
        std::string stem = pair.pair_id;
        std::replace(stem.begin(), stem.end(), '/', '-');
        std::vector<ImageRecord> recs;
        try {
            for (std::size_t k = 0; k < opts.images_per_prompt; ++k) {
                const std::uint64_t img_seed = derive_seed(opts.seed, fnv1a64(pair.pair_id) + k);
                const Image img = gen.generate(prompt, img_seed, opts.resolution);
                if (img.width != opts.resolution || img.height != opts.resolution) {
                    throw BackendError("generator returned wrong resolution");
                }
                ImageRecord rec;
                rec.id = "syn-" + stem + "-" + std::to_string(k);
                rec.path = image_dir / (rec.id + ".png");
                rec.source = ImageSource::Synthetic;
                if (cls && *cls != ContentClass::AbstractRejected) rec.content_class = cls;
                rec.style_category = pair.style;
                rec.width = img.width;
                rec.height = img.height;
                rec.content_hash = content_hash(img);
                rec.prompt = prompt;
                rec.seed = img_seed;
                save_png(img, rec.path);
                recs.push_back(std::move(rec));
            }
        } catch (const ForgeError& e) {
            result.quarantine.add(pair.pair_id, "pool.synth", e.what());
            continue;
        }
        per_pair[static_cast<std::size_t>(i)] = std::move(recs);
    }

    for (auto& v : per_pair) {
        for (auto& r : v) result.records.push_back(std::move(r));
    }
    result.failed_pairs = result.quarantine.size();
    std::sort(result.records.begin(), result.records.end(),
              [](const ImageRecord& a, const ImageRecord& b) { return a.id < b.id; });
    return result;
}

std::size_t count_resolution_violations(const std::vector<ImageRecord>& records, int resolution) {
    return static_cast<std::size_t>(std::count_if(records.begin(), records.end(), [&](const ImageRecord& r) {
        return r.width != resolution || r.height != resolution;
    }));
}

} // namespace forge
