#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <chrono>
#include <filesystem>
#include <random>
#include <string>

#include "forge/common/rng.hpp"
#include "forge/denoiser/sampler.hpp"
#include "forge/denoiser/trainer.hpp"
#include "forge/dst_filter.hpp"
#include "forge/embedding.hpp"
#include "forge/image.hpp"
#include "forge/judge.hpp"
#include "forge/records.hpp"
#include "forge/taxonomy.hpp"

namespace forge::testing {

/// Unique scratch directory, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "t") {
        static std::atomic<int> counter{0};
        const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
        path_ = std::filesystem::temp_directory_path() /
                ("forge-" + tag + "-" + std::to_string(stamp) + "-" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
    std::filesystem::path path_;
};

/// Smooth seeded pattern: gradient plus a few colored discs.
inline Image pattern_image(int w, int h, std::uint64_t seed) {
    SplitMix64 rng(seed);
    Image img(w, h);
    const double r0 = rng.uniform() * 255, g0 = rng.uniform() * 255, b0 = rng.uniform() * 255;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            auto* p = img.at(x, y);
            p[0] = static_cast<std::uint8_t>(static_cast<int>(r0 + 100.0 * x / w) % 256);
            p[1] = static_cast<std::uint8_t>(static_cast<int>(g0 + 100.0 * y / h) % 256);
            p[2] = static_cast<std::uint8_t>(b0);
        }
    for (int d = 0; d < 3; ++d) {
        const int cx = static_cast<int>(rng.below(w)), cy = static_cast<int>(rng.below(h));
        const int rad = 2 + static_cast<int>(rng.below(std::max(3, w / 4)));
        const std::uint8_t c[3] = {static_cast<std::uint8_t>(rng.below(256)), static_cast<std::uint8_t>(rng.below(256)),
                                   static_cast<std::uint8_t>(rng.below(256))};
        for (int y = std::max(0, cy - rad); y < std::min(h, cy + rad); ++y)
            for (int x = std::max(0, cx - rad); x < std::min(w, cx + rad); ++x)
                if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= rad * rad)
                    for (int ch = 0; ch < 3; ++ch) img.at(x, y)[ch] = c[ch];
    }
    return img;
}

/// Writes the image as PNG and returns a matching record.
inline ImageRecord write_record(const std::filesystem::path& dir, const std::string& id, const Image& img,
                                std::optional<std::string> category = std::nullopt) {
    std::filesystem::create_directories(dir);
    ImageRecord r;
    r.id = id;
    r.path = dir / (id + ".png");
    r.source = ImageSource::Synthetic;
    r.style_category = std::move(category);
    r.width = img.width;
    r.height = img.height;
    r.content_hash = content_hash(img);
    save_png(img, r.path);
    return r;
}

/// Content CoT reply with one line per (region, score) and a final score.
inline std::string content_reply(const std::vector<std::pair<std::string, int>>& regions, int score) {
    std::string out = "Step 1: regions identified.\n";
    for (const auto& [name, s] : regions)
        out += "Region: " + name + " | " + (s >= 4 ? "intact" : s >= 2 ? "degraded" : "missing") + " | " +
               std::to_string(s) + "\n";
    return out + "Score: " + std::to_string(score);
}

inline std::string style_reply(const std::vector<std::pair<std::string, std::string>>& attrs, int score) {
    std::string out;
    for (const auto& [name, status] : attrs) out += "Attribute: " + name + " | " + status + "\n";
    return out + "Score: " + std::to_string(score);
}

/// A style/desty pair on disk with distinct pixels per seed.
inline PairRef make_pair(const std::filesystem::path& dir, const std::string& id, std::uint64_t seed) {
    PairRef p;
    p.pair_id = "pair-" + id;
    p.style = write_record(dir, id, pattern_image(16, 16, seed), "cyberpunk");
    p.desty = write_record(dir, "desty-" + id, pattern_image(16, 16, seed + 1000));
    p.desty.source = ImageSource::Destylized;
    return p;
}

inline PromptLibrary bundled_prompts() { return PromptLibrary::load(default_data_dir() / "prompts"); }

/// Velocity oracle: knows x0 and returns (x_t - x0) / t for the target
/// segment, which is exactly eps - x0 on the interpolation line.
class ExactVelocity : public denoiser::VelocityModel {
public:
    explicit ExactVelocity(const denoiser::LatentGrid& x0) : x0_(denoiser::grid_to_tokens(x0)) {}

    denoiser::Matrix predict(const denoiser::ConditionedSequence& seq, double t) override {
        const auto& seg = seq.layout.find(seq.target_segment);
        denoiser::Matrix v(seg.length, seq.tokens.cols);
        for (std::size_t r = 0; r < seg.length; ++r)
            for (std::size_t c = 0; c < v.cols; ++c) v(r, c) = (seq.tokens(seg.offset + r, c) - x0_(r, c)) / t;
        return v;
    }

private:
    denoiser::Matrix x0_;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
};

/// Central differences against the analytic gradient of the training loss
/// for every trainable scalar. Relative error per entry is
/// |a - n| / max(|a| + |n|, floor).
inline GradCheckResult gradient_check(denoiser::ToyDiT& model, const std::vector<denoiser::TrainItem>& batch,
                                      double h = 1e-5, double floor = 1e-6) {
    denoiser::accumulate_gradients(model, batch);
    GradCheckResult out;
    for (auto& p : model.params().all()) {
        if (!p.trainable) continue;
        const std::vector<double> analytic = p.grad;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double keep = p.value[i];
            p.value[i] = keep + h;
            const double up = denoiser::batch_loss(model, batch);
            p.value[i] = keep - h;
            const double down = denoiser::batch_loss(model, batch);
            p.value[i] = keep;
            const double numeric = (up - down) / (2.0 * h);
            const double rel = std::abs(analytic[i] - numeric) / std::max(std::abs(analytic[i]) + std::abs(numeric), floor);
            out.max_rel_error = std::max(out.max_rel_error, rel);
            ++out.checked;
        }
    }
    return out;
}

/// Two-token, width-8 DST item (one stylized token, empty text, one noisy
/// token) on a freshly seeded model.
inline denoiser::ModelConfig grad_check_config(std::uint64_t seed) {
    denoiser::ModelConfig mc;
    mc.token_width = 8;
    mc.hidden = 8;
    mc.mlp_hidden = 16;
    mc.depth = 2;
    mc.max_positions = 4;
    mc.seed = seed;
    return mc;
}

inline denoiser::TrainItem grad_check_item(std::uint64_t seed) {
    denoiser::DstExample ex;
    ex.stylized = denoiser::gaussian_grid(8, 1, 1, seed + 1);
    ex.text = denoiser::Matrix(0, 8);
    ex.content = denoiser::gaussian_grid(8, 1, 1, seed + 2);
    SplitMix64 rng(seed);
    const double t = 0.1 + 0.8 * rng.uniform();
    return denoiser::make_item(ex, t, denoiser::gaussian_grid(8, 1, 1, seed + 3));
}

/// Four fixed triplets of 4x4 grids with 4 channels.
inline std::vector<denoiser::O2Example> overfit_triplets() {
    std::vector<denoiser::O2Example> data;
    for (int i = 0; i < 4; ++i) {
        denoiser::O2Example ex;
        ex.style = denoiser::gaussian_grid(4, 4, 4, 100 + i);
        ex.reference = denoiser::gaussian_grid(4, 4, 4, 200 + i);
        ex.destylized = denoiser::gaussian_grid(4, 4, 4, 300 + i);
        data.push_back(ex);
    }
    return data;
}

inline denoiser::TrainConfig overfit_config() {
    auto cfg = denoiser::TrainConfig::o2_defaults();
    cfg.learning_rate = 1e-4;
    cfg.batch_size = 4;
    cfg.steps = 200;
    cfg.fixed_noise = true;
    cfg.augment = {false, false};
    cfg.seed = 5;
    return cfg;
}

inline denoiser::ModelConfig overfit_model() {
    denoiser::ModelConfig mc;
    mc.seed = 3;
    return mc;
}

/// Brute-force reference choice: plain cosine loop, zero norms count as 0,
/// ties broken by the smaller id. Empty when there is no candidate.
inline std::string brute_force_reference(const std::string& style_id,
                                         const std::vector<std::pair<std::string, std::vector<double>>>& pool) {
    const std::vector<double>* self = nullptr;
    for (const auto& [id, e] : pool)
        if (id == style_id) self = &e;
    auto cos = [](const std::vector<double>& a, const std::vector<double>& b) {
        double ab = 0, aa = 0, bb = 0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            ab += a[i] * b[i];
            aa += a[i] * a[i];
            bb += b[i] * b[i];
        }
        if (aa == 0 || bb == 0) return 0.0;
        return std::clamp(ab / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
    };
    std::vector<std::pair<double, std::string>> scored;
    for (const auto& [id, e] : pool)
        if (id != style_id) scored.emplace_back(cos(*self, e), id);
    if (scored.empty()) return {};
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    return scored.front().second;
}

/// Gram style loss written out longhand: per layer G[i][j] = sum_l F[i][l]
/// F[j][l] / (C * L), mean squared difference over entries, mean over layers.
inline double gram_loss_oracle(const std::vector<FeatureMap>& a, const std::vector<FeatureMap>& b) {
    double total = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const std::size_t C = a[k].channels, L = a[k].locations;
        double sq = 0.0;
        for (std::size_t i = 0; i < C; ++i)
            for (std::size_t j = 0; j < C; ++j) {
                double ga = 0.0, gb = 0.0;
                for (std::size_t l = 0; l < L; ++l) {
                    ga += a[k].values[i * L + l] * a[k].values[j * L + l];
                    gb += b[k].values[i * L + l] * b[k].values[j * L + l];
                }
                const double d = (ga - gb) / static_cast<double>(C * L);
                sq += d * d;
            }
        total += sq / static_cast<double>(C * C);
    }
    return total / static_cast<double>(a.size());
}

inline FeatureMap random_feature_map(std::size_t channels, std::size_t locations, SplitMix64& rng) {
    FeatureMap f{channels, locations, std::vector<double>(channels * locations)};
    for (auto& v : f.values) v = rng.normal();
    return f;
}

/// Same map with its locations permuted (one permutation for all channels).
inline FeatureMap permute_locations(const FeatureMap& f, SplitMix64& rng) {
    std::vector<std::size_t> perm(f.locations);
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    FeatureMap out = f;
    for (std::size_t c = 0; c < f.channels; ++c)
        for (std::size_t l = 0; l < f.locations; ++l) out.values[c * f.locations + l] = f.values[c * f.locations + perm[l]];
    return out;
}

} // namespace forge::testing
