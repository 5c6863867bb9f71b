#include "forge/denoiser/trainer.hpp"
#include "forge/common/errors.hpp"

#include <cmath>

namespace forge::denoiser {

TrainConfig TrainConfig::dst_defaults() {
    TrainConfig c;
    c.batch_size = 8;
    c.lora_rank = 0;
    return c;
}

TrainConfig TrainConfig::o2_defaults() {
    TrainConfig c;
    c.batch_size = 48;
    c.lora_rank = 4;
    c.lora_alpha = 16.0;
    return c;
}

void TrainConfig::validate() const {
    // lr = 0 is accepted as a frozen-weights mode.
    if (learning_rate < 0.0 || !std::isfinite(learning_rate)) throw ValidationError("train config: bad learning_rate");
    if (batch_size < 1) throw ValidationError("train config: batch_size must be >= 1");
    if (steps < 0) throw ValidationError("train config: steps must be >= 0");
    if (lora_rank < 0) throw ValidationError("train config: lora_rank must be >= 0");
    if (lora_rank > 0 && !(lora_alpha > 0.0)) throw ValidationError("train config: lora_alpha must be > 0");
}

void to_json(json& j, const TrainConfig& c) {
    j = json{{"learning_rate", c.learning_rate},
             {"batch_size", c.batch_size},
             {"steps", c.steps},
             {"lora_rank", c.lora_rank == 0 ? json("full") : json(c.lora_rank)},
             {"lora_alpha", c.lora_alpha},
             {"augment", {{"hflip", c.augment.hflip}, {"vflip", c.augment.vflip}}},
             {"seed", c.seed},
             {"fixed_noise", c.fixed_noise}};
}

void from_json(const json& j, TrainConfig& c) {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.steps = j.value("steps", c.steps);
    if (j.contains("lora_rank")) {
        const auto& r = j["lora_rank"];
        if (r.is_string()) {
            if (r.get<std::string>() != "full") throw ParseError("train config: lora_rank must be an integer or \"full\"");
            c.lora_rank = 0;
        } else {
            c.lora_rank = r.get<int>();
        }
    }
    c.lora_alpha = j.value("lora_alpha", c.lora_alpha);
    if (j.contains("augment")) {
        c.augment.hflip = j["augment"].value("hflip", c.augment.hflip);
        c.augment.vflip = j["augment"].value("vflip", c.augment.vflip);
    }
    c.seed = j.value("seed", c.seed);
    c.fixed_noise = j.value("fixed_noise", c.fixed_noise);
}

namespace {

const LatentGrid& ex_target(const DstExample& ex) { return ex.content; }
const LatentGrid& ex_target(const O2Example& ex) { return ex.style; }

double loss_and_grad(ToyDiT& model, const std::vector<TrainItem>& batch, bool with_grad) {
    if (batch.empty()) throw ValidationError("train: empty batch");
    if (with_grad) model.params().zero_grad();
    double total = 0.0;
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    for (const auto& item : batch) {
        const auto& seg = item.seq.layout.find(item.seq.target_segment);
        const Matrix target = grid_to_tokens(item.noisy.target_velocity);
        if (target.rows != seg.length) throw ValidationError("train: target segment length mismatch");
        const Matrix out = model.forward(item.seq.tokens, item.noisy.t);
        const double denom = static_cast<double>(seg.length * out.cols);
        Matrix d_out(out.rows, out.cols);
        double sq = 0.0;
        for (std::size_t r = 0; r < seg.length; ++r) {
            for (std::size_t c = 0; c < out.cols; ++c) {
                const double diff = out(seg.offset + r, c) - target(r, c);
                sq += diff * diff;
                d_out(seg.offset + r, c) = 2.0 * diff / denom * inv_b;
            }
        }
        total += sq / denom;
        if (with_grad) model.backward(d_out);
    }
    return total * inv_b;
}

template <typename Example>
TrainReport run_training(ToyDiT& model, const std::vector<Example>& data, const TrainConfig& cfg) {
    if (data.empty()) throw ValidationError("train: no examples");
    Adam opt(cfg.learning_rate);
    TrainReport report;
    report.used_lora = model.uses_lora();
    report.trainable_parameters = model.params().trainable_count();
    const auto b = static_cast<std::size_t>(cfg.batch_size);
    for (int step = 0; step < cfg.steps; ++step) {
        std::vector<TrainItem> batch;
        batch.reserve(b);
        for (std::size_t i = 0; i < b; ++i) {
            const std::size_t draw = static_cast<std::size_t>(step) * b + i;
            const std::size_t idx = draw % data.size();
            SplitMix64 rng(derive_seed(cfg.seed, cfg.fixed_noise ? idx : draw));
            const double t = rng.uniform();
            const Example ex = augment(data[idx], cfg.augment, rng);
            const auto& shape = ex_target(ex);
            const LatentGrid eps = gaussian_grid(shape.channels, shape.height, shape.width, rng.next());
            batch.push_back(make_item(ex, t, eps));
        }
        report.losses.push_back(train_step(model, opt, batch));
    }
    return report;
}

} // namespace

double batch_loss(ToyDiT& model, const std::vector<TrainItem>& batch) { return loss_and_grad(model, batch, false); }

double accumulate_gradients(ToyDiT& model, const std::vector<TrainItem>& batch) {
    return loss_and_grad(model, batch, true);
}

double train_step(ToyDiT& model, Adam& opt, const std::vector<TrainItem>& batch) {
    const double loss = loss_and_grad(model, batch, true);
    if (!std::isfinite(loss)) throw NumericError("train_step: non-finite loss");
    for (const auto& p : model.params().all()) {
        if (!p.trainable) continue;
        for (double g : p.grad) {
            if (!std::isfinite(g)) throw NumericError("train_step: non-finite gradient in " + p.name);
        }
    }
    opt.step(model.params());
    return loss;
}

DstExample augment(const DstExample& ex, const AugmentConfig& aug, SplitMix64& rng) {
    DstExample out = ex;
    const bool h = aug.hflip && rng.uniform() < 0.5;
    const bool v = aug.vflip && rng.uniform() < 0.5;
    if (h) {
        out.stylized = flip_grid_horizontal(out.stylized);
        out.content = flip_grid_horizontal(out.content);
    }
    if (v) {
        out.stylized = flip_grid_vertical(out.stylized);
        out.content = flip_grid_vertical(out.content);
    }
    return out;
}

O2Example augment(const O2Example& ex, const AugmentConfig& aug, SplitMix64& rng) {
    O2Example out = ex;
    const bool h = aug.hflip && rng.uniform() < 0.5;
    const bool v = aug.vflip && rng.uniform() < 0.5;
    for (LatentGrid* g : {&out.style, &out.reference, &out.destylized}) {
        if (h) *g = flip_grid_horizontal(*g);
        if (v) *g = flip_grid_vertical(*g);
    }
    return out;
}

TrainItem make_item(const DstExample& ex, double t, const LatentGrid& eps) {
    TrainItem item;
    item.noisy = make_noisy(ex.content, t, eps);
    item.seq = assemble_dst_sequence(ex.stylized, ex.text, item.noisy.x_t);
    return item;
}

TrainItem make_item(const O2Example& ex, double t, const LatentGrid& eps) {
    TrainItem item;
    item.noisy = make_noisy(ex.style, t, eps);
    item.seq = assemble_o2_sequence(item.noisy.x_t, ex.reference, ex.destylized);
    return item;
}

TrainReport train_dst(ToyDiT& model, const std::vector<DstExample>& data, const TrainConfig& cfg) {
    cfg.validate();
    if (cfg.lora_rank > 0) {
        if (!model.uses_lora()) model.apply_lora({cfg.lora_rank, cfg.lora_alpha});
    } else {
        model.enable_full_finetune();
    }
    return run_training(model, data, cfg);
}

TrainReport train_o2(ToyDiT& model, const std::vector<O2Example>& data, const TrainConfig& cfg) {
    cfg.validate();
    if (cfg.lora_rank < 1) throw ValidationError("train o2: adapter training requires lora_rank >= 1");
    if (!model.uses_lora()) model.apply_lora({cfg.lora_rank, cfg.lora_alpha});
    return run_training(model, data, cfg);
}

} // namespace forge::denoiser
