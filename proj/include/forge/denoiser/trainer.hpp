#pragma once

#include "forge/common/jsonl.hpp"
#include "forge/common/rng.hpp"
#include "forge/denoiser/model.hpp"
#include "forge/denoiser/sampler.hpp"
#include "forge/denoiser/sequence.hpp"

#include <cstdint>
#include <vector>

namespace forge::denoiser {

struct AugmentConfig {
    bool hflip = true;
    bool vflip = true;
};

struct TrainConfig {
    double learning_rate = 1e-4;
    int batch_size = 8;
    int steps = 100;
    int lora_rank = 0; // 0 = full fine-tune
    double lora_alpha = 0.0;
    AugmentConfig augment;
    std::uint64_t seed = 0;
    /// Draw (t, noise) once per example and reuse it every step, for
    /// overfitting a fixed batch.
    bool fixed_noise = false;

    static TrainConfig dst_defaults();
    static TrainConfig o2_defaults();
    /// Throws ValidationError.
    void validate() const;
};

void to_json(json& j, const TrainConfig& c);
void from_json(const json& j, TrainConfig& c);

/// One prepared training item: the assembled sequence (target segment holds
/// x_t) and the sample that produced it.
struct TrainItem {
    ConditionedSequence seq;
    NoisySample noisy;
};

/// Mean squared error between predicted and target velocity over the target
/// segment only, averaged over the batch. No update.
double batch_loss(ToyDiT& model, const std::vector<TrainItem>& batch);

/// Same loss; accumulates gradients (after zeroing) without an update.
double accumulate_gradients(ToyDiT& model, const std::vector<TrainItem>& batch);

/// Gradient + one optimizer update. Throws NumericError on a non-finite
/// loss or gradient.
double train_step(ToyDiT& model, Adam& opt, const std::vector<TrainItem>& batch);

struct DstExample {
    LatentGrid stylized;
    Matrix text;
    LatentGrid content; // the denoising target
};

struct O2Example {
    LatentGrid style; // the denoising target
    LatentGrid reference;
    LatentGrid destylized;
};

/// The same random flips applied to every grid of the example.
DstExample augment(const DstExample& ex, const AugmentConfig& aug, SplitMix64& rng);
O2Example augment(const O2Example& ex, const AugmentConfig& aug, SplitMix64& rng);

TrainItem make_item(const DstExample& ex, double t, const LatentGrid& eps);
TrainItem make_item(const O2Example& ex, double t, const LatentGrid& eps);

struct TrainReport {
    std::vector<double> losses; // one per step
    std::size_t trainable_parameters = 0;
    bool used_lora = false;
};

/// Full fine-tune unless cfg.lora_rank > 0. Examples are visited in order,
/// batch_size per step, wrapping around.
TrainReport train_dst(ToyDiT& model, const std::vector<DstExample>& data, const TrainConfig& cfg);
/// Adapters only (cfg.lora_rank must be > 0).
TrainReport train_o2(ToyDiT& model, const std::vector<O2Example>& data, const TrainConfig& cfg);

} // namespace forge::denoiser
