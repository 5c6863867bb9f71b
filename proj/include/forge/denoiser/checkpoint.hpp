#pragma once

#include "forge/denoiser/model.hpp"
#include "forge/denoiser/trainer.hpp"

#include <filesystem>
#include <string>

namespace forge::denoiser {

/// On-disk layout:
///   config.json    {"scheme", "model": ModelConfig, "train": TrainConfig,
///                   "lora": {"rank","alpha"} | null}
///   params.bin     base weights
///   adapters.bin   adapter weights (only when LoRA is applied)
///
/// .bin archive: "FRGP" magic, u32 version (1), u32 count, then per entry
/// u32 name length, name bytes, u32 ndims, u64 dims[ndims], f64 values;
/// all little-endian.
struct Checkpoint {
    std::string scheme; // "dst" or "o2"
    ModelConfig model;
    TrainConfig train;
    std::optional<LoraConfig> lora;
};

void to_json(json& j, const ModelConfig& c);
void from_json(const json& j, ModelConfig& c);

void save_checkpoint(const std::filesystem::path& dir, const ToyDiT& model, const std::string& scheme,
                     const TrainConfig& train);

/// Rebuilds the model (architecture from config.json, adapters attached
/// when present) and loads all weights.
ToyDiT load_checkpoint(const std::filesystem::path& dir, Checkpoint* meta = nullptr);

void write_param_archive(const std::filesystem::path& path, const std::vector<const Param*>& params);
/// Loads values into existing parameters by name; every archived name must
/// exist with an identical shape.
void read_param_archive(const std::filesystem::path& path, ParamStore& store);

} // namespace forge::denoiser
