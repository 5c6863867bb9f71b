#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "forge/common/jsonl.hpp"
#include "forge/denoiser/model.hpp"
#include "forge/denoiser/trainer.hpp"
#include "forge/stylepool.hpp"

namespace forge {

enum class Stage { Pool, Prompts, Destylize, Filter, Assemble, Train, Eval };
inline constexpr std::array<Stage, 7> kStages{Stage::Pool,   Stage::Prompts,  Stage::Destylize, Stage::Filter,
                                              Stage::Assemble, Stage::Train, Stage::Eval};

std::string_view to_string(Stage s);
std::optional<Stage> parse_stage(std::string_view s);

struct RealSource {
    std::filesystem::path dir;
    ImageSource source = ImageSource::WikiArt;
};

/// Every path is absolute after validation; relative paths in the file are
/// resolved against the config file's directory.
struct PipelineConfig {
    std::filesystem::path config_dir;

    // paths
    std::filesystem::path work_dir = "run";
    std::filesystem::path pool_dir;      // default work_dir/pool
    std::filesystem::path manifests_dir; // default work_dir/manifests
    std::filesystem::path cache_dir;     // default work_dir/cache
    std::filesystem::path checkpoints_dir; // default work_dir/checkpoints
    std::filesystem::path eval_dir;      // default work_dir/eval
    std::filesystem::path data_dir;      // taxonomy, prompts; default: bundled data

    std::uint64_t seed = 0;

    // taxonomy
    bool taxonomy_strict = true;
    std::size_t taxonomy_expected = 65;

    // pool
    std::vector<RealSource> real_sources;
    std::optional<std::filesystem::path> content_dir; // natural photos for eval / trainset
    int resolution = kPoolResolution;
    int min_side = kDefaultMinSide;
    std::size_t synth_per_style = 0; // content pairs per style category; 0 disables
    std::size_t synth_images_per_prompt = 8;
    std::size_t synth_max_styles = 0; // 0 = whole taxonomy

    // judge
    std::string judge_backend = "mock"; // mock | http
    std::optional<std::filesystem::path> judge_fixtures;
    std::string judge_base_url = "https://api.openai.com";
    std::string judge_model = "gpt-4o";
    std::string judge_api_key_env = "FORGE_JUDGE_API_KEY";
    int judge_max_attempts = 3;
    int judge_max_inflight = 4;

    // destylizer, embedders
    std::string destylizer = "stub"; // stub | model
    std::optional<std::filesystem::path> dst_checkpoint;
    int adapter_work_side = 32;
    int adapter_steps = 8;
    std::size_t embed_dim = 64;
    std::uint64_t embed_seed = 0;

    // filter
    int content_threshold = 4;
    int style_threshold = 4;

    // training
    denoiser::ModelConfig model;
    denoiser::TrainConfig dst_train = denoiser::TrainConfig::dst_defaults();
    denoiser::TrainConfig o2_train = denoiser::TrainConfig::o2_defaults();
    std::size_t train_max_examples = 64;

    // trainset
    std::size_t refs_per_content = 1;
    std::vector<std::string> trainset_stylizers{"stub"};

    // eval
    std::string eval_method = "stub"; // stub | stub-<n> | omnistyle2
    std::size_t eval_max_contents = 55;
    std::size_t eval_max_styles = 56;
};

void to_json(json& j, const PipelineConfig& c);

/// Applies defaults and checks the document. Throws ValidationError on
/// unknown keys, out-of-range values, missing input paths and output paths
/// that collide.
PipelineConfig parse_config(const json& doc, const std::filesystem::path& config_dir);
PipelineConfig validate_config(const std::filesystem::path& path);

/// Declared output files of a stage (manifests and reports; images are
/// covered through the content hashes inside the manifests).
std::vector<std::filesystem::path> stage_outputs(const PipelineConfig& cfg, Stage s);

/// Stages whose outputs `s` reads under this configuration.
std::vector<Stage> dependencies(const PipelineConfig& cfg, Stage s);

enum class StageStatus { Pending, Done, Failed };
std::string_view to_string(StageStatus s);

struct StageRecord {
    StageStatus status = StageStatus::Pending;
    std::string input_digest;
    std::string output_digest;
    std::size_t quarantined = 0;
    std::string message;
};

struct RunLedger {
    std::map<Stage, StageRecord> stages;
    /// Stages that actually executed in the last run_pipeline call.
    std::vector<Stage> executed;

    bool done(Stage s) const;
};

void to_json(json& j, const RunLedger& l);
void from_json(const json& j, RunLedger& l);
RunLedger read_ledger(const std::filesystem::path& path);
void write_ledger(const std::filesystem::path& path, const RunLedger& l);
std::filesystem::path ledger_path(const PipelineConfig& cfg);

/// SHA-256 over the names and contents of the stage's output files; empty
/// when any is missing.
std::string output_digest(const PipelineConfig& cfg, Stage s);

struct RunOptions {
    /// Load the prior ledger and skip stages that are done with matching
    /// input and output digests.
    bool resume = false;
    /// Load the prior ledger only to satisfy dependencies; requested stages
    /// still execute.
    bool load_ledger = false;
};

/// Runs the requested stages in dependency order. A stage whose
/// dependency is neither requested nor done fails; a failed stage blocks
/// its dependents but not independent stages.
RunLedger run_pipeline(const PipelineConfig& cfg, const std::vector<Stage>& stages, const RunOptions& opts = {});

// Side commands outside the staged run. Each returns a JSON summary.

/// DST training set from the content and style manifests; writes
/// dst_train.manifest.jsonl and stylized.manifest.jsonl.
json run_trainset(const PipelineConfig& cfg);

/// Full fine-tune of the toy DST model on the training set; checkpoint in
/// checkpoints_dir/dst.
json run_train_dst(const PipelineConfig& cfg);

} // namespace forge
