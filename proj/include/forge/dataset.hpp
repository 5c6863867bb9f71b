#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "forge/common/jsonl.hpp"
#include "forge/common/quarantine.hpp"
#include "forge/dst_filter.hpp"
#include "forge/embedding.hpp"
#include "forge/judge.hpp"
#include "forge/records.hpp"
#include "forge/stylizer.hpp"

namespace forge {

// --- DST training set (stylized, content, caption) ---------------------------

struct DstTrainSample {
    std::string stylized_id;
    std::string content_id;
    std::string caption;
    StylizerKind stylizer = StylizerKind::Stub;
    std::string style_ref_id;
    bool operator==(const DstTrainSample&) const = default;
};

void to_json(json& j, const DstTrainSample& s);
void from_json(const json& j, DstTrainSample& s);

struct TrainsetOptions {
    /// Style references drawn per content image (without replacement).
    std::size_t refs_per_content = 1;
    std::uint64_t seed = 0;
    std::filesystem::path out_dir; // stylized images go to out_dir/images/
};

struct TrainsetResult {
    std::vector<DstTrainSample> samples; // sorted by stylized_id
    std::vector<ImageRecord> stylized;   // sorted by id
    QuarantineLog quarantine;
};

/// Every content image x every stylizer x refs_per_content sampled style
/// references, captioned once per content image. Failed captions drop all
/// samples of that content; failed stylizations drop the one sample.
TrainsetResult build_dst_trainset(const std::vector<ImageRecord>& contents, const std::vector<ImageRecord>& styles,
                                  const std::vector<const StylizerBackend*>& stylizers, JudgeClient& captioner,
                                  const TrainsetOptions& opts);

void write_trainset(const std::filesystem::path& path, std::vector<DstTrainSample> samples);
std::vector<DstTrainSample> read_trainset(const std::filesystem::path& path);

// --- destylization prompts and pairs ----------------------------------------

struct PromptRecord {
    std::string style_id;
    std::string prompt;
    bool operator==(const PromptRecord&) const = default;
};

void to_json(json& j, const PromptRecord& p);
void from_json(const json& j, PromptRecord& p);

struct PromptResult {
    std::vector<PromptRecord> prompts; // sorted by style_id
    QuarantineLog quarantine;
};

/// Asks the judge to imagine each style image's content without style.
PromptResult generate_destyle_prompts(const std::vector<ImageRecord>& styles, JudgeClient& judge);

void write_prompts(const std::filesystem::path& path, std::vector<PromptRecord> prompts);
std::vector<PromptRecord> read_prompts(const std::filesystem::path& path);

struct PairRecord {
    std::string pair_id;
    std::string style_id;
    std::string desty_id;
    bool operator==(const PairRecord&) const = default;
};

void to_json(json& j, const PairRecord& p);
void from_json(const json& j, PairRecord& p);

struct DestyOptions {
    std::uint64_t seed = 0;
    std::filesystem::path out_dir; // destylized images go to out_dir/images/
};

struct DestyResult {
    std::vector<PairRecord> pairs;  // sorted by pair_id
    std::vector<ImageRecord> desty; // sorted by id
    QuarantineLog quarantine;
};

/// One destylized image per style image that has a prompt. Missing prompts
/// and backend failures are quarantined per item.
DestyResult run_destylization(const std::vector<ImageRecord>& styles, const DestylizerBackend& backend,
                              const std::vector<PromptRecord>& prompts, const DestyOptions& opts);

void write_pairs(const std::filesystem::path& path, std::vector<PairRecord> pairs);
std::vector<PairRecord> read_pairs(const std::filesystem::path& path);

/// Joins pair records with their image records. Throws ValidationError on
/// an unresolved id.
std::vector<PairRef> resolve_pairs(const std::vector<PairRecord>& pairs, const std::vector<ImageRecord>& styles,
                                   const std::vector<ImageRecord>& desty);

// --- reference selection and triplets ---------------------------------------

class NoReference : public ForgeError {
public:
    using ForgeError::ForgeError;
};

struct EmbeddedImage {
    std::string id;
    std::vector<double> embedding;
};

/// Argmax cosine against every other pool member; ties go to the
/// lexicographically smallest id. Throws NoReference when the pool has no
/// other member and ValidationError when style_id is not in the pool.
std::string select_reference(const std::string& style_id, const std::vector<EmbeddedImage>& pool);

/// Embeds the pool with `embedder` and delegates.
std::string select_reference(const std::string& style_id, const std::vector<ImageRecord>& pool,
                             const EmbeddingBackend& embedder);

/// Taxonomy slug for synthetic images, movement for real art.
std::optional<std::string> category_of(const ImageRecord& rec);

struct DstTriplet {
    std::string desty_id;
    std::string reference_id;
    std::string style_id;
    std::string category;
    std::string verdict_id; // pair_id of the accepting FilterVerdict
    bool operator==(const DstTriplet&) const = default;
};

void to_json(json& j, const DstTriplet& t);
void from_json(const json& j, DstTriplet& t);

struct TripletDrop {
    std::string verdict_id;
    std::string reason;
};

struct AssembleResult {
    std::vector<DstTriplet> triplets; // sorted by verdict_id
    std::vector<TripletDrop> drops;   // sorted by verdict_id
    std::map<std::string, std::size_t> per_category;
    std::map<std::string, std::size_t> drop_reasons;
};

/// One triplet per accepted verdict whose style image has a category with
/// at least one other member in `styles`. Each category's embeddings are
/// computed once.
AssembleResult assemble_triplets(const std::vector<FilterVerdict>& verdicts, const std::vector<ImageRecord>& styles,
                                 const EmbeddingBackend& embedder);

void write_triplets(const std::filesystem::path& path, std::vector<DstTriplet> triplets);
std::vector<DstTriplet> read_triplets(const std::filesystem::path& path);

/// Referential-integrity scan: every triplet links an accepted verdict, its
/// ids resolve in the given manifests, none is quarantined, reference and
/// style differ and share the category. Returns one line per problem.
std::vector<std::string> check_triplets(const std::vector<DstTriplet>& triplets,
                                        const std::vector<FilterVerdict>& verdicts,
                                        const std::vector<ImageRecord>& styles, const std::vector<ImageRecord>& desty,
                                        const QuarantineLog& quarantine);

} // namespace forge
