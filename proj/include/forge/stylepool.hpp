#pragma once

#include "forge/common/quarantine.hpp"
#include "forge/image.hpp"
#include "forge/judge.hpp"
#include "forge/records.hpp"
#include "forge/taxonomy.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace forge {

inline constexpr int kPoolResolution = 1024;
inline constexpr int kDefaultMinSide = 512;

/// Stage counters for real-image ingestion. The counts always reconcile:
/// accepted + every rejection + quarantined == input.
struct PoolFilterReport {
    std::size_t input_count = 0;
    std::size_t rejected_undecodable = 0;
    std::size_t rejected_low_resolution = 0;
    std::size_t rejected_duplicate = 0;
    std::size_t rejected_non_artistic = 0;
    std::size_t rejected_abstract = 0;
    std::size_t quarantined = 0;
    std::size_t accepted_count = 0;

    bool reconciles() const {
        return accepted_count + rejected_undecodable + rejected_low_resolution + rejected_duplicate +
                   rejected_non_artistic + rejected_abstract + quarantined ==
               input_count;
    }
};

void to_json(json& j, const PoolFilterReport& r);
void from_json(const json& j, PoolFilterReport& r);

struct IngestOptions {
    int min_side = kDefaultMinSide;
    int resolution = kPoolResolution;
    ImageSource source = ImageSource::WikiArt;
    /// Skip semantic classification (content pools of photographs).
    bool classify = true;
    const ArtVocab* vocab = nullptr;
};

struct IngestResult {
    std::vector<ImageRecord> records; // sorted by id
    PoolFilterReport report;
    QuarantineLog quarantine;
};

/// Fixed stage order: decode -> resolution -> exact duplicate (content
/// hash) -> semantic class via judge -> abstract / non-artistic rejection
/// -> center-crop + bilinear resize. Accepted images are written as PNG to
/// `out_dir/images/<id>.png`.
///
/// Movement and artist come from an optional `metadata.jsonl` in `src_dir`
/// ({"file", "movement", "artist"}) or else from the parent directory name.
IngestResult ingest_real_pool(const std::filesystem::path& src_dir, const std::filesystem::path& out_dir,
                              JudgeClient* judge, const IngestOptions& opts);

enum class PoolLabel { Content, Abstract, NonArtistic };

struct ClassifyOutcome {
    PoolLabel label = PoolLabel::Abstract;
    ContentClass content_class = ContentClass::AbstractRejected;
};

/// Judge-backed semantic screening. Throws JudgeExhausted after retries.
ClassifyOutcome classify_pool_image(const ImageRecord& img, JudgeClient& judge);

/// One of the six classes, or AbstractRejected (which also covers
/// non-artistic replies).
ContentClass classify_content(const ImageRecord& img, JudgeClient& judge);

// --- synthetic pool --------------------------------------------------------

class ImageGenBackend {
public:
    virtual ~ImageGenBackend() = default;
    virtual std::string id() const = 0;
    /// Throws BackendError on failure.
    virtual Image generate(const std::string& prompt, std::uint64_t seed, int resolution) = 0;
};

/// Procedural generator: palette from the prompt hash, layout from the
/// seed. Pure function of (prompt, seed, resolution).
class StubImageGen : public ImageGenBackend {
public:
    std::string id() const override { return "stub-gen"; }
    Image generate(const std::string& prompt, std::uint64_t seed, int resolution) override;
};

struct SynthOptions {
    std::size_t images_per_prompt = 8;
    std::uint64_t seed = 0;
    int resolution = kPoolResolution;
};

struct SynthResult {
    std::vector<ImageRecord> records; // sorted by id
    QuarantineLog quarantine;
    std::size_t failed_pairs = 0;
};

/// Per pair: judge composes the style+content prompt, the generator renders
/// images_per_prompt images with recorded per-image seeds.
SynthResult synthesize_style_pool(const std::vector<StyleContentPair>& pairs, const StyleTaxonomy& tax,
                                  ImageGenBackend& gen, JudgeClient& judge, const SynthOptions& opts,
                                  const std::filesystem::path& out_dir);

/// Count of accepted records violating the square-resolution invariant.
std::size_t count_resolution_violations(const std::vector<ImageRecord>& records, int resolution);

} // namespace forge
