#pragma once

#include <optional>
#include <string>
#include <vector>

#include "timewarp/corpus.hpp"
#include "timewarp/llmclient.hpp"
#include "timewarp/media.hpp"
#include "timewarp/permute.hpp"
#include "timewarp/preprocess.hpp"
#include "timewarp/promptkit.hpp"

namespace timewarp {

enum class RecordSource { Explicit, ImplicitPrompt, ImplicitFrame, External };

std::string to_string(RecordSource s);
RecordSource parse_record_source(const std::string& s);

// Appended to every question to form the preference prompt.
inline constexpr const char* kAnswerInstruction =
    "Answer the question according to the order in which events happen in the video.";

struct PreferenceRecord {
    std::string id;
    std::string video_path;
    std::optional<std::string> shuffled_video_path;
    std::string prompt;
    std::string chosen;
    std::string rejected;
    RecordSource source = RecordSource::Explicit;
    std::optional<PermKind> perm_kind;  // nullopt is "none"
    std::optional<PerturbationSpec> perturbation;

    bool operator==(const PreferenceRecord&) const = default;
};

// Empty when the record is well formed.
std::vector<std::string> check_preference_record(const PreferenceRecord& r);

json to_json(const PreferenceRecord& r);
PreferenceRecord preference_record_from_json(const json& j);

enum class KtoOrigin { Original, Shuffled };
std::string to_string(KtoOrigin o);

struct KtoRecord {
    std::string id;
    std::string dpo_id;
    std::string video_path;
    std::string prompt;
    std::string completion;
    bool label = false;
    KtoOrigin origin = KtoOrigin::Original;

    bool operator==(const KtoRecord&) const = default;
};

json to_json(const KtoRecord& r);
KtoRecord kto_record_from_json(const json& j);

struct SftRecord {
    std::string id;
    std::string video_path;
    std::string prompt;
    std::string response;

    bool operator==(const SftRecord&) const = default;
};

json to_json(const SftRecord& r);
SftRecord sft_record_from_json(const json& j);

template <typename T>
struct Built {
    std::vector<T> records;
    std::vector<Diagnostic> diagnostics;  // skipped items, one per skip
};

// ---------------------------------------------------------------- explicit

struct GenSettings {
    std::string model_id = "mock";
    double temperature = 0.0;
    int max_tokens = 1024;
};

// Open-ended QA generated from the original narrative.
Parsed<OpenEndedQA> generate_oe_qa(const CompositeCaption& original, LlmClient& gen,
                                   const PromptLibrary& prompts, const GenSettings& settings = {});

struct ExplicitInputs {
    const VideoRecord* record = nullptr;
    const ClipSpec* clip = nullptr;
    const ScenePermutation* perm = nullptr;
    const CompositeCaption* original = nullptr;
    const CompositeCaption* permuted = nullptr;
    std::string video_path;           // rendered original clip
    std::string shuffled_video_path;  // rendered permuted clip
};

// chosen = the QA answer from the original narrative; rejected = the
// generator's answer to the same question over the permuted narrative.
Built<PreferenceRecord> build_explicit_pairs(const ExplicitInputs& in, const std::vector<OpenEndedQA>& qa,
                                             LlmClient& gen, const PromptLibrary& prompts,
                                             const GenSettings& settings = {});

// ---------------------------------------------------------------- implicit

enum class ImplicitMode { Prompt, Frame };

struct ImplicitInputs {
    std::string video_id;
    std::string video_path;
    std::vector<std::string> frames;            // clean frames
    std::vector<std::string> perturbed_frames;  // Frame mode only
    std::optional<PerturbationSpec> spec;       // Frame mode only
    std::size_t record_index = 0;               // picks hallucination prompt k
};

// k = record_index % 7 + 1
int hallucination_index(std::size_t record_index);

Built<PreferenceRecord> build_implicit_pairs(const ImplicitInputs& in, ImplicitMode mode, LlmClient& subject,
                                             const PromptLibrary& prompts, const GenSettings& settings = {});

// ---------------------------------------------------------------- kto / sft

// Four children per explicit pair: (original, chosen, true),
// (original, rejected, false), (shuffled, rejected, true),
// (shuffled, chosen, false). Records without a shuffled video are skipped.
Built<KtoRecord> dpo_to_kto(const std::vector<PreferenceRecord>& pairs);

// Seeded sample without replacement; input order is kept. Throws
// MixtureUnderflow when n exceeds the input size.
std::vector<KtoRecord> sample_kto(const std::vector<KtoRecord>& records, std::size_t n, std::uint64_t seed);

std::vector<SftRecord> export_sft(const std::vector<PreferenceRecord>& pairs);

// ---------------------------------------------------------------- mixture

struct MixturePart {
    std::string name;               // provenance value, also salts the sampling seed
    std::vector<json> rows;         // DPO rows
    std::optional<std::size_t> take;  // nullopt = all
};

// Samples each part without replacement (seed derived from the part name, so
// the parts list order does not matter), tags rows with "part" and returns
// them sorted by id. Throws MixtureUnderflow, SchemaMismatch on rows missing
// DPO fields, PreconditionFailed on duplicate ids or part names.
std::vector<json> merge_mixture(const std::vector<MixturePart>& parts, std::uint64_t seed);

// The DPO JSONL keys every mixture row must carry.
const std::vector<std::string>& dpo_fields();

// ---------------------------------------------------------------- difficulty

enum class SimilarityMetric { Overlap, Jaccard };

std::string to_string(SimilarityMetric m);
SimilarityMetric parse_similarity_metric(const std::string& s);

// Lowercased alphanumeric word set.
std::vector<std::string> word_set(const std::string& text);

// Overlap: |A ∩ B| / min(|A|, |B|). Jaccard: |A ∩ B| / |A ∪ B|. 0 when
// either side has no words.
double token_similarity(const std::string& a, const std::string& b,
                        SimilarityMetric metric = SimilarityMetric::Overlap);

inline constexpr double kDefaultHardThreshold = 0.6;

struct DifficultyEntry {
    std::string id;
    double similarity = 0.0;
    bool hard = false;
};

struct DifficultyReport {
    SimilarityMetric metric = SimilarityMetric::Overlap;
    double threshold = kDefaultHardThreshold;
    std::vector<DifficultyEntry> entries;
    std::vector<std::size_t> histogram;  // 10 bins over [0, 1]
    std::size_t hard = 0;
};

// A pair is hard when its similarity is strictly above the threshold.
DifficultyReport difficulty_probe(const std::vector<PreferenceRecord>& pairs,
                                  double threshold = kDefaultHardThreshold,
                                  SimilarityMetric metric = SimilarityMetric::Overlap);

json to_json(const DifficultyReport& r);

}  // namespace timewarp
