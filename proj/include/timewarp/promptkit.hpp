#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "timewarp/util.hpp"

namespace timewarp {

// A prompt asset. On disk: a header line "required: [a, b]" followed by the
// body. `{name}` is a placeholder; `{{` and `}}` are literal braces.
struct PromptTemplate {
    std::string template_id;
    std::string body;
    std::set<std::string> required_placeholders;
};

PromptTemplate parse_template(const std::string& template_id, const std::string& text);

// Placeholder names used in the body, in order of first appearance.
std::vector<std::string> placeholders_in(const std::string& body);

class PromptLibrary {
public:
    // Loads every "<template_id>.txt" in `dir`.
    static PromptLibrary load(const fs::path& dir);
    // Directory baked in at build time, overridable with TIMEWARP_PROMPT_DIR.
    static fs::path default_dir();
    static const PromptLibrary& shared_default();

    void add(PromptTemplate t);
    bool has(const std::string& template_id) const;
    const PromptTemplate& get(const std::string& template_id) const;
    std::vector<std::string> ids() const;

    // Throws UnknownTemplate or MissingPlaceholder (naming it).
    std::string render(const std::string& template_id, const std::map<std::string, std::string>& values) const;

private:
    std::map<std::string, PromptTemplate> templates_;
};

inline constexpr int kHallucinationPromptCount = 7;
std::string hallucination_template_id(int k);  // k in 1..7

// Generator / subject-model template ids.
namespace templates {
inline constexpr const char* kOpenEndedQa = "oe_qa_gen";
inline constexpr const char* kMcqa = "mcqa_gen";
inline constexpr const char* kDispreferred = "dispreferred_gen";
inline constexpr const char* kShuffledOptionSelect = "shuffled_option_select";
inline constexpr const char* kDescribe = "mut_describe";
inline constexpr const char* kEvalMcqa = "eval_mcqa";
inline constexpr const char* kEvalBinary = "eval_binary";
inline constexpr const char* kEvalCaptionMatch = "eval_caption_match";
inline constexpr const char* kEvalVideoMatch = "eval_video_match";
}  // namespace templates

enum class TemporalRelation { After, Before, Beginning, End, Between };

std::string to_string(TemporalRelation r);
std::optional<TemporalRelation> parse_relation(const std::string& s);

struct OpenEndedQA {
    std::string question;
    std::string answer;
    TemporalRelation target_relation = TemporalRelation::After;

    bool operator==(const OpenEndedQA&) const = default;
};

struct McqaItem {
    std::string question;
    std::vector<std::string> options;
    std::size_t answer_index = 0;
    std::vector<std::string> distractor_kinds;

    bool operator==(const McqaItem&) const = default;
};

template <typename T>
struct Parsed {
    std::vector<T> items;
    std::vector<std::string> dropped;  // one diagnostic per rejected item
};

// Both throw ParseFailure (carrying the raw text) when no envelope can be
// decoded; invalid items are dropped with a diagnostic.
Parsed<OpenEndedQA> parse_oe_qa(const std::string& response);
Parsed<McqaItem> parse_mcqa(const std::string& response);

// Extracts the {"items": [...]} object from a response, tolerating code fences
// and surrounding prose.
json extract_envelope(const std::string& response);

std::string to_envelope(const std::vector<OpenEndedQA>& items);
std::string to_envelope(const std::vector<McqaItem>& items);

// True when the question contains a temporal relation word.
bool mentions_temporal_relation(const std::string& question);

// "A. first\nB. second\n..." as used in the option-list placeholders.
std::string render_options(const std::vector<std::string>& options);

}  // namespace timewarp
