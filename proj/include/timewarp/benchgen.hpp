#pragma once

#include <optional>
#include <string>
#include <vector>

#include "timewarp/datasets.hpp"

namespace timewarp {

enum class Split { Normal, Shuffled };

std::string to_string(Split s);
Split parse_split(const std::string& s);

struct BenchmarkItem {
    std::string id;
    std::string video_path;
    Split split = Split::Normal;
    std::string question;
    std::vector<std::string> options;
    std::size_t answer_index = 0;
    std::optional<std::string> perm_ref;

    bool operator==(const BenchmarkItem&) const = default;
};

json to_json(const BenchmarkItem& item);
BenchmarkItem benchmark_item_from_json(const json& j);

struct McqaSource {
    const VideoRecord* record = nullptr;
    ClipSpec clip;
    std::optional<ScenePermutation> perm;  // no perm: normal split only
    std::string video_path;
    std::string shuffled_video_path;
};

// Normal items come from the original narrative. For videos with a
// permutation, each normal question is re-keyed against the permuted
// narrative with the same options; items whose options come back changed are
// dropped. Output: per video, normal items then shuffled items.
Built<BenchmarkItem> build_mcqa_benchmark(const std::vector<McqaSource>& videos, LlmClient& gen,
                                          const PromptLibrary& prompts, const GenSettings& settings = {});

// ---------------------------------------------------------------- probes

enum class OrderCategory { Near, ModeratelyFar, VeryFar };
enum class OrderSubtype { Before, After };

std::string to_string(OrderCategory c);
std::string to_string(OrderSubtype s);
OrderCategory parse_order_category(const std::string& s);
OrderSubtype parse_order_subtype(const std::string& s);

inline constexpr OrderCategory kOrderCategories[] = {OrderCategory::Near, OrderCategory::ModeratelyFar,
                                                     OrderCategory::VeryFar};
inline constexpr OrderSubtype kOrderSubtypes[] = {OrderSubtype::Before, OrderSubtype::After};

// near 1, moderately_far 2, very_far >= 3
std::size_t min_hops(OrderCategory c);
// Nominal time bin [lo, hi) in seconds; hi is infinite for very_far.
std::pair<double, double> nominal_bin(OrderCategory c);

struct OrderStatement {
    std::string id;
    std::string video_path;
    std::string pair_id;
    OrderCategory category = OrderCategory::Near;
    OrderSubtype subtype = OrderSubtype::Before;
    std::string statement;
    bool label = false;  // true = "yes"
    std::size_t hop_distance = 0;
    double time_separation_s = 0.0;

    bool operator==(const OrderStatement&) const = default;
};

json to_json(const OrderStatement& s);
OrderStatement order_statement_from_json(const json& j);

// "In the video, {a} happens {before|after} {b}."
std::string order_statement_text(const std::string& a, bool before, const std::string& b);

struct ProbeCoverage {
    OrderCategory category;
    OrderSubtype subtype;
    bool present = false;
};

struct ProbeBuild {
    std::vector<OrderStatement> statements;
    std::vector<ProbeCoverage> coverage;  // 6 entries
    std::vector<std::string> warnings;    // separation outside nominal bin
};

// Middle caption m = n / 2; each (category, subtype) gets one partner at the
// category's hop distance, chosen with a seed derived from (seed, video).
// Throws TooFewScenes below 4 captions.
ProbeBuild build_order_probes(const VideoRecord& record, const std::string& video_path, std::uint64_t seed);

struct ProbeSelection {
    std::vector<const VideoRecord*> records;  // sorted by video_id
    std::size_t eligible = 0;
    std::optional<std::string> warning;
};

ProbeSelection select_probe_videos(const Corpus& corpus, std::size_t n = 500, std::size_t min_captions = 4,
                                   std::uint64_t seed = 0);

}  // namespace timewarp
