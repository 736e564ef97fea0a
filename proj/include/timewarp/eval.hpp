#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "timewarp/benchgen.hpp"

namespace timewarp {

// One row of a predictions file: {"item_id": ..., "response": ...}.
struct RawPrediction {
    std::string item_id;
    std::string response;
};

std::vector<RawPrediction> load_predictions(const fs::path& path);
json to_json(const RawPrediction& p);

enum class ParseRoute { ExactText, Letter, YesNo, Unparsed };
std::string to_string(ParseRoute r);

struct Prediction {
    std::string item_id;
    std::string raw_response;
    std::optional<std::size_t> option;  // MCQA / A-B choices
    std::optional<bool> yes;            // binary statements
    ParseRoute route = ParseRoute::Unparsed;

    bool parsed() const { return route != ParseRoute::Unparsed; }
};

// Ladder: exact option text, then a leading letter (A-E, within range), then
// a leading yes/no token when `binary` is set; otherwise unparsed.
Prediction parse_choice(const std::string& item_id, const std::string& raw,
                        const std::vector<std::string>& options, bool binary);

Prediction parse_prediction(const std::string& raw, const BenchmarkItem& item);
Prediction parse_prediction(const std::string& raw, const OrderStatement& statement);

// Throws DuplicatePrediction when an item id repeats.
std::map<std::string, std::string> index_predictions(const std::vector<RawPrediction>& preds);

// ---------------------------------------------------------------- mcqa

struct SplitScore {
    std::size_t total = 0;
    std::size_t correct = 0;
    std::size_t missing = 0;
    std::size_t unparsed = 0;
    double accuracy = 0.0;  // percent; 0 when total is 0
};

struct AccuracyReport {
    std::map<std::string, SplitScore> splits;  // "normal", "shuffled"
    SplitScore overall;
    std::optional<double> normal_minus_shuffled;  // when both splits are present
    std::size_t unknown_predictions = 0;          // ids not in the benchmark
};

AccuracyReport score_mcqa(const std::vector<BenchmarkItem>& items, const std::vector<RawPrediction>& predictions);

json to_json(const AccuracyReport& r);
std::string render_accuracy_table(const AccuracyReport& r, const std::string& model = "model");

// ---------------------------------------------------------------- group

// Choices for one (V, V', X, A, A') quadruple. t1/t2: which answer the model
// matched to V / V'; v1/v2: which video it matched to A / A'.
struct QuadruplePrediction {
    std::string quad_id;
    int t1 = 0;
    int t2 = 0;
    int v1 = 0;
    int v2 = 0;
};

// Defaults: A is option 0, A' option 1, V video 0, V' video 1.
struct QuadTruth {
    int t1 = 0;
    int t2 = 1;
    int v1 = 0;
    int v2 = 1;
};

struct GroupScores {
    std::size_t quads = 0;
    double text = 0.0;  // percent
    double video = 0.0;
    double group = 0.0;
    std::size_t unparsed_fields = 0;
};

bool text_correct(const QuadruplePrediction& q, const QuadTruth& t);
bool video_correct(const QuadruplePrediction& q, const QuadTruth& t);
bool group_correct(const QuadruplePrediction& q, const QuadTruth& t);

// Throws InvalidInput on a field outside {0, 1}.
GroupScores score_group(const std::vector<QuadruplePrediction>& quads, const QuadTruth& truth = {});

// Item ids of the four forced choices of a quad: "<quad_id>:t1" etc.
std::vector<std::string> quad_item_ids(const std::string& quad_id);

// Builds quads from A/B predictions keyed by quad_item_ids. Missing or
// unparsed choices are set to the wrong answer and counted.
GroupScores score_group_predictions(const std::vector<std::string>& quad_ids,
                                    const std::vector<RawPrediction>& predictions, const QuadTruth& truth = {});

// Uniform independent guessing over `n` quads.
GroupScores random_group_baseline(std::size_t n, std::uint64_t seed);

// Reference value quoted for comparison only; the independence model gives
// 6.25 and is what random_group_baseline measures.
inline constexpr double kQuotedRandomGroupScore = 12.5;

json to_json(const GroupScores& g);

// ---------------------------------------------------------------- probes

struct GradeOptions {
    std::size_t subcategory_k = 3;  // of 4
    std::size_t category_num = 5;   // of 8
    std::size_t category_den = 8;
};

struct PassRate {
    std::size_t units = 0;
    std::size_t passed = 0;
    double rate = 0.0;  // percent
};

struct GradeReport {
    std::string model;
    std::map<std::string, PassRate> subcategories;  // "near/before", ...
    std::map<std::string, PassRate> categories;     // "near", ...
    PassRate subcategory_overall;
    PassRate category_overall;
    std::size_t statements = 0;
    std::size_t correct = 0;
    std::size_t missing = 0;
    std::size_t unparsed = 0;
};

// Subcategory unit: one pair_id (4 statements), passes with >= k correct.
// Category unit: one (video, category), passes when correct/total >= 5/8.
GradeReport grade_order_probes(const std::vector<OrderStatement>& statements,
                               const std::vector<RawPrediction>& predictions, const GradeOptions& options = {},
                               const std::string& model = "model");

struct SweepPoint {
    std::size_t k = 0;
    double pass_rate = 0.0;  // percent of pairs with >= k correct
};

std::vector<SweepPoint> strictness_sweep(const std::vector<OrderStatement>& statements,
                                         const std::vector<RawPrediction>& predictions);

json to_json(const GradeReport& r);
json to_json(const std::vector<SweepPoint>& sweep);
std::string render_grade_table(const GradeReport& r);

}  // namespace timewarp
