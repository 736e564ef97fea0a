#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "timewarp/corpus.hpp"

namespace timewarp {

inline constexpr double kDefaultMaxClipS = 105.0;
inline constexpr std::size_t kDefaultMinScenes = 2;

// A trimmed clip: always a prefix of the source scene list, cut at a scene
// boundary. Clips forced past the duration cap by the minimum-scene rule are
// kept and flagged `over_budget`.
struct ClipSpec {
    std::string video_id;
    std::vector<std::size_t> kept_scene_indices;
    double trim_end_s = 0.0;
    double clip_duration_s = 0.0;
    bool over_budget = false;

    std::size_t scene_count() const { return kept_scene_indices.size(); }
    bool operator==(const ClipSpec&) const = default;
};

ClipSpec trim_video(const VideoRecord& record, double max_s = kDefaultMaxClipS,
                    std::size_t min_scenes = kDefaultMinScenes);

struct TrimOutcome {
    std::vector<ClipSpec> clips;
    std::vector<std::string> excluded;  // video ids with too few scenes
    std::size_t over_budget = 0;
};

TrimOutcome trim_corpus(const Corpus& corpus, double max_s = kDefaultMaxClipS,
                        std::size_t min_scenes = kDefaultMinScenes);

struct CompositeCaption {
    std::string video_id;
    std::vector<std::pair<std::size_t, std::string>> ordered_captions;
    std::string rendered;

    std::vector<std::string> captions() const;
};

// Renders captions in `order` as "First, A Then, B ... Finally, Z". Two
// captions use First/Then; a single caption is just "First, A".
CompositeCaption build_composite_caption(const VideoRecord& record,
                                         const std::vector<std::size_t>& order);

// Inverse of the rendering template. Captions containing the marker text
// (" Then, " / " Finally, ") are ambiguous and are not round-trippable.
std::vector<std::string> parse_composite_caption(const std::string& rendered);

struct StatsReport {
    std::size_t total_videos = 0;
    double avg_scenes_per_clip = 0.0;
    double avg_scene_duration_s = 0.0;
    std::size_t total_qa_pairs = 0;
    std::size_t shuffled = 0;
    std::size_t reversed = 0;
    std::size_t excluded = 0;
    std::size_t over_budget = 0;
};

// `scene_durations` is keyed by video id and lists the durations of the kept
// scenes; videos without an entry contribute no duration samples.
StatsReport corpus_stats(const std::vector<ClipSpec>& clips,
                         const std::map<std::string, std::size_t>& qa_counts,
                         const std::map<std::string, std::vector<double>>& scene_durations = {},
                         std::size_t shuffled = 0, std::size_t reversed = 0);

json to_json(const StatsReport& report);
// Two aligned tables: counts (videos / clips per video / clip duration / QA
// pairs) and the shuffled / reversed breakdown.
std::string render_stats_table(const StatsReport& report, const std::string& label = "Ours");

// 30000 -> "30k", 10500 -> "10.5k", 2617 -> "2617".
std::string compact_count(std::size_t n);

json to_json(const ClipSpec& clip);
ClipSpec clip_spec_from_json(const json& j);

}  // namespace timewarp
