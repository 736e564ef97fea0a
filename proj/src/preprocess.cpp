#include "timewarp/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <fmt/format.h>

#include "timewarp/errors.hpp"

namespace timewarp {

ClipSpec trim_video(const VideoRecord& record, double max_s, std::size_t min_scenes) {
    if (record.scenes.size() < min_scenes) {
        throw TooFewScenes(fmt::format("{}: {} scene(s), need at least {}", record.video_id,
                                       record.scenes.size(), min_scenes));
    }
    std::size_t fit = 0;
    while (fit < record.scenes.size() && record.scenes[fit].end_s <= max_s) ++fit;

    ClipSpec clip;
    clip.video_id = record.video_id;
    std::size_t keep = fit;
    if (fit < min_scenes) {
        keep = min_scenes;
        clip.over_budget = true;
    }
    for (std::size_t i = 0; i < keep; ++i) clip.kept_scene_indices.push_back(i);
    clip.trim_end_s = std::min(record.scenes[keep - 1].end_s, record.duration_s);
    clip.clip_duration_s = clip.trim_end_s;
    // The duration slack allows a last scene to end slightly after the video.
    if (clip.clip_duration_s > max_s) clip.over_budget = true;
    return clip;
}

TrimOutcome trim_corpus(const Corpus& corpus, double max_s, std::size_t min_scenes) {
    TrimOutcome out;
    for (const auto& r : corpus.records) {
        try {
            out.clips.push_back(trim_video(r, max_s, min_scenes));
            if (out.clips.back().over_budget) ++out.over_budget;
        } catch (const TooFewScenes&) {
            out.excluded.push_back(r.video_id);
        }
    }
    return out;
}

std::vector<std::string> CompositeCaption::captions() const {
    std::vector<std::string> out;
    for (const auto& [_, c] : ordered_captions) out.push_back(c);
    return out;
}

CompositeCaption build_composite_caption(const VideoRecord& record,
                                         const std::vector<std::size_t>& order) {
    CompositeCaption cc;
    cc.video_id = record.video_id;
    std::vector<bool> used(record.scenes.size(), false);
    for (std::size_t idx : order) {
        if (idx >= record.scenes.size()) {
            throw InvalidOrder(fmt::format("{}: scene index {} out of range ({} scenes)",
                                           record.video_id, idx, record.scenes.size()));
        }
        if (used[idx]) {
            throw InvalidOrder(fmt::format("{}: scene index {} repeated", record.video_id, idx));
        }
        used[idx] = true;
        cc.ordered_captions.emplace_back(idx, record.scenes[idx].caption);
    }
    const std::size_t n = cc.ordered_captions.size();
    for (std::size_t i = 0; i < n; ++i) {
        const char* marker = "Then, ";
        if (i == 0) {
            marker = "First, ";
        } else if (i + 1 == n && n >= 3) {
            marker = "Finally, ";
        }
        if (i > 0) cc.rendered.push_back(' ');
        cc.rendered += marker;
        cc.rendered += cc.ordered_captions[i].second;
    }
    return cc;
}

std::vector<std::string> parse_composite_caption(const std::string& rendered) {
    static const std::string first = "First, ";
    if (rendered.rfind(first, 0) != 0) {
        throw InvalidOrder("composite caption does not start with 'First, '");
    }
    std::vector<std::string> out;
    std::size_t pos = first.size();
    while (true) {
        std::size_t then = rendered.find(" Then, ", pos);
        std::size_t fin = rendered.find(" Finally, ", pos);
        std::size_t next = std::min(then, fin);
        if (next == std::string::npos) {
            out.push_back(rendered.substr(pos));
            break;
        }
        out.push_back(rendered.substr(pos, next - pos));
        pos = next + (next == then ? std::string(" Then, ").size() : std::string(" Finally, ").size());
    }
    return out;
}

StatsReport corpus_stats(const std::vector<ClipSpec>& clips,
                         const std::map<std::string, std::size_t>& qa_counts,
                         const std::map<std::string, std::vector<double>>& scene_durations,
                         std::size_t shuffled, std::size_t reversed) {
    StatsReport s;
    s.total_videos = clips.size();
    s.shuffled = shuffled;
    s.reversed = reversed;
    double scene_sum = 0.0, duration_sum = 0.0;
    std::size_t duration_samples = 0;
    for (const auto& c : clips) {
        scene_sum += static_cast<double>(c.scene_count());
        if (c.over_budget) ++s.over_budget;
        auto it = scene_durations.find(c.video_id);
        if (it != scene_durations.end()) {
            for (double d : it->second) duration_sum += d;
            duration_samples += it->second.size();
        } else if (c.scene_count() > 0) {
            duration_sum += c.clip_duration_s;
            duration_samples += c.scene_count();
        }
    }
    for (const auto& [_, n] : qa_counts) s.total_qa_pairs += n;
    if (!clips.empty()) s.avg_scenes_per_clip = scene_sum / static_cast<double>(clips.size());
    if (duration_samples > 0) s.avg_scene_duration_s = duration_sum / static_cast<double>(duration_samples);
    return s;
}

json to_json(const StatsReport& r) {
    return {{"total_videos", r.total_videos},
            {"avg_scenes_per_clip", r.avg_scenes_per_clip},
            {"avg_scene_duration_s", r.avg_scene_duration_s},
            {"total_qa_pairs", r.total_qa_pairs},
            {"shuffled", r.shuffled},
            {"reversed", r.reversed},
            {"excluded", r.excluded},
            {"over_budget", r.over_budget}};
}

std::string compact_count(std::size_t n) {
    if (n < 10000) return std::to_string(n);
    std::string s = fmt::format("{:.1f}", static_cast<double>(n) / 1000.0);
    if (s.size() > 2 && s.substr(s.size() - 2) == ".0") s.resize(s.size() - 2);
    return s + "k";
}

namespace {

std::string trim_decimal(double v) {
    std::string s = fmt::format("{:.2f}", v);
    while (!s.empty() && s.back() == '0') s.pop_back();
    if (!s.empty() && s.back() == '.') s.pop_back();
    return s;
}


}  // namespace

std::string render_stats_table(const StatsReport& r, const std::string& label) {
    std::string counts = render_table({
        {"", "Total Videos", "Avg # of clips", "Clip Duration", "QA Pairs"},
        {label, compact_count(r.total_videos), trim_decimal(r.avg_scenes_per_clip),
         trim_decimal(r.avg_scene_duration_s) + "s", compact_count(r.total_qa_pairs)},
    });
    std::string kinds = render_table({
        {"", "Shuffled", "Reversed", "Pure Temporal"},
        {label, std::to_string(r.shuffled), std::to_string(r.reversed), "yes"},
    });
    return counts + "\n" + kinds + "\n" +
           fmt::format("excluded (too few scenes): {}\nover budget: {}\n", r.excluded, r.over_budget);
}

json to_json(const ClipSpec& c) {
    return {{"video_id", c.video_id},
            {"kept_scene_indices", c.kept_scene_indices},
            {"trim_end_s", c.trim_end_s},
            {"clip_duration_s", c.clip_duration_s},
            {"over_budget", c.over_budget}};
}

ClipSpec clip_spec_from_json(const json& j) {
    try {
        ClipSpec c;
        c.video_id = j.at("video_id").get<std::string>();
        c.kept_scene_indices = j.at("kept_scene_indices").get<std::vector<std::size_t>>();
        c.trim_end_s = j.at("trim_end_s").get<double>();
        c.clip_duration_s = j.at("clip_duration_s").get<double>();
        c.over_budget = j.value("over_budget", false);
        return c;
    } catch (const json::exception& e) {
        throw SchemaMismatch(std::string("clip spec: ") + e.what());
    }
}

}  // namespace timewarp
