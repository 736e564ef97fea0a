#pragma once

#include <string>
#include <vector>

#include "timewarp/util.hpp"

namespace timewarp {

// Slack tolerated between consecutive scenes (end of one may exceed the start
// of the next by this much) and between the last scene and the duration.
inline constexpr double kSceneOverlapSlackS = 0.5;
inline constexpr double kDurationSlackS = 1.0;

struct Scene {
    std::size_t index = 0;
    double start_s = 0.0;
    double end_s = 0.0;
    std::string caption;

    double duration() const { return end_s - start_s; }
    double midpoint() const { return 0.5 * (start_s + end_s); }
    bool operator==(const Scene&) const = default;
};

struct VideoRecord {
    std::string video_id;
    std::string media_path;
    double duration_s = 0.0;
    std::vector<Scene> scenes;

    bool operator==(const VideoRecord&) const = default;
};

struct Corpus {
    std::vector<VideoRecord> records;  // sorted by video_id
    std::string source_name;
    std::string manifest_digest;

    const VideoRecord* find(const std::string& video_id) const;
    bool operator==(const Corpus&) const = default;
};

struct Diagnostic {
    std::string video_id;
    std::string field;
    std::string reason;

    bool operator==(const Diagnostic&) const = default;
};

struct RecordVerdict {
    std::string video_id;
    bool ok = true;
    std::vector<Diagnostic> diagnostics;
};

struct ValidationReport {
    std::vector<RecordVerdict> records;

    std::size_t failures() const;
    std::vector<Diagnostic> all_diagnostics() const;
};

enum class CorpusFormat { FineVideoJson, CanonicalJsonl };

CorpusFormat parse_corpus_format(const std::string& name);
std::string to_string(CorpusFormat f);

struct IngestOptions {
    // FineVideo scene field used as the caption. "activities" joins the
    // activity descriptions; any other name is read as a string (or a list of
    // strings / objects with "description") from the scene object. When the
    // selected field is absent or empty, `caption_fallback` is tried.
    std::string caption_field = "activities";
    std::string caption_fallback = "title";
};

struct IngestResult {
    Corpus corpus;
    std::vector<Diagnostic> rejected;
};

// Reads a corpus, rejecting invalid records individually. Throws CorpusEmpty
// when nothing survives and CorpusIoError when the path cannot be read.
IngestResult load_corpus(const fs::path& path, CorpusFormat format,
                         const IngestOptions& options = {});

std::vector<Diagnostic> validate_record(const VideoRecord& record);
ValidationReport validate_corpus(const Corpus& corpus);

json to_json(const VideoRecord& record);
VideoRecord video_record_from_json(const json& j);

// canonical-jsonl, one record per line in corpus order.
std::string serialize_canonical(const Corpus& corpus);
void save_canonical(const Corpus& corpus, const fs::path& path);

// "HH:MM:SS(.fff)", "MM:SS(.fff)" or plain seconds.
double parse_timestamp(const std::string& text);

}  // namespace timewarp
