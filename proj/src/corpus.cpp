#include "timewarp/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <fmt/format.h>

#include "timewarp/errors.hpp"

namespace timewarp {

namespace {

// Thrown while decoding a single record; converted into a Diagnostic.
struct FieldError {
    std::string field;
    std::string reason;
};

double number_field(const json& obj, const char* key, const std::string& field) {
    auto it = obj.find(key);
    if (it == obj.end()) throw FieldError{field, "missing"};
    if (!it->is_number()) throw FieldError{field, "not a number"};
    double v = it->get<double>();
    if (!std::isfinite(v)) throw FieldError{field, "not finite"};
    return v;
}

std::string string_field(const json& obj, const char* key, const std::string& field) {
    auto it = obj.find(key);
    if (it == obj.end()) throw FieldError{field, "missing"};
    if (!it->is_string()) throw FieldError{field, "not a string"};
    return it->get<std::string>();
}

VideoRecord decode_canonical(const json& j) {
    if (!j.is_object()) throw FieldError{"<record>", "not a JSON object"};
    VideoRecord r;
    r.video_id = string_field(j, "video_id", "video_id");
    r.media_path = string_field(j, "media_path", "media_path");
    r.duration_s = number_field(j, "duration_s", "duration_s");
    auto it = j.find("scenes");
    if (it == j.end() || !it->is_array()) throw FieldError{"scenes", "missing or not an array"};
    for (std::size_t i = 0; i < it->size(); ++i) {
        const auto& s = (*it)[i];
        std::string prefix = fmt::format("scenes[{}]", i);
        if (!s.is_object()) throw FieldError{prefix, "not a JSON object"};
        Scene scene;
        scene.index = i;
        scene.start_s = number_field(s, "start_s", prefix + ".start_s");
        scene.end_s = number_field(s, "end_s", prefix + ".end_s");
        scene.caption = string_field(s, "caption", prefix + ".caption");
        r.scenes.push_back(std::move(scene));
    }
    return r;
}

// ------------------------------------------------------------- FineVideo

double timestamp_value(const json& v, const std::string& field) {
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
        try {
            return parse_timestamp(v.get<std::string>());
        } catch (const std::exception&) {
            throw FieldError{field, "unparseable timestamp '" + v.get<std::string>() + "'"};
        }
    }
    throw FieldError{field, "missing"};
}

std::string join_text(const json& v) {
    if (v.is_string()) return trim(v.get<std::string>());
    std::vector<std::string> parts;
    if (v.is_array()) {
        for (const auto& e : v) {
            std::string piece;
            if (e.is_string()) {
                piece = e.get<std::string>();
            } else if (e.is_object() && e.contains("description") && e["description"].is_string()) {
                piece = e["description"].get<std::string>();
            }
            piece = trim(piece);
            if (!piece.empty()) parts.push_back(piece);
        }
    }
    std::string out;
    for (const auto& p : parts) {
        if (!out.empty()) out.push_back(' ');
        out += p;
        // Activity descriptions are sentences; make sure the joined caption reads as such.
        if (out.back() != '.' && out.back() != '!' && out.back() != '?') out.push_back('.');
    }
    return out;
}

std::string scene_caption(const json& scene, const IngestOptions& opt) {
    for (const auto& key : {opt.caption_field, opt.caption_fallback}) {
        if (key.empty()) continue;
        auto it = scene.find(key);
        if (it == scene.end()) continue;
        std::string text = join_text(*it);
        if (!text.empty()) return text;
    }
    return {};
}

const json* find_path(const json& obj, std::initializer_list<const char*> keys) {
    const json* cur = &obj;
    for (const char* k : keys) {
        if (!cur->is_object()) return nullptr;
        auto it = cur->find(k);
        if (it == cur->end()) return nullptr;
        cur = &*it;
    }
    return cur;
}

VideoRecord decode_finevideo(const json& j, const fs::path& source_file, const IngestOptions& opt) {
    if (!j.is_object()) throw FieldError{"<record>", "not a JSON object"};
    VideoRecord r;
    const fs::path stem = source_file.stem();
    if (auto* v = find_path(j, {"video_id"}); v && v->is_string()) {
        r.video_id = v->get<std::string>();
    } else if (auto* v2 = find_path(j, {"original_video_filename"}); v2 && v2->is_string()) {
        r.video_id = fs::path(v2->get<std::string>()).stem().string();
    } else {
        r.video_id = stem.string();
    }

    if (auto* v = find_path(j, {"media_path"}); v && v->is_string()) {
        r.media_path = v->get<std::string>();
    } else if (auto* v2 = find_path(j, {"video_path"}); v2 && v2->is_string()) {
        r.media_path = v2->get<std::string>();
    } else {
        // relative to the annotation directory
        auto* orig = find_path(j, {"original_video_filename"});
        r.media_path = orig && orig->is_string() ? orig->get<std::string>() : r.video_id + ".mp4";
    }

    const json* scenes = find_path(j, {"content_metadata", "scenes"});
    if (!scenes) scenes = find_path(j, {"scenes"});
    if (!scenes || !scenes->is_array()) throw FieldError{"scenes", "missing or not an array"};

    for (std::size_t i = 0; i < scenes->size(); ++i) {
        const auto& s = (*scenes)[i];
        std::string prefix = fmt::format("scenes[{}]", i);
        if (!s.is_object()) throw FieldError{prefix, "not a JSON object"};
        Scene scene;
        scene.index = i;
        const json* ts = find_path(s, {"timestamps"});
        const json& holder = ts ? *ts : s;
        auto start = holder.find("start_timestamp");
        auto end = holder.find("end_timestamp");
        scene.start_s = timestamp_value(start != holder.end() ? *start : json(), prefix + ".start_s");
        scene.end_s = timestamp_value(end != holder.end() ? *end : json(), prefix + ".end_s");
        scene.caption = scene_caption(s, opt);
        r.scenes.push_back(std::move(scene));
    }

    const json* dur = find_path(j, {"duration_seconds"});
    if (!dur) dur = find_path(j, {"duration_s"});
    if (!dur) dur = find_path(j, {"metadata", "duration_seconds"});
    if (dur && dur->is_number()) {
        r.duration_s = dur->get<double>();
    } else if (!r.scenes.empty()) {
        r.duration_s = r.scenes.back().end_s;
    }
    return r;
}

struct Candidate {
    VideoRecord record;
    std::string origin;  // for diagnostics when no id is known
};

void push_decoded(std::vector<Candidate>& out, std::vector<Diagnostic>& rejected,
                  const std::string& origin, auto&& decode) {
    try {
        out.push_back({decode(), origin});
    } catch (const FieldError& e) {
        rejected.push_back({origin, e.field, e.reason});
    }
}

}  // namespace

const VideoRecord* Corpus::find(const std::string& video_id) const {
    auto it = std::lower_bound(records.begin(), records.end(), video_id,
                               [](const VideoRecord& r, const std::string& id) { return r.video_id < id; });
    if (it != records.end() && it->video_id == video_id) return &*it;
    // Corpora built by hand may not be sorted.
    for (const auto& r : records) {
        if (r.video_id == video_id) return &r;
    }
    return nullptr;
}

std::size_t ValidationReport::failures() const {
    return static_cast<std::size_t>(
        std::count_if(records.begin(), records.end(), [](const RecordVerdict& v) { return !v.ok; }));
}

std::vector<Diagnostic> ValidationReport::all_diagnostics() const {
    std::vector<Diagnostic> out;
    for (const auto& r : records) out.insert(out.end(), r.diagnostics.begin(), r.diagnostics.end());
    return out;
}

CorpusFormat parse_corpus_format(const std::string& name) {
    if (name == "finevideo-json") return CorpusFormat::FineVideoJson;
    if (name == "canonical-jsonl") return CorpusFormat::CanonicalJsonl;
    throw ConfigError("unknown corpus format '" + name + "' (expected finevideo-json or canonical-jsonl)");
}

std::string to_string(CorpusFormat f) {
    return f == CorpusFormat::FineVideoJson ? "finevideo-json" : "canonical-jsonl";
}

double parse_timestamp(const std::string& text) {
    std::string t = trim(text);
    if (t.empty()) throw std::invalid_argument("empty timestamp");
    double total = 0.0;
    std::size_t pos = 0;
    int fields = 0;
    while (true) {
        auto colon = t.find(':', pos);
        std::string part = t.substr(pos, colon == std::string::npos ? std::string::npos : colon - pos);
        std::size_t used = 0;
        double v = std::stod(part, &used);
        if (used != part.size() || v < 0) throw std::invalid_argument("bad timestamp " + text);
        total = total * 60.0 + v;
        if (++fields > 3) throw std::invalid_argument("bad timestamp " + text);
        if (colon == std::string::npos) break;
        pos = colon + 1;
    }
    return total;
}

std::vector<Diagnostic> validate_record(const VideoRecord& r) {
    std::vector<Diagnostic> d;
    auto fail = [&](std::string field, std::string reason) {
        d.push_back({r.video_id, std::move(field), std::move(reason)});
    };
    if (trim(r.video_id).empty()) fail("video_id", "empty");
    if (r.scenes.empty()) {
        fail("scenes", "no scenes");
        return d;
    }
    for (std::size_t i = 0; i < r.scenes.size(); ++i) {
        const auto& s = r.scenes[i];
        std::string prefix = fmt::format("scenes[{}]", i);
        if (s.start_s < 0) fail(prefix + ".start_s", fmt::format("negative start {}", s.start_s));
        if (!(s.start_s < s.end_s)) {
            fail(prefix + ".end_s", fmt::format("end_s {} not after start_s {}", s.end_s, s.start_s));
        }
        if (trim(s.caption).empty()) fail(prefix + ".caption", "empty caption");
        if (i + 1 < r.scenes.size()) {
            const auto& next = r.scenes[i + 1];
            if (next.start_s < s.start_s) {
                fail(fmt::format("scenes[{}]/scenes[{}]", i, i + 1), "scenes not sorted by start_s");
            } else if (s.end_s > next.start_s + kSceneOverlapSlackS) {
                fail(fmt::format("scenes[{}]/scenes[{}]", i, i + 1),
                     fmt::format("overlap: end_s {} > next start_s {} + {} s slack", s.end_s,
                                 next.start_s, kSceneOverlapSlackS));
            }
        }
    }
    if (r.duration_s < r.scenes.back().end_s - kDurationSlackS) {
        fail("duration_s", fmt::format("duration {} shorter than last scene end {}", r.duration_s,
                                       r.scenes.back().end_s));
    }
    return d;
}

ValidationReport validate_corpus(const Corpus& corpus) {
    ValidationReport report;
    std::map<std::string, std::size_t> seen;
    for (const auto& r : corpus.records) {
        RecordVerdict v;
        v.video_id = r.video_id;
        v.diagnostics = validate_record(r);
        if (++seen[r.video_id] == 2) {
            v.diagnostics.push_back({r.video_id, "video_id", "duplicate video_id"});
        }
        v.ok = v.diagnostics.empty();
        report.records.push_back(std::move(v));
    }
    return report;
}

IngestResult load_corpus(const fs::path& path, CorpusFormat format, const IngestOptions& options) {
    if (!fs::exists(path)) {
        throw CorpusIoError("corpus path does not exist: " + path.string());
    }
    IngestResult result;
    std::vector<Candidate> candidates;

    if (format == CorpusFormat::CanonicalJsonl) {
        std::vector<fs::path> files;
        if (fs::is_directory(path)) {
            for (const auto& e : fs::directory_iterator(path)) {
                if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
            }
            std::sort(files.begin(), files.end());
        } else {
            files.push_back(path);
        }
        for (const auto& file : files) {
            std::size_t line_no = 0;
            for (const auto& line : split_lines(read_file(file))) {
                ++line_no;
                if (trim(line).empty()) continue;
                std::string origin = fmt::format("{}:{}", file.filename().string(), line_no);
                json j;
                try {
                    j = json::parse(line);
                } catch (const json::parse_error& e) {
                    result.rejected.push_back({origin, "<line>", std::string("invalid JSON: ") + e.what()});
                    continue;
                }
                if (j.is_object() && j.contains("video_id") && j["video_id"].is_string()) {
                    origin = j["video_id"].get<std::string>();
                }
                push_decoded(candidates, result.rejected, origin, [&] { return decode_canonical(j); });
            }
        }
    } else {
        std::vector<fs::path> files;
        if (fs::is_directory(path)) {
            for (const auto& e : fs::directory_iterator(path)) {
                if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
            }
            std::sort(files.begin(), files.end());
        } else {
            files.push_back(path);
        }
        for (const auto& file : files) {
            json doc;
            try {
                doc = json::parse(read_file(file));
            } catch (const json::parse_error& e) {
                result.rejected.push_back({file.filename().string(), "<file>",
                                           std::string("invalid JSON: ") + e.what()});
                continue;
            }
            if (doc.is_array()) {
                for (std::size_t i = 0; i < doc.size(); ++i) {
                    std::string origin = fmt::format("{}[{}]", file.filename().string(), i);
                    push_decoded(candidates, result.rejected, origin,
                                 [&] { return decode_finevideo(doc[i], file, options); });
                }
            } else {
                push_decoded(candidates, result.rejected, file.filename().string(),
                             [&] { return decode_finevideo(doc, file, options); });
            }
        }
    }

    std::set<std::string> ids;
    for (auto& c : candidates) {
        auto diags = validate_record(c.record);
        if (!ids.insert(c.record.video_id).second) {
            diags.push_back({c.record.video_id, "video_id", "duplicate video_id"});
        }
        if (!diags.empty()) {
            result.rejected.insert(result.rejected.end(), diags.begin(), diags.end());
            continue;
        }
        result.corpus.records.push_back(std::move(c.record));
    }
    if (result.corpus.records.empty()) {
        throw CorpusEmpty("no valid records in " + path.string() + " (" +
                          std::to_string(result.rejected.size()) + " diagnostics)");
    }
    std::sort(result.corpus.records.begin(), result.corpus.records.end(),
              [](const VideoRecord& a, const VideoRecord& b) { return a.video_id < b.video_id; });
    result.corpus.source_name = path.filename().string();
    result.corpus.manifest_digest = file_set_digest(path);
    return result;
}

json to_json(const VideoRecord& r) {
    json scenes = json::array();
    for (const auto& s : r.scenes) {
        scenes.push_back({{"start_s", s.start_s}, {"end_s", s.end_s}, {"caption", s.caption}});
    }
    return {{"video_id", r.video_id},
            {"media_path", r.media_path},
            {"duration_s", r.duration_s},
            {"scenes", std::move(scenes)}};
}

VideoRecord video_record_from_json(const json& j) {
    try {
        return decode_canonical(j);
    } catch (const FieldError& e) {
        throw SchemaMismatch("video record field " + e.field + ": " + e.reason);
    }
}

std::string serialize_canonical(const Corpus& corpus) {
    std::string out;
    for (const auto& r : corpus.records) {
        out += to_json(r).dump();
        out.push_back('\n');
    }
    return out;
}

void save_canonical(const Corpus& corpus, const fs::path& path) {
    write_file(path, serialize_canonical(corpus));
}

}  // namespace timewarp
