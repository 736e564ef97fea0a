#include "timewarp/datasets.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>

#include <fmt/format.h>

#include "timewarp/errors.hpp"

namespace timewarp {

std::string to_string(RecordSource s) {
    switch (s) {
        case RecordSource::Explicit: return "explicit";
        case RecordSource::ImplicitPrompt: return "implicit_prompt";
        case RecordSource::ImplicitFrame: return "implicit_frame";
        case RecordSource::External: return "external";
    }
    return "explicit";
}

RecordSource parse_record_source(const std::string& s) {
    if (s == "explicit") return RecordSource::Explicit;
    if (s == "implicit_prompt") return RecordSource::ImplicitPrompt;
    if (s == "implicit_frame") return RecordSource::ImplicitFrame;
    if (s == "external") return RecordSource::External;
    throw SchemaMismatch("unknown record source '" + s + "'");
}

std::string to_string(KtoOrigin o) { return o == KtoOrigin::Original ? "original" : "shuffled"; }

std::vector<std::string> check_preference_record(const PreferenceRecord& r) {
    std::vector<std::string> out;
    if (r.chosen == r.rejected) out.push_back("chosen equals rejected");
    if (r.source == RecordSource::Explicit) {
        if (!r.shuffled_video_path) out.push_back("explicit record without shuffled_video_path");
        if (!r.perm_kind) out.push_back("explicit record with perm_kind none");
    }
    if (r.source == RecordSource::ImplicitFrame && !r.perturbation) {
        out.push_back("implicit_frame record without perturbation");
    }
    return out;
}

json to_json(const PreferenceRecord& r) {
    json j = {{"id", r.id},
              {"video_path", r.video_path},
              {"shuffled_video_path", r.shuffled_video_path ? json(*r.shuffled_video_path) : json(nullptr)},
              {"prompt", r.prompt},
              {"chosen", r.chosen},
              {"rejected", r.rejected},
              {"source", to_string(r.source)},
              {"perm_kind", r.perm_kind ? to_string(*r.perm_kind) : std::string("none")}};
    if (r.perturbation) j["perturbation"] = to_json(*r.perturbation);
    return j;
}

PreferenceRecord preference_record_from_json(const json& j) {
    try {
        PreferenceRecord r;
        r.id = j.at("id").get<std::string>();
        r.video_path = j.at("video_path").get<std::string>();
        if (const auto& s = j.at("shuffled_video_path"); !s.is_null()) r.shuffled_video_path = s.get<std::string>();
        r.prompt = j.at("prompt").get<std::string>();
        r.chosen = j.at("chosen").get<std::string>();
        r.rejected = j.at("rejected").get<std::string>();
        r.source = parse_record_source(j.at("source").get<std::string>());
        if (auto pk = j.at("perm_kind").get<std::string>(); pk != "none") r.perm_kind = parse_perm_kind(pk);
        if (j.contains("perturbation") && !j["perturbation"].is_null()) {
            r.perturbation = perturbation_spec_from_json(j["perturbation"]);
        }
        return r;
    } catch (const json::exception& e) {
        throw SchemaMismatch(std::string("bad DPO row: ") + e.what());
    }
}

json to_json(const KtoRecord& r) {
    return {{"id", r.id},
            {"dpo_id", r.dpo_id},
            {"video_path", r.video_path},
            {"prompt", r.prompt},
            {"completion", r.completion},
            {"label", r.label},
            {"origin", to_string(r.origin)}};
}

KtoRecord kto_record_from_json(const json& j) {
    try {
        KtoRecord r;
        r.id = j.at("id").get<std::string>();
        r.dpo_id = j.at("dpo_id").get<std::string>();
        r.video_path = j.at("video_path").get<std::string>();
        r.prompt = j.at("prompt").get<std::string>();
        r.completion = j.at("completion").get<std::string>();
        r.label = j.at("label").get<bool>();
        auto o = j.at("origin").get<std::string>();
        if (o != "original" && o != "shuffled") throw SchemaMismatch("unknown KTO origin '" + o + "'");
        r.origin = o == "original" ? KtoOrigin::Original : KtoOrigin::Shuffled;
        return r;
    } catch (const json::exception& e) {
        throw SchemaMismatch(std::string("bad KTO row: ") + e.what());
    }
}

json to_json(const SftRecord& r) {
    return {{"id", r.id}, {"video_path", r.video_path}, {"prompt", r.prompt}, {"response", r.response}};
}

SftRecord sft_record_from_json(const json& j) {
    try {
        return {j.at("id").get<std::string>(), j.at("video_path").get<std::string>(),
                j.at("prompt").get<std::string>(), j.at("response").get<std::string>()};
    } catch (const json::exception& e) {
        throw SchemaMismatch(std::string("bad SFT row: ") + e.what());
    }
}

// ---------------------------------------------------------------- explicit

namespace {

GenRequest make_request(std::string prompt, std::vector<std::string> attachments, const GenSettings& s) {
    GenRequest r;
    r.prompt = std::move(prompt);
    r.attachments = std::move(attachments);
    r.model_id = s.model_id;
    r.temperature = s.temperature;
    r.max_tokens = s.max_tokens;
    return r;
}

std::string preference_prompt(const std::string& question) { return question + "\n" + kAnswerInstruction; }

}  // namespace

Parsed<OpenEndedQA> generate_oe_qa(const CompositeCaption& original, LlmClient& gen, const PromptLibrary& prompts,
                                   const GenSettings& settings) {
    std::string prompt = prompts.render(templates::kOpenEndedQa, {{"composite_caption", original.rendered}});
    auto resp = gen.generate(make_request(prompt, {}, settings));
    return parse_oe_qa(resp.text);
}

Built<PreferenceRecord> build_explicit_pairs(const ExplicitInputs& in, const std::vector<OpenEndedQA>& qa,
                                             LlmClient& gen, const PromptLibrary& prompts,
                                             const GenSettings& settings) {
    if (!in.record || !in.clip || !in.perm || !in.original || !in.permuted) {
        throw PreconditionFailed("build_explicit_pairs: missing input");
    }
    if (in.perm->video_id != in.record->video_id || in.clip->video_id != in.record->video_id) {
        throw PreconditionFailed("build_explicit_pairs: clip/permutation belong to another video");
    }
    const std::string& vid = in.record->video_id;
    Built<PreferenceRecord> out;
    std::set<std::string> seen;
    for (std::size_t i = 0; i < qa.size(); ++i) {
        const auto& item = qa[i];
        auto field = fmt::format("qa[{}]", i);
        std::string prompt = prompts.render(templates::kDispreferred, {{"composite_caption", in.permuted->rendered},
                                                                        {"question", item.question}});
        std::string rejected;
        try {
            auto resp = gen.generate(make_request(prompt, {}, settings));
            auto parsed = parse_oe_qa(resp.text);
            if (parsed.items.empty()) {
                out.diagnostics.push_back({vid, field, "generator returned no usable answer"});
                continue;
            }
            rejected = parsed.items.front().answer;
        } catch (const ParseFailure& e) {
            out.diagnostics.push_back({vid, field, std::string("ParseFailure: ") + e.what()});
            continue;
        }
        PreferenceRecord r;
        r.id = content_id({vid, item.question, "explicit"});
        r.video_path = in.video_path;
        r.shuffled_video_path = in.shuffled_video_path;
        r.prompt = preference_prompt(item.question);
        r.chosen = item.answer;
        r.rejected = rejected;
        r.source = RecordSource::Explicit;
        r.perm_kind = in.perm->kind;
        if (trim(r.chosen) == trim(r.rejected)) {
            out.diagnostics.push_back({vid, field, "chosen equals rejected"});
            continue;
        }
        if (!seen.insert(r.id).second) {
            out.diagnostics.push_back({vid, field, "duplicate question"});
            continue;
        }
        out.records.push_back(std::move(r));
    }
    return out;
}

// ---------------------------------------------------------------- implicit

int hallucination_index(std::size_t record_index) {
    return static_cast<int>(record_index % kHallucinationPromptCount) + 1;
}

Built<PreferenceRecord> build_implicit_pairs(const ImplicitInputs& in, ImplicitMode mode, LlmClient& subject,
                                             const PromptLibrary& prompts, const GenSettings& settings) {
    if (in.frames.empty()) throw PreconditionFailed("build_implicit_pairs: no frames for " + in.video_id);
    if (mode == ImplicitMode::Frame) {
        if (!in.spec) throw PreconditionFailed("frame mode needs a perturbation spec (" + in.video_id + ")");
        validate_spec(*in.spec);
        if (in.perturbed_frames.empty()) {
            throw PreconditionFailed("frame mode needs perturbed frames (" + in.video_id + ")");
        }
    }
    const std::string describe = prompts.render(templates::kDescribe, {});
    Built<PreferenceRecord> out;

    auto chosen = subject.generate(make_request(describe, in.frames, settings)).text;
    PreferenceRecord r;
    r.video_path = in.video_path;
    r.prompt = describe;
    r.chosen = chosen;
    if (mode == ImplicitMode::Prompt) {
        auto k = hallucination_index(in.record_index);
        std::string hp = prompts.render(hallucination_template_id(k), {});
        r.rejected = subject.generate(make_request(hp, in.frames, settings)).text;
        r.source = RecordSource::ImplicitPrompt;
        r.id = content_id({in.video_id, describe, to_string(r.source), std::to_string(k)});
    } else {
        r.rejected = subject.generate(make_request(describe, in.perturbed_frames, settings)).text;
        r.source = RecordSource::ImplicitFrame;
        r.perturbation = in.spec;
        r.id = content_id({in.video_id, describe, to_string(r.source), in.spec->tag()});
    }
    if (trim(r.chosen) == trim(r.rejected)) {
        out.diagnostics.push_back({in.video_id, "rejected", "chosen equals rejected"});
        return out;
    }
    out.records.push_back(std::move(r));
    return out;
}

// ---------------------------------------------------------------- kto / sft

Built<KtoRecord> dpo_to_kto(const std::vector<PreferenceRecord>& pairs) {
    Built<KtoRecord> out;
    out.records.reserve(pairs.size() * 4);
    for (const auto& p : pairs) {
        if (!p.shuffled_video_path) {
            out.diagnostics.push_back({p.id, "shuffled_video_path", "no shuffled video; not KTO-convertible"});
            continue;
        }
        auto add = [&](KtoOrigin origin, const std::string& completion, bool label) {
            KtoRecord k;
            k.id = content_id({p.id, to_string(origin), label ? "true" : "false"});
            k.dpo_id = p.id;
            k.video_path = origin == KtoOrigin::Original ? p.video_path : *p.shuffled_video_path;
            k.prompt = p.prompt;
            k.completion = completion;
            k.label = label;
            k.origin = origin;
            out.records.push_back(std::move(k));
        };
        add(KtoOrigin::Original, p.chosen, true);
        add(KtoOrigin::Original, p.rejected, false);
        add(KtoOrigin::Shuffled, p.rejected, true);
        add(KtoOrigin::Shuffled, p.chosen, false);
    }
    return out;
}

std::vector<KtoRecord> sample_kto(const std::vector<KtoRecord>& records, std::size_t n, std::uint64_t seed) {
    if (n > records.size()) {
        throw MixtureUnderflow(fmt::format("sample_kto: asked for {} of {} records", n, records.size()));
    }
    Rng rng(derive_seed(seed, "sample_kto"));
    std::vector<KtoRecord> out;
    out.reserve(n);
    for (auto i : sample_indices(records.size(), n, rng)) out.push_back(records[i]);
    return out;
}

std::vector<SftRecord> export_sft(const std::vector<PreferenceRecord>& pairs) {
    std::vector<SftRecord> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back({content_id({p.id, "sft"}), p.video_path, p.prompt, p.chosen});
    return out;
}

// ---------------------------------------------------------------- mixture

const std::vector<std::string>& dpo_fields() {
    static const std::vector<std::string> f = {"id",       "video_path", "shuffled_video_path", "prompt",
                                               "chosen",   "rejected",   "source",              "perm_kind"};
    return f;
}

std::vector<json> merge_mixture(const std::vector<MixturePart>& parts, std::uint64_t seed) {
    std::set<std::string> names;
    for (const auto& part : parts) {
        if (!names.insert(part.name).second) throw PreconditionFailed("duplicate mixture part '" + part.name + "'");
    }
    std::vector<json> merged;
    std::map<std::string, std::string> owner;  // id -> part
    for (const auto& part : parts) {
        for (std::size_t i = 0; i < part.rows.size(); ++i) {
            const auto& row = part.rows[i];
            for (const auto& key : dpo_fields()) {
                if (!row.is_object() || !row.contains(key)) {
                    throw SchemaMismatch(fmt::format("part '{}' row {} lacks \"{}\"", part.name, i, key));
                }
            }
        }
        std::size_t take = part.take.value_or(part.rows.size());
        if (take > part.rows.size()) {
            throw MixtureUnderflow(
                fmt::format("part '{}' has {} rows, {} requested", part.name, part.rows.size(), take));
        }
        Rng rng(derive_seed(seed, "mixture:" + part.name));
        for (auto i : sample_indices(part.rows.size(), take, rng)) {
            json row = part.rows[i];
            auto id = row["id"].get<std::string>();
            if (auto [it, fresh] = owner.emplace(id, part.name); !fresh) {
                throw PreconditionFailed(
                    fmt::format("id {} appears in parts '{}' and '{}'", id, it->second, part.name));
            }
            row["part"] = part.name;
            merged.push_back(std::move(row));
        }
    }
    std::sort(merged.begin(), merged.end(), [](const json& a, const json& b) {
        return a["id"].get_ref<const std::string&>() < b["id"].get_ref<const std::string&>();
    });
    return merged;
}

// ---------------------------------------------------------------- difficulty

std::string to_string(SimilarityMetric m) { return m == SimilarityMetric::Overlap ? "overlap" : "jaccard"; }

SimilarityMetric parse_similarity_metric(const std::string& s) {
    if (s == "overlap") return SimilarityMetric::Overlap;
    if (s == "jaccard") return SimilarityMetric::Jaccard;
    throw ConfigError("unknown similarity metric '" + s + "' (overlap or jaccard)");
}

std::vector<std::string> word_set(const std::string& text) {
    std::set<std::string> words;
    std::string cur;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (!cur.empty()) {
            words.insert(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) words.insert(cur);
    return {words.begin(), words.end()};
}

double token_similarity(const std::string& a, const std::string& b, SimilarityMetric metric) {
    auto wa = word_set(a), wb = word_set(b);
    if (wa.empty() || wb.empty()) return 0.0;
    std::vector<std::string> common;
    std::set_intersection(wa.begin(), wa.end(), wb.begin(), wb.end(), std::back_inserter(common));
    double inter = static_cast<double>(common.size());
    if (metric == SimilarityMetric::Overlap) return inter / static_cast<double>(std::min(wa.size(), wb.size()));
    return inter / static_cast<double>(wa.size() + wb.size() - common.size());
}

DifficultyReport difficulty_probe(const std::vector<PreferenceRecord>& pairs, double threshold,
                                  SimilarityMetric metric) {
    DifficultyReport rep;
    rep.metric = metric;
    rep.threshold = threshold;
    rep.histogram.assign(10, 0);
    for (const auto& p : pairs) {
        double s = token_similarity(p.chosen, p.rejected, metric);
        bool hard = s > threshold;
        rep.entries.push_back({p.id, s, hard});
        rep.histogram[std::min<std::size_t>(9, static_cast<std::size_t>(s * 10.0))]++;
        if (hard) ++rep.hard;
    }
    return rep;
}

json to_json(const DifficultyReport& r) {
    json entries = json::array();
    for (const auto& e : r.entries) entries.push_back({{"id", e.id}, {"similarity", e.similarity}, {"hard", e.hard}});
    return {{"metric", to_string(r.metric)},
            {"threshold", r.threshold},
            {"pairs", r.entries.size()},
            {"hard", r.hard},
            {"histogram", r.histogram},
            {"entries", std::move(entries)}};
}

}  // namespace timewarp
