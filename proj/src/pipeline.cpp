#include "timewarp/pipeline.hpp"

#include <chrono>
#include <map>
#include <set>

#include <fmt/format.h>

#include "timewarp/benchgen.hpp"
#include "timewarp/datasets.hpp"
#include "timewarp/errors.hpp"
#include "timewarp/eval.hpp"
#include "timewarp/media.hpp"
#include "timewarp/verify.hpp"

namespace timewarp {

namespace {

// Output layout, relative to out_dir.
namespace paths {
const fs::path corpus = "corpus.jsonl";
const fs::path ingest_report = "ingest_report.json";
const fs::path clips = "clips.jsonl";
const fs::path trim_report = "trim_report.json";
const fs::path permutations = "permutations.jsonl";
const fs::path permute_report = "permute_report.json";
const fs::path plans = "media/plans.json";
const fs::path render_report = "media/render_report.json";
const fs::path qa = "qa.jsonl";
const fs::path dpo_explicit = "dpo_explicit.jsonl";
const fs::path sft = "sft.jsonl";
const fs::path explicit_report = "explicit_report.json";
const fs::path dpo_implicit = "dpo_implicit.jsonl";
const fs::path perturb_plans = "media/perturb_plans.json";
const fs::path implicit_report = "implicit_report.json";
const fs::path kto = "kto.jsonl";
const fs::path kto_sample = "kto_sample.jsonl";
const fs::path kto_report = "kto_report.json";
const fs::path mixture = "mixture.jsonl";
const fs::path mixture_report = "mixture_report.json";
const fs::path benchmark = "benchmark_mcqa.jsonl";
const fs::path bench_report = "bench_mcqa_report.json";
const fs::path probes = "probes.jsonl";
const fs::path probes_report = "probes_report.json";
const fs::path pred_mcqa = "predictions_mcqa.jsonl";
const fs::path score_mcqa = "score_mcqa.json";
const fs::path score_mcqa_txt = "score_mcqa.txt";
const fs::path pred_group = "predictions_group.jsonl";
const fs::path score_group = "score_group.json";
const fs::path pred_probes = "predictions_probes.jsonl";
const fs::path grade_probes = "grade_probes.json";
const fs::path grade_probes_txt = "grade_probes.txt";
const fs::path verify_loss = "verify_loss.json";
const fs::path stats = "stats.json";
const fs::path stats_txt = "stats.txt";
const fs::path difficulty = "difficulty.json";
const fs::path manifest = "manifest.json";
// Media (not tracked as stage outputs; they only exist after a real render).
const fs::path media_dir = "media";
const fs::path frames_dir = "frames";
const fs::path perturbed_dir = "frames_perturbed";
}  // namespace paths

const std::vector<std::string> kStages = {"ingest",       "trim",        "permute",     "render",
                                          "gen-explicit", "gen-implicit", "to-kto",      "merge",
                                          "bench-mcqa",   "bench-probes", "score-mcqa",  "score-group",
                                          "grade-probes", "verify-loss",  "stats"};

json diagnostics_json(const std::vector<Diagnostic>& ds) {
    json arr = json::array();
    for (const auto& d : ds) arr.push_back({{"video_id", d.video_id}, {"field", d.field}, {"reason", d.reason}});
    return arr;
}

template <typename T>
std::vector<json> rows_of(const std::vector<T>& items) {
    std::vector<json> rows;
    rows.reserve(items.size());
    for (const auto& it : items) rows.push_back(to_json(it));
    return rows;
}

template <typename T, typename F>
std::vector<T> load_rows(const fs::path& path, F&& from_json) {
    std::vector<T> out;
    for (const auto& row : read_jsonl(path)) out.push_back(from_json(row));
    return out;
}

std::string rel(const fs::path& p) { return p.generic_string(); }

std::vector<std::string> frames_for(const std::string& video_path, std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t k = 0; k < n; ++k) out.push_back(rel(frame_output_path(paths::frames_dir, video_path, k)));
    return out;
}

GenRequest request(std::string prompt, std::vector<std::string> attachments, const GenSettings& s) {
    GenRequest r;
    r.prompt = std::move(prompt);
    r.attachments = std::move(attachments);
    r.model_id = s.model_id;
    r.temperature = s.temperature;
    r.max_tokens = s.max_tokens;
    return r;
}

// Task id line and options of a prompt are internal to the mock; the subject
// prompt only needs the question text without the answering instruction.
std::string question_of(const std::string& prompt) {
    auto nl = prompt.find('\n');
    return nl == std::string::npos ? prompt : prompt.substr(0, nl);
}

}  // namespace

std::shared_ptr<Backend> make_backend(const BackendConfig& config, const PromptLibrary& prompts) {
    if (config.kind == BackendKind::Mock) return std::make_shared<MockBackend>(prompts);
    HttpBackendConfig h;
    h.endpoint = config.endpoint;
    h.credential_env = config.credential_env;
    h.max_attempts = config.max_attempts;
    h.timeout = std::chrono::milliseconds(1000LL * config.timeout_s);
    return std::make_shared<HttpBackend>(h);
}

Pipeline::Pipeline(RunConfig config) : config_(std::move(config)) {
    fs::path dir = config_.prompt_dir.value_or(PromptLibrary::default_dir());
    prompts_ = PromptLibrary::load(dir);
    prompt_digest_ = file_set_digest(dir);
    fs::create_directories(config_.out_dir);
    load_manifest();
}

const std::vector<std::string>& Pipeline::stage_names() { return kStages; }

bool Pipeline::is_stage(const std::string& name) {
    return std::find(kStages.begin(), kStages.end(), name) != kStages.end();
}

LlmClient& Pipeline::generator() {
    if (!generator_) {
        ClientOptions o{config_.generator.cache_dir, config_.generator.max_in_flight};
        generator_ = std::make_shared<LlmClient>(make_backend(config_.generator, prompts_), o);
    }
    return *generator_;
}

LlmClient& Pipeline::subject() {
    if (!subject_) {
        ClientOptions o{config_.subject.cache_dir, config_.subject.max_in_flight};
        subject_ = std::make_shared<LlmClient>(make_backend(config_.subject, prompts_), o);
    }
    return *subject_;
}

StageIo Pipeline::io(const std::string& stage) const {
    const auto& c = config_;
    StageIo s;
    json gen = c.generator.to_json();
    json sub = c.subject.to_json();
    gen["prompts"] = prompt_digest_;
    sub["prompts"] = prompt_digest_;
    if (stage == "ingest") {
        s.inputs = {c.corpus_path};
        s.outputs = {paths::corpus, paths::ingest_report};
        s.params = {{"format", to_string(c.corpus_format)},
                    {"caption_field", c.ingest.caption_field},
                    {"caption_fallback", c.ingest.caption_fallback}};
    } else if (stage == "trim") {
        s.inputs = {paths::corpus};
        s.outputs = {paths::clips, paths::trim_report};
        s.params = {{"max_s", c.max_s}, {"min_scenes", c.min_scenes}};
    } else if (stage == "permute") {
        s.inputs = {paths::clips};
        s.outputs = {paths::permutations, paths::permute_report};
        s.params = {{"shuffle_fraction", c.shuffle_fraction}};
    } else if (stage == "render") {
        s.inputs = {paths::corpus, paths::clips, paths::permutations};
        s.outputs = {paths::plans, paths::render_report};
        s.params = {{"toolkit", c.media.toolkit}, {"codec", c.media.video_codec}, {"preset", c.media.preset},
                    {"crf", c.media.crf},         {"fps", c.media.fps},           {"n_frames", c.n_frames},
                    {"dry_run", c.dry_run}};
    } else if (stage == "gen-explicit") {
        s.inputs = {paths::corpus, paths::clips, paths::permutations};
        s.outputs = {paths::qa, paths::dpo_explicit, paths::sft, paths::explicit_report};
        s.params = {{"generator", gen}};
    } else if (stage == "gen-implicit") {
        s.inputs = {paths::clips, paths::plans};
        s.outputs = {paths::dpo_implicit, paths::perturb_plans, paths::implicit_report};
        s.params = {{"subject", sub},
                    {"n_frames", c.n_frames},
                    {"downscale_factor", c.downscale_factor},
                    {"channel_map", c.channel_map},
                    {"hue_shift_deg", c.hue_shift_deg},
                    {"dry_run", c.dry_run}};
    } else if (stage == "to-kto") {
        s.inputs = {paths::dpo_explicit};
        s.outputs = {paths::kto, paths::kto_report};
        if (c.kto_sample > 0) s.outputs.push_back(paths::kto_sample);
        s.params = {{"sample", c.kto_sample}};
    } else if (stage == "merge") {
        json parts = json::array();
        std::set<fs::path> in;
        for (const auto& p : c.mixture) {
            parts.push_back({{"name", p.name},
                             {"source", p.source},
                             {"take", p.take ? json(*p.take) : json("all")}});
            if (p.source == "explicit") in.insert(paths::dpo_explicit);
            if (p.source == "implicit") in.insert(paths::dpo_implicit);
            if (p.source == "file") in.insert(p.path);
        }
        s.inputs.assign(in.begin(), in.end());
        s.outputs = {paths::mixture, paths::mixture_report};
        s.params = {{"parts", parts}};
    } else if (stage == "bench-mcqa") {
        s.inputs = {paths::corpus, paths::clips, paths::permutations};
        s.outputs = {paths::benchmark, paths::bench_report};
        s.params = {{"generator", gen}};
    } else if (stage == "bench-probes") {
        s.inputs = {paths::corpus};
        s.outputs = {paths::probes, paths::probes_report};
        s.params = {{"probe_videos", c.probe_videos}, {"min_captions", c.probe_min_captions}};
    } else if (stage == "score-mcqa") {
        s.inputs = {paths::benchmark};
        if (c.mcqa_predictions) s.inputs.push_back(*c.mcqa_predictions);
        s.outputs = {paths::score_mcqa, paths::score_mcqa_txt};
        if (!c.mcqa_predictions) s.outputs.insert(s.outputs.begin(), paths::pred_mcqa);
        s.params = {{"subject", c.mcqa_predictions ? json("file") : sub}, {"n_frames", c.n_frames}};
    } else if (stage == "score-group") {
        s.inputs = {paths::dpo_explicit};
        if (c.group_predictions) s.inputs.push_back(*c.group_predictions);
        s.outputs = {paths::score_group};
        if (!c.group_predictions) s.outputs.insert(s.outputs.begin(), paths::pred_group);
        s.params = {{"subject", c.group_predictions ? json("file") : sub}, {"n_frames", c.n_frames}};
    } else if (stage == "grade-probes") {
        s.inputs = {paths::probes};
        if (c.probe_predictions) s.inputs.push_back(*c.probe_predictions);
        s.outputs = {paths::grade_probes, paths::grade_probes_txt};
        if (!c.probe_predictions) s.outputs.insert(s.outputs.begin(), paths::pred_probes);
        s.params = {{"subject", c.probe_predictions ? json("file") : sub}, {"n_frames", c.n_frames}};
    } else if (stage == "verify-loss") {
        if (c.verify_batch) s.inputs = {*c.verify_batch};
        s.outputs = {paths::verify_loss};
        s.params = {{"toy_size", c.verify_toy_size}, {"lambda", c.verify_lambda}};
    } else if (stage == "stats") {
        s.inputs = {paths::corpus,       paths::clips,        paths::trim_report, paths::permutations,
                    paths::qa,           paths::dpo_explicit, paths::dpo_implicit, paths::kto};
        s.outputs = {paths::stats, paths::stats_txt, paths::difficulty};
        s.params = {{"similarity", to_string(c.similarity)}, {"hard_threshold", c.hard_threshold}};
    } else {
        throw ConfigError("unknown stage '" + stage + "'");
    }
    return s;
}

std::string Pipeline::producer_of(const fs::path& path) const {
    if (path.is_absolute()) return "";
    for (const auto& st : kStages) {
        auto o = io(st).outputs;
        if (std::find(o.begin(), o.end(), path) != o.end()) return st;
    }
    return "";
}

fs::path Pipeline::resolve_input(const fs::path& p) const { return p.is_absolute() ? p : out(p); }

std::string Pipeline::digest(const fs::path& p) const {
    if (!fs::exists(p)) return "";
    return fs::is_directory(p) ? file_set_digest(p) : sha256_file(p);
}

void Pipeline::load_manifest() {
    auto path = out(paths::manifest);
    if (!fs::exists(path)) return;
    try {
        auto m = read_json(path);
        if (m.contains("stages") && m["stages"].is_object()) stages_ = m["stages"];
    } catch (const std::exception&) {
        stages_ = json::object();  // unreadable manifest: everything reruns
    }
}

json Pipeline::manifest() const {
    json ordered = json::object();
    for (const auto& st : kStages) {
        if (stages_.contains(st)) ordered[st] = stages_[st];
    }
    return {{"seed", config_.seed}, {"stages", std::move(ordered)}};
}

void Pipeline::save_manifest() const { write_json(out(paths::manifest), manifest()); }

StageOutcome Pipeline::run(const std::string& stage, bool force) {
    if (!is_stage(stage)) throw ConfigError("unknown stage '" + stage + "'");
    StageIo sio = io(stage);
    StageOutcome outcome;
    outcome.stage = stage;

    json inputs = json::object();
    for (const auto& in : sio.inputs) {
        auto full = resolve_input(in);
        if (!fs::exists(full)) {
            auto prod = producer_of(in);
            if (!prod.empty()) {
                throw StageDependencyMissing(
                    fmt::format("{} needs {} from stage '{}'; run it first", stage, rel(in), prod));
            }
            throw ConfigError(fmt::format("{}: input {} not found", stage, full.string()));
        }
        inputs[rel(in)] = digest(full);
    }
    std::string params = sha256_hex(sio.params.dump());

    if (!force && stages_.contains(stage)) {
        const auto& prev = stages_[stage];
        bool fresh = prev.value("status", "") == "completed" && prev.value("params", "") == params &&
                     prev.value("seed", std::uint64_t{0}) == config_.seed && prev.value("inputs", json()) == inputs;
        if (fresh) {
            json outs = json::object();
            for (const auto& o : sio.outputs) outs[rel(o)] = digest(out(o));
            fresh = prev.value("outputs", json()) == outs;
        }
        if (fresh) {
            outcome.skipped = true;
            outcome.summary = "skipped (up-to-date)";
            return outcome;
        }
    }

    // Drop the entry first so a crash mid-stage leaves it stale.
    stages_.erase(stage);
    save_manifest();

    auto t0 = std::chrono::steady_clock::now();
    std::string summary;
    if (stage == "ingest") summary = run_ingest();
    else if (stage == "trim") summary = run_trim();
    else if (stage == "permute") summary = run_permute();
    else if (stage == "render") summary = run_render();
    else if (stage == "gen-explicit") summary = run_gen_explicit();
    else if (stage == "gen-implicit") summary = run_gen_implicit();
    else if (stage == "to-kto") summary = run_to_kto();
    else if (stage == "merge") summary = run_merge();
    else if (stage == "bench-mcqa") summary = run_bench_mcqa();
    else if (stage == "bench-probes") summary = run_bench_probes();
    else if (stage == "score-mcqa") summary = run_score_mcqa();
    else if (stage == "score-group") summary = run_score_group();
    else if (stage == "grade-probes") summary = run_grade_probes();
    else if (stage == "verify-loss") summary = run_verify_loss();
    else summary = run_stats();
    outcome.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    outcome.summary = summary;

    json outs = json::object();
    for (const auto& o : sio.outputs) {
        auto full = out(o);
        if (!fs::exists(full)) throw StepFailed(fmt::format("{} did not produce {}", stage, rel(o)));
        outs[rel(o)] = digest(full);
    }
    stages_[stage] = {{"status", "completed"},
                      {"seed", config_.seed},
                      {"params", params},
                      {"inputs", std::move(inputs)},
                      {"outputs", std::move(outs)},
                      {"wall_time_s", outcome.wall_time_s}};
    save_manifest();
    return outcome;
}

std::vector<StageOutcome> Pipeline::run_all(bool force) {
    std::vector<StageOutcome> out;
    for (const auto& st : kStages) out.push_back(run(st, force));
    return out;
}

// ---------------------------------------------------------------- stages

namespace {

Corpus load_stage_corpus(const fs::path& p) { return load_corpus(p, CorpusFormat::CanonicalJsonl).corpus; }

std::vector<ClipSpec> load_clips(const fs::path& p) { return load_rows<ClipSpec>(p, clip_spec_from_json); }

std::map<std::string, ScenePermutation> load_perms(const fs::path& p) {
    std::map<std::string, ScenePermutation> out;
    for (const auto& row : read_jsonl(p)) {
        auto perm = scene_permutation_from_json(row);
        out.emplace(perm.video_id, std::move(perm));
    }
    return out;
}

std::vector<PreferenceRecord> load_dpo(const fs::path& p) {
    return load_rows<PreferenceRecord>(p, preference_record_from_json);
}

}  // namespace

std::string Pipeline::run_ingest() {
    auto result = load_corpus(config_.corpus_path, config_.corpus_format, config_.ingest);
    auto report = validate_corpus(result.corpus);
    save_canonical(result.corpus, out(paths::corpus));
    write_json(out(paths::ingest_report), {{"format", to_string(config_.corpus_format)},
                                           {"records", result.corpus.records.size()},
                                           {"rejected", result.rejected.size()},
                                           {"validation_failures", report.failures()},
                                           {"manifest_digest", result.corpus.manifest_digest},
                                           {"diagnostics", diagnostics_json(result.rejected)}});
    return fmt::format("{} records ingested, {} rejected", result.corpus.records.size(), result.rejected.size());
}

std::string Pipeline::run_trim() {
    auto corpus = load_stage_corpus(out(paths::corpus));
    auto t = trim_corpus(corpus, config_.max_s, config_.min_scenes);
    write_jsonl(out(paths::clips), rows_of(t.clips));
    write_json(out(paths::trim_report), {{"clips", t.clips.size()},
                                         {"excluded", t.excluded.size()},
                                         {"excluded_ids", t.excluded},
                                         {"over_budget", t.over_budget}});
    return fmt::format("{} clips, {} excluded, {} over budget", t.clips.size(), t.excluded.size(), t.over_budget);
}

std::string Pipeline::run_permute() {
    auto clips = load_clips(out(paths::clips));
    auto plan = plan_negative_set(clips, config_.shuffle_fraction, config_.seed);
    write_jsonl(out(paths::permutations), rows_of(plan.permutations));
    write_json(out(paths::permute_report), {{"shuffled", plan.shuffled},
                                            {"reversed", plan.reversed},
                                            {"ineligible", plan.ineligible}});
    return fmt::format("{} shuffled, {} reversed", plan.shuffled, plan.reversed);
}

std::string Pipeline::run_render() {
    auto corpus = load_stage_corpus(out(paths::corpus));
    auto clips = load_clips(out(paths::clips));
    auto perms = load_perms(out(paths::permutations));
    fs::path media_root = config_.corpus_path;
    if (!fs::is_directory(media_root)) media_root = media_root.parent_path();

    std::vector<MediaPlan> plans;
    for (const auto& clip : clips) {
        const auto* rec = corpus.find(clip.video_id);
        if (!rec) throw PreconditionFailed("clip for unknown video " + clip.video_id);
        VideoRecord resolved = *rec;
        if (!resolved.media_path.empty() && fs::path(resolved.media_path).is_relative()) {
            resolved.media_path = (media_root / resolved.media_path).lexically_normal().string();
        }
        MediaPlan merged = plan_clip_render(resolved, clip, std::nullopt, paths::media_dir, config_.media);
        std::vector<std::string> clip_paths = merged.outputs;
        if (auto it = perms.find(clip.video_id); it != perms.end()) {
            auto p = plan_clip_render(resolved, clip, it->second, paths::media_dir, config_.media);
            merged.steps.insert(merged.steps.end(), p.steps.begin(), p.steps.end());
            merged.outputs.insert(merged.outputs.end(), p.outputs.begin(), p.outputs.end());
            clip_paths.insert(clip_paths.end(), p.outputs.begin(), p.outputs.end());
        }
        // rendered clips are the kept scenes back to back, gaps removed
        double rendered_s = 0.0;
        for (auto idx : clip.kept_scene_indices) rendered_s += rec->scenes.at(idx).duration();
        for (const auto& cp : clip_paths) {
            auto f = plan_frame_extraction(cp, rendered_s, paths::frames_dir, config_.n_frames, config_.media);
            merged.steps.insert(merged.steps.end(), f.steps.begin(), f.steps.end());
            merged.outputs.insert(merged.outputs.end(), f.outputs.begin(), f.outputs.end());
        }
        plans.push_back(std::move(merged));
    }
    for (const auto& p : plans) {
        for (const auto& v : check_plan(p, ".", !p.dry_run)) throw PreconditionFailed(p.video_id + ": " + v);
    }
    json pj = json::array();
    for (const auto& p : plans) pj.push_back(to_json(p));
    write_json(out(paths::plans), pj);

    auto reports = execute_plans(plans, config_.media_workers, config_.out_dir);
    std::size_t executed = 0, dry = 0, failed = 0;
    json rj = json::array();
    for (std::size_t i = 0; i < reports.size(); ++i) {
        rj.push_back(to_json(reports[i]));
        if (!reports[i].ok) ++failed;
    }
    for (const auto& p : plans) (p.dry_run ? dry : executed) += 1;
    write_json(out(paths::render_report), {{"plans", plans.size()},
                                           {"executed", executed},
                                           {"dry_run", dry},
                                           {"failed", failed},
                                           {"reports", rj}});
    if (failed > 0) {
        for (const auto& r : reports) {
            if (!r.ok) throw StepFailed(fmt::format("{} of {} renders failed; first: {}", failed, plans.size(), r.error));
        }
    }
    return fmt::format("{} plans ({} executed, {} dry-run)", plans.size(), executed, dry);
}

std::string Pipeline::run_gen_explicit() {
    auto corpus = load_stage_corpus(out(paths::corpus));
    auto clips = load_clips(out(paths::clips));
    auto perms = load_perms(out(paths::permutations));
    auto settings = config_.generator.settings();
    LlmClient& gen = generator();

    struct Result {
        std::vector<json> qa;
        std::vector<PreferenceRecord> pairs;
        std::vector<Diagnostic> diags;
    };
    std::vector<Result> results(clips.size());
    parallel_for(clips.size(), config_.generator.max_in_flight, [&](std::size_t i) {
        const auto& clip = clips[i];
        auto it = perms.find(clip.video_id);
        if (it == perms.end()) return;
        const auto* rec = corpus.find(clip.video_id);
        if (!rec) throw PreconditionFailed("clip for unknown video " + clip.video_id);
        auto& res = results[i];
        auto original = build_composite_caption(*rec, clip.kept_scene_indices);
        auto permuted = build_composite_caption(*rec, permuted_scene_order(clip, it->second));
        Parsed<OpenEndedQA> qa;
        try {
            qa = generate_oe_qa(original, gen, prompts_, settings);
        } catch (const ParseFailure& e) {
            res.diags.push_back({clip.video_id, "oe_qa", std::string("ParseFailure: ") + e.what()});
            return;
        }
        for (const auto& d : qa.dropped) res.diags.push_back({clip.video_id, "oe_qa", d});
        for (std::size_t k = 0; k < qa.items.size(); ++k) {
            res.qa.push_back({{"video_id", clip.video_id},
                              {"index", k},
                              {"question", qa.items[k].question},
                              {"answer", qa.items[k].answer},
                              {"relation", to_string(qa.items[k].target_relation)}});
        }
        ExplicitInputs in;
        in.record = rec;
        in.clip = &clip;
        in.perm = &it->second;
        in.original = &original;
        in.permuted = &permuted;
        in.video_path = rel(clip_output_path(paths::media_dir, clip.video_id, "original"));
        in.shuffled_video_path = rel(clip_output_path(paths::media_dir, clip.video_id, clip_variant(it->second)));
        auto built = build_explicit_pairs(in, qa.items, gen, prompts_, settings);
        res.pairs = std::move(built.records);
        res.diags.insert(res.diags.end(), built.diagnostics.begin(), built.diagnostics.end());
    });

    std::vector<json> qa_rows;
    std::vector<PreferenceRecord> pairs;
    std::vector<Diagnostic> diags;
    for (auto& r : results) {
        qa_rows.insert(qa_rows.end(), r.qa.begin(), r.qa.end());
        pairs.insert(pairs.end(), r.pairs.begin(), r.pairs.end());
        diags.insert(diags.end(), r.diags.begin(), r.diags.end());
    }
    write_jsonl(out(paths::qa), qa_rows);
    write_jsonl(out(paths::dpo_explicit), rows_of(pairs));
    write_jsonl(out(paths::sft), rows_of(export_sft(pairs)));
    write_json(out(paths::explicit_report), {{"qa", qa_rows.size()},
                                             {"pairs", pairs.size()},
                                             {"skipped", diags.size()},
                                             {"diagnostics", diagnostics_json(diags)}});
    return fmt::format("{} QA, {} preference pairs, {} skipped", qa_rows.size(), pairs.size(), diags.size());
}

std::string Pipeline::run_gen_implicit() {
    auto clips = load_clips(out(paths::clips));
    std::map<std::string, bool> dry;
    for (const auto& p : read_json(out(paths::plans))) dry[p.at("video_id").get<std::string>()] = p.at("dry_run").get<bool>();
    auto settings = config_.subject.settings();
    LlmClient& subj = subject();

    std::vector<MediaPlan> plans(clips.size());
    std::vector<std::vector<PreferenceRecord>> records(clips.size());
    std::vector<std::vector<Diagnostic>> diags(clips.size());
    parallel_for(clips.size(), config_.subject.max_in_flight, [&](std::size_t i) {
        const auto& clip = clips[i];
        std::string video = rel(clip_output_path(paths::media_dir, clip.video_id, "original"));
        auto frames = frames_for(video, config_.n_frames);
        PerturbationSpec spec = i % 2 == 0 ? PerturbationSpec::downscale(config_.downscale_factor)
                                           : PerturbationSpec::color_distort(config_.channel_map, config_.hue_shift_deg);
        std::vector<fs::path> frame_paths(frames.begin(), frames.end());
        MediaOptions mo = config_.media;
        auto d = dry.find(clip.video_id);
        mo.dry_run = mo.dry_run || d == dry.end() || d->second;
        plans[i] = plan_perturbation(frame_paths, spec, paths::perturbed_dir, std::nullopt, mo);
        plans[i].video_id = clip.video_id;

        ImplicitInputs in;
        in.video_id = clip.video_id;
        in.video_path = video;
        in.frames = frames;
        in.record_index = i;
        for (auto mode : {ImplicitMode::Prompt, ImplicitMode::Frame}) {
            if (mode == ImplicitMode::Frame) {
                in.spec = spec;
                in.perturbed_frames = plans[i].outputs;
            }
            auto built = build_implicit_pairs(in, mode, subj, prompts_, settings);
            records[i].insert(records[i].end(), built.records.begin(), built.records.end());
            diags[i].insert(diags[i].end(), built.diagnostics.begin(), built.diagnostics.end());
        }
    });

    json pj = json::array();
    for (const auto& p : plans) pj.push_back(to_json(p));
    write_json(out(paths::perturb_plans), pj);
    auto reports = execute_plans(plans, config_.media_workers, config_.out_dir);
    for (const auto& r : reports) {
        if (!r.ok) throw StepFailed("perturbation failed: " + r.error);
    }

    std::vector<PreferenceRecord> all;
    std::vector<Diagnostic> all_diags;
    for (std::size_t i = 0; i < clips.size(); ++i) {
        all.insert(all.end(), records[i].begin(), records[i].end());
        all_diags.insert(all_diags.end(), diags[i].begin(), diags[i].end());
    }
    write_jsonl(out(paths::dpo_implicit), rows_of(all));
    std::size_t by_prompt = 0;
    for (const auto& r : all) by_prompt += r.source == RecordSource::ImplicitPrompt;
    write_json(out(paths::implicit_report), {{"pairs", all.size()},
                                             {"prompt_mode", by_prompt},
                                             {"frame_mode", all.size() - by_prompt},
                                             {"diagnostics", diagnostics_json(all_diags)}});
    return fmt::format("{} implicit pairs ({} prompt, {} frame)", all.size(), by_prompt, all.size() - by_prompt);
}

std::string Pipeline::run_to_kto() {
    auto pairs = load_dpo(out(paths::dpo_explicit));
    auto kto = dpo_to_kto(pairs);
    write_jsonl(out(paths::kto), rows_of(kto.records));
    json report = {{"pairs", pairs.size()},
                   {"kto", kto.records.size()},
                   {"skipped", diagnostics_json(kto.diagnostics)}};
    std::string summary = fmt::format("{} pairs -> {} KTO records", pairs.size(), kto.records.size());
    if (config_.kto_sample > 0) {
        auto sample = sample_kto(kto.records, config_.kto_sample, config_.seed);
        write_jsonl(out(paths::kto_sample), rows_of(sample));
        report["sampled"] = sample.size();
        summary += fmt::format(", {} sampled", sample.size());
    }
    write_json(out(paths::kto_report), report);
    return summary;
}

std::string Pipeline::run_merge() {
    std::vector<MixturePart> parts;
    for (const auto& p : config_.mixture) {
        fs::path src = p.source == "explicit" ? out(paths::dpo_explicit)
                       : p.source == "implicit" ? out(paths::dpo_implicit)
                                                : p.path;
        parts.push_back({p.name, read_jsonl(src), p.take});
    }
    auto merged = merge_mixture(parts, config_.seed);
    write_jsonl(out(paths::mixture), merged);
    std::map<std::string, std::size_t> counts;
    for (const auto& row : merged) counts[row["part"].get<std::string>()]++;
    json per_part = json::object();
    for (const auto& p : config_.mixture) per_part[p.name] = counts[p.name];
    write_json(out(paths::mixture_report), {{"records", merged.size()}, {"parts", per_part}});
    return fmt::format("{} records merged from {} parts", merged.size(), parts.size());
}

std::string Pipeline::run_bench_mcqa() {
    auto corpus = load_stage_corpus(out(paths::corpus));
    auto clips = load_clips(out(paths::clips));
    auto perms = load_perms(out(paths::permutations));
    auto settings = config_.generator.settings();
    LlmClient& gen = generator();

    std::vector<Built<BenchmarkItem>> built(clips.size());
    parallel_for(clips.size(), config_.generator.max_in_flight, [&](std::size_t i) {
        const auto& clip = clips[i];
        McqaSource src;
        src.record = corpus.find(clip.video_id);
        if (!src.record) throw PreconditionFailed("clip for unknown video " + clip.video_id);
        src.clip = clip;
        if (auto it = perms.find(clip.video_id); it != perms.end()) src.perm = it->second;
        src.video_path = rel(clip_output_path(paths::media_dir, clip.video_id, "original"));
        src.shuffled_video_path = rel(clip_output_path(paths::media_dir, clip.video_id, clip_variant(src.perm)));
        built[i] = build_mcqa_benchmark({src}, gen, prompts_, settings);
    });
    std::vector<BenchmarkItem> items;
    std::vector<Diagnostic> diags;
    for (auto& b : built) {
        items.insert(items.end(), b.records.begin(), b.records.end());
        diags.insert(diags.end(), b.diagnostics.begin(), b.diagnostics.end());
    }
    write_jsonl(out(paths::benchmark), rows_of(items));
    std::size_t shuffled = 0;
    for (const auto& it : items) shuffled += it.split == Split::Shuffled;
    write_json(out(paths::bench_report), {{"items", items.size()},
                                          {"normal", items.size() - shuffled},
                                          {"shuffled", shuffled},
                                          {"temporal", true},
                                          {"diagnostics", diagnostics_json(diags)}});
    return fmt::format("{} MCQA items ({} normal, {} shuffled)", items.size(), items.size() - shuffled, shuffled);
}

std::string Pipeline::run_bench_probes() {
    auto corpus = load_stage_corpus(out(paths::corpus));
    auto sel = select_probe_videos(corpus, config_.probe_videos, config_.probe_min_captions, config_.seed);
    std::vector<OrderStatement> statements;
    std::vector<std::string> warnings;
    std::map<std::string, std::size_t> coverage;
    for (const auto* rec : sel.records) {
        auto b = build_order_probes(*rec, rec->media_path, config_.seed);
        statements.insert(statements.end(), b.statements.begin(), b.statements.end());
        warnings.insert(warnings.end(), b.warnings.begin(), b.warnings.end());
        for (const auto& c : b.coverage) {
            auto key = to_string(c.category) + "/" + to_string(c.subtype);
            coverage[key] += c.present ? 1 : 0;
        }
    }
    write_jsonl(out(paths::probes), rows_of(statements));
    json cov = json::object();
    for (const auto& [k, v] : coverage) cov[k] = v;
    write_json(out(paths::probes_report), {{"videos", sel.records.size()},
                                           {"eligible", sel.eligible},
                                           {"statements", statements.size()},
                                           {"coverage", cov},
                                           {"selection_warning", sel.warning ? json(*sel.warning) : json(nullptr)},
                                           {"separation_warnings", warnings}});
    return fmt::format("{} statements over {} videos", statements.size(), sel.records.size());
}

std::string Pipeline::run_score_mcqa() {
    auto items = load_rows<BenchmarkItem>(out(paths::benchmark), benchmark_item_from_json);
    std::vector<RawPrediction> preds;
    if (config_.mcqa_predictions) {
        preds = load_predictions(*config_.mcqa_predictions);
    } else {
        auto settings = config_.subject.settings();
        LlmClient& subj = subject();
        preds.resize(items.size());
        parallel_for(items.size(), config_.subject.max_in_flight, [&](std::size_t i) {
            const auto& it = items[i];
            auto prompt = prompts_.render(templates::kEvalMcqa,
                                          {{"question", it.question}, {"options", render_options(it.options)}});
            preds[i] = {it.id, subj.generate(request(prompt, frames_for(it.video_path, config_.n_frames), settings)).text};
        });
        write_jsonl(out(paths::pred_mcqa), rows_of(preds));
    }
    auto report = score_mcqa(items, preds);
    auto model = config_.mcqa_predictions ? config_.mcqa_predictions->stem().string() : config_.subject.model_id;
    json j = to_json(report);
    j["model"] = model;
    write_json(out(paths::score_mcqa), j);
    auto table = render_accuracy_table(report, model);
    write_file(out(paths::score_mcqa_txt), table);
    return table;
}

std::string Pipeline::run_score_group() {
    auto pairs = load_dpo(out(paths::dpo_explicit));
    std::vector<std::string> quad_ids;
    for (const auto& p : pairs) {
        if (p.shuffled_video_path) quad_ids.push_back(p.id);
    }
    std::vector<RawPrediction> preds;
    if (config_.group_predictions) {
        preds = load_predictions(*config_.group_predictions);
    } else {
        auto settings = config_.subject.settings();
        LlmClient& subj = subject();
        std::vector<const PreferenceRecord*> quads;
        for (const auto& p : pairs) {
            if (p.shuffled_video_path) quads.push_back(&p);
        }
        preds.resize(quads.size() * 4);
        parallel_for(quads.size(), config_.subject.max_in_flight, [&](std::size_t i) {
            const auto& p = *quads[i];
            auto ids = quad_item_ids(p.id);
            auto fv = frames_for(p.video_path, config_.n_frames);
            auto fs_ = frames_for(*p.shuffled_video_path, config_.n_frames);
            std::vector<std::string> both = fv;
            both.insert(both.end(), fs_.begin(), fs_.end());
            auto q = question_of(p.prompt);
            auto caption = prompts_.render(templates::kEvalCaptionMatch,
                                           {{"question", q}, {"answer_a", p.chosen}, {"answer_b", p.rejected}});
            preds[4 * i + 0] = {ids[0], subj.generate(request(caption, fv, settings)).text};
            preds[4 * i + 1] = {ids[1], subj.generate(request(caption, fs_, settings)).text};
            for (int k = 0; k < 2; ++k) {
                auto vp = prompts_.render(templates::kEvalVideoMatch,
                                          {{"question", q}, {"answer", k == 0 ? p.chosen : p.rejected}});
                preds[4 * i + 2 + static_cast<std::size_t>(k)] = {ids[2 + static_cast<std::size_t>(k)],
                                                                  subj.generate(request(vp, both, settings)).text};
            }
        });
        write_jsonl(out(paths::pred_group), rows_of(preds));
    }
    auto scores = score_group_predictions(quad_ids, preds);
    auto baseline = random_group_baseline(100000, config_.seed);
    write_json(out(paths::score_group), {{"model", config_.group_predictions ? config_.group_predictions->stem().string()
                                                                             : config_.subject.model_id},
                                         {"scores", to_json(scores)},
                                         {"random_baseline", to_json(baseline)},
                                         {"quoted_random_group", kQuotedRandomGroupScore}});
    return render_table({{"Model", "Text", "Video", "Group"},
                         {config_.subject.model_id, fmt::format("{:.2f}", scores.text),
                          fmt::format("{:.2f}", scores.video), fmt::format("{:.2f}", scores.group)},
                         {"random (independent)", fmt::format("{:.2f}", baseline.text),
                          fmt::format("{:.2f}", baseline.video), fmt::format("{:.2f}", baseline.group)}});
}

std::string Pipeline::run_grade_probes() {
    auto statements = load_rows<OrderStatement>(out(paths::probes), order_statement_from_json);
    std::vector<RawPrediction> preds;
    if (config_.probe_predictions) {
        preds = load_predictions(*config_.probe_predictions);
    } else {
        auto settings = config_.subject.settings();
        LlmClient& subj = subject();
        preds.resize(statements.size());
        parallel_for(statements.size(), config_.subject.max_in_flight, [&](std::size_t i) {
            const auto& s = statements[i];
            auto prompt = prompts_.render(templates::kEvalBinary, {{"statement", s.statement}});
            preds[i] = {s.id, subj.generate(request(prompt, frames_for(s.video_path, config_.n_frames), settings)).text};
        });
        write_jsonl(out(paths::pred_probes), rows_of(preds));
    }
    auto model = config_.probe_predictions ? config_.probe_predictions->stem().string() : config_.subject.model_id;
    auto report = grade_order_probes(statements, preds, {}, model);
    auto sweep = strictness_sweep(statements, preds);
    write_json(out(paths::grade_probes), {{"report", to_json(report)}, {"strictness_sweep", to_json(sweep)}});
    auto table = render_grade_table(report);
    write_file(out(paths::grade_probes_txt), table);
    return table;
}

std::string Pipeline::run_verify_loss() {
    auto batch = config_.verify_batch ? load_policy_batch(*config_.verify_batch)
                                      : random_policy_batch(config_.verify_toy_size, config_.seed, config_.verify_lambda);
    json j = dpo_report(batch);
    j["source"] = config_.verify_batch ? "file" : "toy";
    write_json(out(paths::verify_loss), j);
    return j.dump(2);
}

std::string Pipeline::run_stats() {
    auto corpus = load_stage_corpus(out(paths::corpus));
    auto clips = load_clips(out(paths::clips));
    auto trim = read_json(out(paths::trim_report));
    auto perms = load_perms(out(paths::permutations));
    std::map<std::string, std::size_t> qa_counts;
    for (const auto& row : read_jsonl(out(paths::qa))) qa_counts[row["video_id"].get<std::string>()]++;
    std::map<std::string, std::vector<double>> durations;
    for (const auto& c : clips) {
        const auto* rec = corpus.find(c.video_id);
        if (!rec) continue;
        for (auto idx : c.kept_scene_indices) durations[c.video_id].push_back(rec->scenes.at(idx).duration());
    }
    std::size_t shuffled = 0, reversed = 0;
    for (const auto& [_, p] : perms) (p.kind == PermKind::Shuffled ? shuffled : reversed) += 1;
    auto stats = corpus_stats(clips, qa_counts, durations, shuffled, reversed);
    stats.excluded = trim.value("excluded", std::size_t{0});

    auto explicit_pairs = load_dpo(out(paths::dpo_explicit));
    auto implicit_rows = read_jsonl(out(paths::dpo_implicit));
    auto kto_rows = read_jsonl(out(paths::kto));
    auto diff = difficulty_probe(explicit_pairs, config_.hard_threshold, config_.similarity);
    write_json(out(paths::difficulty), to_json(diff));

    json j = {{"table", to_json(stats)},
              {"explicit_pairs", explicit_pairs.size()},
              {"implicit_pairs", implicit_rows.size()},
              {"kto_records", kto_rows.size()},
              {"hard_pairs", diff.hard}};
    write_json(out(paths::stats), j);
    std::string text = render_stats_table(stats) +
                       fmt::format("explicit pairs: {}\nimplicit pairs: {}\nKTO records: {}\nhard pairs ({} > {}): {}\n",
                                   explicit_pairs.size(), implicit_rows.size(), kto_rows.size(),
                                   to_string(diff.metric), diff.threshold, diff.hard);
    write_file(out(paths::stats_txt), text);
    return text;
}

}  // namespace timewarp
