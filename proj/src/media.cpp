#include "timewarp/media.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <set>
#include <thread>

#include <fcntl.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <fmt/format.h>

#include "timewarp/errors.hpp"

extern char** environ;

namespace timewarp {

namespace {

std::string seconds(double v) { return fmt::format("{:.3f}", v); }

std::vector<std::string> common_prefix() { return {"-hide_banner", "-loglevel", "error", "-y"}; }

std::vector<std::string> encode_args(const MediaOptions& o) {
    return {"-c:v", o.video_codec, "-preset", o.preset, "-crf", std::to_string(o.crf),
            "-pix_fmt", "yuv420p", "-r", std::to_string(o.fps)};
}

void append(std::vector<std::string>& dst, const std::vector<std::string>& src) {
    dst.insert(dst.end(), src.begin(), src.end());
}

bool is_under(const fs::path& path, const fs::path& dir) {
    auto p = path.lexically_normal();
    auto d = dir.lexically_normal();
    auto rel = p.lexically_relative(d);
    return !rel.empty() && *rel.begin() != "..";
}

}  // namespace

std::string to_string(StepPurpose p) {
    switch (p) {
        case StepPurpose::Cut: return "cut";
        case StepPurpose::Concat: return "concat";
        case StepPurpose::ExtractFrames: return "extract_frames";
        case StepPurpose::Perturb: return "perturb";
    }
    return "cut";
}

std::string to_string(PerturbKind k) { return k == PerturbKind::Downscale ? "downscale" : "color_distort"; }

std::string to_string(StepStatus s) {
    switch (s) {
        case StepStatus::Ok: return "ok";
        case StepStatus::Failed: return "failed";
        case StepStatus::Skipped: return "skipped";
        case StepStatus::Aborted: return "aborted";
    }
    return "skipped";
}

PerturbationSpec PerturbationSpec::downscale(double factor) {
    PerturbationSpec s;
    s.kind = PerturbKind::Downscale;
    s.downscale_factor = factor;
    return s;
}

PerturbationSpec PerturbationSpec::color_distort(std::array<int, 3> channel_map, double hue_shift_deg) {
    PerturbationSpec s;
    s.kind = PerturbKind::ColorDistort;
    s.channel_map = channel_map;
    s.hue_shift_deg = hue_shift_deg;
    return s;
}

std::string PerturbationSpec::tag() const {
    if (kind == PerturbKind::Downscale) {
        return fmt::format("downscale{}", downscale_factor.value_or(0.0));
    }
    auto m = channel_map.value_or(std::array<int, 3>{0, 1, 2});
    return fmt::format("color{}{}{}h{}", m[0], m[1], m[2], hue_shift_deg.value_or(0.0));
}

void validate_spec(const PerturbationSpec& s) {
    if (s.kind == PerturbKind::Downscale) {
        if (!s.downscale_factor) throw InvalidSpec("downscale spec without downscale_factor");
        if (s.channel_map || s.hue_shift_deg) throw InvalidSpec("downscale spec carries color fields");
        double f = *s.downscale_factor;
        if (!(f > 0.0 && f < 1.0)) throw InvalidSpec(fmt::format("downscale_factor {} not in (0, 1)", f));
        return;
    }
    if (s.downscale_factor) throw InvalidSpec("color_distort spec carries downscale_factor");
    if (!s.channel_map) throw InvalidSpec("color_distort spec without channel_map");
    auto m = *s.channel_map;
    auto sorted = m;
    std::sort(sorted.begin(), sorted.end());
    if (sorted != std::array<int, 3>{0, 1, 2}) {
        throw InvalidSpec(fmt::format("channel_map [{}, {}, {}] is not a permutation of 3 channels", m[0], m[1], m[2]));
    }
    double hue = s.hue_shift_deg.value_or(0.0);
    if (!std::isfinite(hue)) throw InvalidSpec("hue shift not finite");
    bool identity = m == std::array<int, 3>{0, 1, 2};
    if (identity && std::fmod(hue, 360.0) == 0.0) {
        throw InvalidSpec("identity channel_map with no hue shift does not perturb the frame");
    }
}

json to_json(const PerturbationSpec& s) {
    json j = {{"kind", to_string(s.kind)}};
    if (s.downscale_factor) j["downscale_factor"] = *s.downscale_factor;
    if (s.channel_map) j["channel_map"] = *s.channel_map;
    if (s.hue_shift_deg) j["hue_shift_deg"] = *s.hue_shift_deg;
    return j;
}

PerturbationSpec perturbation_spec_from_json(const json& j) {
    try {
        PerturbationSpec s;
        auto kind = j.at("kind").get<std::string>();
        if (kind == "downscale") {
            s.kind = PerturbKind::Downscale;
        } else if (kind == "color_distort") {
            s.kind = PerturbKind::ColorDistort;
        } else {
            throw InvalidSpec("unknown perturbation kind '" + kind + "'");
        }
        if (j.contains("downscale_factor")) s.downscale_factor = j["downscale_factor"].get<double>();
        if (j.contains("channel_map")) s.channel_map = j["channel_map"].get<std::array<int, 3>>();
        if (j.contains("hue_shift_deg")) s.hue_shift_deg = j["hue_shift_deg"].get<double>();
        return s;
    } catch (const json::exception& e) {
        throw InvalidSpec(std::string("perturbation spec: ") + e.what());
    }
}

std::string clip_variant(const std::optional<ScenePermutation>& perm) {
    return perm ? to_string(perm->kind) : "original";
}

fs::path clip_output_path(const fs::path& out_dir, const std::string& video_id, const std::string& variant) {
    return out_dir / (video_id + "." + variant + ".mp4");
}

MediaPlan plan_clip_render(const VideoRecord& record, const ClipSpec& clip,
                           const std::optional<ScenePermutation>& perm, const fs::path& out_dir,
                           const MediaOptions& options) {
    if (clip.video_id != record.video_id || (perm && perm->video_id != record.video_id)) {
        throw PreconditionFailed("clip/permutation do not belong to " + record.video_id);
    }
    MediaPlan plan;
    plan.video_id = record.video_id;
    plan.dry_run = options.dry_run;
    if (record.media_path.empty() || !fs::exists(record.media_path)) {
        plan.media_missing = true;
        plan.dry_run = true;
    }
    const std::string variant = clip_variant(perm);

    std::vector<std::string> segments;
    for (std::size_t idx : clip.kept_scene_indices) {
        const Scene& scene = record.scenes.at(idx);
        std::string seg = (out_dir / "segments" /
                           fmt::format("{}.{}.seg{:02}.mp4", record.video_id, variant, idx))
                              .generic_string();
        CommandStep step;
        step.tool = options.toolkit;
        step.purpose = StepPurpose::Cut;
        step.argv = common_prefix();
        append(step.argv, {"-i", record.media_path, "-ss", seconds(scene.start_s), "-to",
                           seconds(scene.end_s), "-map", "0:v:0", "-an"});
        append(step.argv, encode_args(options));
        step.argv.push_back(seg);
        step.inputs = {record.media_path};
        step.outputs = {seg};
        plan.steps.push_back(std::move(step));
        segments.push_back(seg);
    }

    std::vector<std::string> ordered = segments;
    if (perm) ordered = apply_permutation(perm->pi, segments);

    std::string out = clip_output_path(out_dir, record.video_id, variant).generic_string();
    CommandStep concat;
    concat.tool = options.toolkit;
    concat.purpose = StepPurpose::Concat;
    concat.argv = common_prefix();
    std::string graph;
    for (std::size_t i = 0; i < ordered.size(); ++i) {
        append(concat.argv, {"-i", ordered[i]});
        graph += fmt::format("[{}:v]", i);
    }
    graph += fmt::format("concat=n={}:v=1:a=0[v]", ordered.size());
    append(concat.argv, {"-filter_complex", graph, "-map", "[v]"});
    append(concat.argv, encode_args(options));
    concat.argv.push_back(out);
    concat.inputs = ordered;
    concat.outputs = {out};
    plan.steps.push_back(std::move(concat));
    plan.outputs = {out};
    return plan;
}

std::vector<double> frame_timestamps(double duration_s, std::size_t n) {
    std::vector<double> t;
    for (std::size_t k = 0; k < n; ++k) {
        t.push_back((static_cast<double>(k) + 0.5) * duration_s / static_cast<double>(n));
    }
    return t;
}

fs::path frame_output_path(const fs::path& out_dir, const fs::path& clip_path, std::size_t k) {
    return out_dir / fmt::format("{}.f{:02}.png", clip_path.stem().string(), k);
}

MediaPlan plan_frame_extraction(const fs::path& clip_path, double duration_s, const fs::path& out_dir,
                                std::size_t n_frames, const MediaOptions& options) {
    if (n_frames == 0) throw PreconditionFailed("n_frames must be at least 1");
    MediaPlan plan;
    plan.video_id = clip_path.stem().string();
    plan.dry_run = options.dry_run;
    auto times = frame_timestamps(duration_s, n_frames);
    for (std::size_t k = 0; k < n_frames; ++k) {
        std::string out = frame_output_path(out_dir, clip_path, k).generic_string();
        CommandStep step;
        step.tool = options.toolkit;
        step.purpose = StepPurpose::ExtractFrames;
        step.argv = common_prefix();
        append(step.argv, {"-ss", seconds(times[k]), "-i", clip_path.generic_string(), "-frames:v", "1", out});
        step.inputs = {clip_path.generic_string()};
        step.outputs = {out};
        plan.outputs.push_back(out);
        plan.steps.push_back(std::move(step));
    }
    return plan;
}

fs::path perturbed_frame_path(const fs::path& out_dir, const fs::path& frame, const PerturbationSpec& spec) {
    return out_dir / fmt::format("{}.{}.png", frame.stem().string(), spec.tag());
}

MediaPlan plan_perturbation(const std::vector<fs::path>& frames, const PerturbationSpec& spec,
                            const fs::path& out_dir, std::optional<FrameSize> size,
                            const MediaOptions& options) {
    if (frames.empty()) throw PreconditionFailed("no frames to perturb");
    validate_spec(spec);

    std::string filter;
    bool complex = false;
    if (spec.kind == PerturbKind::Downscale) {
        double f = *spec.downscale_factor;
        if (size) {
            int w = std::max(1, static_cast<int>(std::lround(size->width * f)));
            int h = std::max(1, static_cast<int>(std::lround(size->height * f)));
            filter = fmt::format("scale={}:{}:flags=area,scale={}:{}:flags=neighbor", w, h, size->width,
                                 size->height);
        } else {
            filter = fmt::format(
                "[0:v]split[src][ref];[src]scale=trunc(iw*{0}):trunc(ih*{0}):flags=area[low];"
                "[low][ref]scale2ref=flags=neighbor[out][dummy];[dummy]nullsink",
                f);
            complex = true;
        }
    } else {
        auto m = *spec.channel_map;
        // Output channel i takes input channel m[i].
        auto coef = [&](int out_ch, int in_ch) { return m[out_ch] == in_ch ? "1" : "0"; };
        filter = fmt::format("colorchannelmixer=rr={}:rg={}:rb={}:gr={}:gg={}:gb={}:br={}:bg={}:bb={}",
                             coef(0, 0), coef(0, 1), coef(0, 2), coef(1, 0), coef(1, 1), coef(1, 2),
                             coef(2, 0), coef(2, 1), coef(2, 2));
        double hue = spec.hue_shift_deg.value_or(0.0);
        if (hue != 0.0) filter += fmt::format(",hue=h={}", hue);
    }

    MediaPlan plan;
    plan.video_id = frames.front().stem().string();
    plan.dry_run = options.dry_run;
    for (const auto& frame : frames) {
        std::string out = perturbed_frame_path(out_dir, frame, spec).generic_string();
        CommandStep step;
        step.tool = options.toolkit;
        step.purpose = StepPurpose::Perturb;
        step.argv = common_prefix();
        append(step.argv, {"-i", frame.generic_string()});
        if (complex) {
            append(step.argv, {"-filter_complex", filter, "-map", "[out]"});
        } else {
            append(step.argv, {"-vf", filter});
        }
        append(step.argv, {"-frames:v", "1", out});
        step.inputs = {frame.generic_string()};
        step.outputs = {out};
        plan.outputs.push_back(out);
        plan.steps.push_back(std::move(step));
    }
    return plan;
}

std::vector<std::string> check_plan(const MediaPlan& plan, const fs::path& out_dir, bool require_inputs) {
    std::vector<std::string> problems;
    std::set<std::string> produced;
    for (std::size_t i = 0; i < plan.steps.size(); ++i) {
        const auto& step = plan.steps[i];
        for (const auto& in : step.inputs) {
            if (require_inputs && !produced.count(in) && !fs::exists(in)) {
                problems.push_back(fmt::format("step {}: input {} neither exists nor is produced earlier", i, in));
            }
        }
        for (const auto& out : step.outputs) {
            if (!produced.insert(out).second) {
                problems.push_back(fmt::format("step {}: output {} produced twice", i, out));
            }
            if (!is_under(out, out_dir)) {
                problems.push_back(fmt::format("step {}: output {} outside {}", i, out, out_dir.string()));
            }
        }
    }
    return problems;
}

std::optional<fs::path> find_executable(const std::string& name) {
    if (name.empty()) return std::nullopt;
    if (name.find('/') != std::string::npos) {
        if (::access(name.c_str(), X_OK) == 0) return fs::path(name);
        return std::nullopt;
    }
    const char* path = std::getenv("PATH");
    if (!path) return std::nullopt;
    std::string_view rest(path);
    while (true) {
        auto colon = rest.find(':');
        std::string dir(rest.substr(0, colon));
        if (dir.empty()) dir = ".";
        fs::path candidate = fs::path(dir) / name;
        if (::access(candidate.c_str(), X_OK) == 0 && !fs::is_directory(candidate)) return candidate;
        if (colon == std::string_view::npos) break;
        rest.remove_prefix(colon + 1);
    }
    return std::nullopt;
}

namespace {

struct ProcessResult {
    int exit_code = -1;
    std::string stderr_text;
};

ProcessResult run_process(const std::string& tool, const std::vector<std::string>& args, const fs::path& cwd) {
    int err_pipe[2];
    if (::pipe(err_pipe) != 0) throw StepFailed("pipe() failed");

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_addopen(&actions, STDOUT_FILENO, "/dev/null", O_WRONLY, 0);
    posix_spawn_file_actions_adddup2(&actions, err_pipe[1], STDERR_FILENO);
    posix_spawn_file_actions_addclose(&actions, err_pipe[0]);
    posix_spawn_file_actions_addclose(&actions, err_pipe[1]);
    if (!cwd.empty()) posix_spawn_file_actions_addchdir_np(&actions, cwd.c_str());

    std::vector<char*> argv;
    argv.push_back(const_cast<char*>(tool.c_str()));
    for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);

    pid_t pid = 0;
    int rc = posix_spawnp(&pid, tool.c_str(), &actions, nullptr, argv.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    ::close(err_pipe[1]);

    ProcessResult result;
    if (rc != 0) {
        ::close(err_pipe[0]);
        result.stderr_text = fmt::format("spawn failed: {}", std::strerror(rc));
        return result;
    }
    char buf[4096];
    ssize_t n;
    while ((n = ::read(err_pipe[0], buf, sizeof buf)) > 0) result.stderr_text.append(buf, static_cast<std::size_t>(n));
    ::close(err_pipe[0]);

    int status = 0;
    ::waitpid(pid, &status, 0);
    if (WIFEXITED(status)) {
        result.exit_code = WEXITSTATUS(status);
    } else if (WIFSIGNALED(status)) {
        result.exit_code = 128 + WTERMSIG(status);
    }
    return result;
}

ExecutionReport run_plan(const MediaPlan& plan, const fs::path& cwd) {
    ExecutionReport report;
    report.video_id = plan.video_id;
    report.steps.resize(plan.steps.size());
    if (plan.dry_run) return report;

    std::set<std::string> tools;
    for (const auto& s : plan.steps) tools.insert(s.tool);
    for (const auto& t : tools) {
        if (!find_executable(t)) throw ToolkitUnavailable("media toolkit '" + t + "' not found on PATH");
    }
    for (std::size_t i = 0; i < plan.steps.size(); ++i) {
        const auto& step = plan.steps[i];
        for (const auto& out : step.outputs) {
            fs::path target = cwd.empty() ? fs::path(out) : cwd / out;
            if (target.has_parent_path()) fs::create_directories(target.parent_path());
        }
        auto t0 = std::chrono::steady_clock::now();
        auto res = run_process(step.tool, step.argv, cwd);
        auto& sr = report.steps[i];
        sr.duration_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        sr.exit_code = res.exit_code;
        sr.stderr_text = res.stderr_text;
        if (res.exit_code == 0) {
            sr.status = StepStatus::Ok;
            continue;
        }
        sr.status = StepStatus::Failed;
        for (std::size_t j = i + 1; j < plan.steps.size(); ++j) report.steps[j].status = StepStatus::Aborted;
        report.ok = false;
        report.error = fmt::format("StepFailed: {} step {} ({}) exited with {}: {}", plan.video_id, i,
                                   to_string(step.purpose), res.exit_code, res.stderr_text);
        break;
    }
    return report;
}

}  // namespace

ExecutionReport execute_plan(const MediaPlan& plan, const fs::path& cwd) {
    auto report = run_plan(plan, cwd);
    if (!report.ok) throw StepFailed(report.error);
    return report;
}

std::vector<ExecutionReport> execute_plans(const std::vector<MediaPlan>& plans, std::size_t workers,
                                           const fs::path& cwd) {
    std::vector<ExecutionReport> reports(plans.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < plans.size(); i = next++) {
            try {
                reports[i] = run_plan(plans[i], cwd);
            } catch (const Error& e) {
                reports[i].video_id = plans[i].video_id;
                reports[i].ok = false;
                reports[i].error = e.kind() + ": " + e.what();
                StepReport aborted;
                aborted.status = StepStatus::Aborted;
                reports[i].steps.assign(plans[i].steps.size(), aborted);
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < std::max<std::size_t>(1, workers); ++w) pool.emplace_back(work);
    }
    std::stable_sort(reports.begin(), reports.end(),
                     [](const ExecutionReport& a, const ExecutionReport& b) { return a.video_id < b.video_id; });
    return reports;
}

json to_json(const CommandStep& s) {
    return {{"tool", s.tool},
            {"purpose", to_string(s.purpose)},
            {"argv", s.argv},
            {"inputs", s.inputs},
            {"outputs", s.outputs}};
}

json to_json(const MediaPlan& p) {
    json steps = json::array();
    for (const auto& s : p.steps) steps.push_back(to_json(s));
    return {{"video_id", p.video_id},
            {"dry_run", p.dry_run},
            {"media_missing", p.media_missing},
            {"steps", std::move(steps)},
            {"outputs", p.outputs}};
}

json to_json(const ExecutionReport& r) {
    json steps = json::array();
    for (const auto& s : r.steps) {
        steps.push_back({{"status", to_string(s.status)},
                         {"exit_code", s.exit_code},
                         {"duration_ms", s.duration_ms},
                         {"stderr", s.stderr_text}});
    }
    return {{"video_id", r.video_id}, {"ok", r.ok}, {"error", r.error}, {"steps", std::move(steps)}};
}

MediaPlan media_plan_from_json(const json& j) {
    try {
        MediaPlan p;
        p.video_id = j.at("video_id").get<std::string>();
        p.dry_run = j.value("dry_run", false);
        p.media_missing = j.value("media_missing", false);
        for (const auto& s : j.at("steps")) {
            CommandStep step;
            step.tool = s.at("tool").get<std::string>();
            auto purpose = s.at("purpose").get<std::string>();
            if (purpose == "cut") step.purpose = StepPurpose::Cut;
            else if (purpose == "concat") step.purpose = StepPurpose::Concat;
            else if (purpose == "extract_frames") step.purpose = StepPurpose::ExtractFrames;
            else if (purpose == "perturb") step.purpose = StepPurpose::Perturb;
            else throw SchemaMismatch("unknown step purpose '" + purpose + "'");
            step.argv = s.at("argv").get<std::vector<std::string>>();
            step.inputs = s.value("inputs", std::vector<std::string>{});
            step.outputs = s.value("outputs", std::vector<std::string>{});
            p.steps.push_back(std::move(step));
        }
        p.outputs = j.at("outputs").get<std::vector<std::string>>();
        return p;
    } catch (const json::exception& e) {
        throw SchemaMismatch(std::string("media plan: ") + e.what());
    }
}

}  // namespace timewarp
