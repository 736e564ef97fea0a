#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "timewarp/permute.hpp"
#include "timewarp/preprocess.hpp"

namespace timewarp {

enum class StepPurpose { Cut, Concat, ExtractFrames, Perturb };

std::string to_string(StepPurpose p);

// One invocation of the external media toolkit. `argv` excludes the program
// name; nothing is ever passed through a shell.
struct CommandStep {
    std::string tool;
    std::vector<std::string> argv;
    StepPurpose purpose = StepPurpose::Cut;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;

    bool operator==(const CommandStep&) const = default;
};

struct MediaPlan {
    std::string video_id;
    std::vector<CommandStep> steps;
    std::vector<std::string> outputs;
    bool dry_run = false;
    // Set when the source media does not exist; the plan is still produced and
    // dry_run is forced.
    bool media_missing = false;

    bool operator==(const MediaPlan&) const = default;
};

struct MediaOptions {
    std::string toolkit = "ffmpeg";
    std::string video_codec = "libx264";
    std::string preset = "veryfast";
    int crf = 18;
    int fps = 30;
    bool dry_run = false;
};

enum class PerturbKind { Downscale, ColorDistort };

std::string to_string(PerturbKind k);

struct PerturbationSpec {
    PerturbKind kind = PerturbKind::Downscale;
    std::optional<double> downscale_factor;              // Downscale only, in (0, 1)
    std::optional<std::array<int, 3>> channel_map;      // ColorDistort only
    std::optional<double> hue_shift_deg;                 // ColorDistort only

    static PerturbationSpec downscale(double factor);
    static PerturbationSpec color_distort(std::array<int, 3> channel_map, double hue_shift_deg = 0.0);

    // Short tag used in file names and record references, e.g. "downscale0.25".
    std::string tag() const;
    bool operator==(const PerturbationSpec&) const = default;
};

// Throws InvalidSpec unless exactly the fields of the kind are set and the
// spec actually changes the frame.
void validate_spec(const PerturbationSpec& spec);

json to_json(const PerturbationSpec& spec);
PerturbationSpec perturbation_spec_from_json(const json& j);

struct FrameSize {
    int width = 0;
    int height = 0;
};

// "original", "shuffled" or "reversed".
std::string clip_variant(const std::optional<ScenePermutation>& perm);
fs::path clip_output_path(const fs::path& out_dir, const std::string& video_id,
                          const std::string& variant);

// Cuts each kept scene and concatenates the segments in permutation order
// (source order when `perm` is empty), re-encoding with fixed settings.
MediaPlan plan_clip_render(const VideoRecord& record, const ClipSpec& clip,
                           const std::optional<ScenePermutation>& perm, const fs::path& out_dir,
                           const MediaOptions& options = {});

// Midpoint-of-bin timestamps (k + 0.5) * duration / n.
std::vector<double> frame_timestamps(double duration_s, std::size_t n_frames);

fs::path frame_output_path(const fs::path& out_dir, const fs::path& clip_path, std::size_t k);

MediaPlan plan_frame_extraction(const fs::path& clip_path, double duration_s, const fs::path& out_dir,
                                std::size_t n_frames = 10, const MediaOptions& options = {});

// Downscale needs the frame size to scale back exactly; without it the plan
// scales back to the input size through scale2ref.
MediaPlan plan_perturbation(const std::vector<fs::path>& frames, const PerturbationSpec& spec,
                            const fs::path& out_dir, std::optional<FrameSize> size = std::nullopt,
                            const MediaOptions& options = {});

fs::path perturbed_frame_path(const fs::path& out_dir, const fs::path& frame, const PerturbationSpec& spec);

// Checks the plan invariants: inputs exist or are produced earlier, outputs
// are unique and lie under out_dir. Returns human-readable violations.
// Dry-run plans may name sources that are not on disk; pass
// require_inputs=false to skip that check.
std::vector<std::string> check_plan(const MediaPlan& plan, const fs::path& out_dir, bool require_inputs = true);

enum class StepStatus { Ok, Failed, Skipped, Aborted };

std::string to_string(StepStatus s);

struct StepReport {
    StepStatus status = StepStatus::Skipped;
    int exit_code = 0;
    double duration_ms = 0.0;
    std::string stderr_text;
};

struct ExecutionReport {
    std::string video_id;
    std::vector<StepReport> steps;
    bool ok = true;
    std::string error;  // ToolkitUnavailable / StepFailed message when !ok
};

// Runs steps in order; a failing step aborts the rest. Throws
// ToolkitUnavailable before running anything when a tool is not on PATH and
// StepFailed (with captured stderr) on a nonzero exit. Relative paths in the
// plan resolve against `cwd` when it is given.
ExecutionReport execute_plan(const MediaPlan& plan, const fs::path& cwd = {});

// Runs plans on a bounded worker pool. Errors are captured per plan; reports
// are ordered by video_id.
std::vector<ExecutionReport> execute_plans(const std::vector<MediaPlan>& plans, std::size_t workers,
                                           const fs::path& cwd = {});

// Resolves a program name against PATH (or checks an explicit path).
std::optional<fs::path> find_executable(const std::string& name);

json to_json(const CommandStep& step);
json to_json(const MediaPlan& plan);
json to_json(const ExecutionReport& report);
MediaPlan media_plan_from_json(const json& j);

}  // namespace timewarp
