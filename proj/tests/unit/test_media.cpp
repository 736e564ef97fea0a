#include <doctest.h>

#include <sys/stat.h>

#include <algorithm>

#include "support.hpp"
#include "timewarp/errors.hpp"
#include "timewarp/media.hpp"

using namespace timewarp;
using twtest::TempDir;

namespace {

ClipSpec full_clip(const VideoRecord& r) {
    ClipSpec c;
    c.video_id = r.video_id;
    for (std::size_t i = 0; i < r.scenes.size(); ++i) c.kept_scene_indices.push_back(i);
    c.trim_end_s = c.clip_duration_s = r.scenes.back().end_s;
    return c;
}

bool contains(const std::vector<std::string>& argv, const std::string& needle) {
    return std::any_of(argv.begin(), argv.end(), [&](const auto& a) { return a.find(needle) != std::string::npos; });
}

// Stand-in toolkit: creates its last argument (the output) unless told to fail.
fs::path fake_tool(const fs::path& dir, bool fail) {
    auto p = dir / (fail ? "failtool" : "oktool");
    write_file(p, fail ? "#!/bin/sh\necho boom >&2\nexit 7\n" : "#!/bin/sh\nfor a; do last=$a; done\n: > \"$last\"\n");
    ::chmod(p.c_str(), 0755);
    return p;
}

}  // namespace

TEST_CASE("2-scene reversed clip: two cuts then a concat of [seg1, seg0]") {
    auto r = twtest::make_record("v", {"A", "B"});
    ScenePermutation rev{"v", PermKind::Reversed, {1, 0}, 0};
    auto plan = plan_clip_render(r, full_clip(r), rev, "out");
    REQUIRE(plan.steps.size() == 3);
    CHECK(plan.steps[0].purpose == StepPurpose::Cut);
    CHECK(plan.steps[1].purpose == StepPurpose::Cut);
    CHECK(plan.steps[2].purpose == StepPurpose::Concat);
    CHECK(plan.steps[2].inputs == std::vector<std::string>{plan.steps[1].outputs[0], plan.steps[0].outputs[0]});
    CHECK(plan.outputs == std::vector<std::string>{"out/v.reversed.mp4"});
    CHECK(plan.media_missing);  // media/v.mp4 is not on disk
    CHECK(plan.dry_run);
}

TEST_CASE("no permutation: concat follows scene order") {
    auto r = twtest::make_record("v", {"A", "B", "C"});
    auto plan = plan_clip_render(r, full_clip(r), std::nullopt, "out");
    CHECK(plan.steps.back().inputs ==
          std::vector<std::string>{plan.steps[0].outputs[0], plan.steps[1].outputs[0], plan.steps[2].outputs[0]});
    CHECK(plan.outputs[0] == "out/v.original.mp4");
    CHECK(check_plan(plan, "out", false).empty());
}

TEST_CASE("cut argv carries scene bounds") {
    auto r = twtest::make_record("v", {"A", "B"});
    auto plan = plan_clip_render(r, full_clip(r), std::nullopt, "out");
    const auto& a = plan.steps[1].argv;
    auto ss = std::find(a.begin(), a.end(), "-ss");
    REQUIRE(ss != a.end());
    CHECK(*(ss + 1) == "10.000");
    CHECK(*(std::find(a.begin(), a.end(), "-to") + 1) == "18.000");
}

TEST_CASE("render then inverse permutation restores segment order") {
    auto r = twtest::make_record("v", {"A", "B", "C", "D"});
    ScenePermutation p{"v", PermKind::Shuffled, {2, 0, 3, 1}, 5};
    auto plan = plan_clip_render(r, full_clip(r), p, "out");
    std::vector<std::string> segs;
    for (std::size_t i = 0; i < 4; ++i) segs.push_back(plan.steps[i].outputs[0]);
    const auto& concat_inputs = plan.steps.back().inputs;
    CHECK(apply_permutation(invert(p.pi), concat_inputs) == segs);
}

TEST_CASE("foreign permutation is rejected") {
    auto r = twtest::make_record("v", {"A", "B"});
    ScenePermutation other{"w", PermKind::Reversed, {1, 0}, 0};
    CHECK_THROWS_AS(plan_clip_render(r, full_clip(r), other, "out"), PreconditionFailed);
}

TEST_CASE("golden render plan for a fixture record") {
    auto corpus = load_corpus(twtest::data_dir() / "fixture_corpus.jsonl", CorpusFormat::CanonicalJsonl).corpus;
    const auto* rec = corpus.find("vid011");
    REQUIRE(rec != nullptr);
    ScenePermutation p{"vid011", PermKind::Shuffled, {1, 3, 0, 2}, 0};
    auto plan = plan_clip_render(*rec, full_clip(*rec), p, "media");
    auto golden = read_json(twtest::data_dir() / "golden" / "render_plan_vid011.json");
    CHECK(to_json(plan).dump(2) == golden.dump(2));
    CHECK(media_plan_from_json(golden) == plan);
}

TEST_CASE("frame timestamps") {
    auto t = frame_timestamps(10.0, 10);
    REQUIRE(t.size() == 10);
    for (std::size_t k = 0; k < 10; ++k) CHECK(t[k] == doctest::Approx(0.5 + static_cast<double>(k)));
    CHECK(frame_timestamps(7.0, 1) == std::vector<double>{3.5});
    CHECK(frame_timestamps(21.0, 10)[0] == doctest::Approx(1.05));
}

TEST_CASE("frame extraction plan names frames by index") {
    auto plan = plan_frame_extraction("media/v.original.mp4", 10.0, "frames", 3);
    REQUIRE(plan.steps.size() == 3);
    CHECK(plan.outputs[2] == "frames/v.original.f02.png");
    CHECK(contains(plan.steps[1].argv, "1.500") == false);
    CHECK(*(std::find(plan.steps[1].argv.begin(), plan.steps[1].argv.end(), "-ss") + 1) == "5.000");
    CHECK_THROWS_AS(plan_frame_extraction("x.mp4", 1.0, "frames", 0), PreconditionFailed);
}

TEST_CASE("downscale with a known size goes 640x360 -> 160x90 -> 640x360") {
    auto plan = plan_perturbation({"frames/a.f00.png"}, PerturbationSpec::downscale(0.25), "pert",
                                  FrameSize{640, 360});
    REQUIRE(plan.steps.size() == 1);
    CHECK(contains(plan.steps[0].argv, "scale=160:90:flags=area,scale=640:360:flags=neighbor"));
    CHECK(plan.outputs[0] == "pert/a.f00.downscale0.25.png");
}

TEST_CASE("channel map [2,1,0] swaps red and blue") {
    auto plan = plan_perturbation({"f.png"}, PerturbationSpec::color_distort({2, 1, 0}), "pert");
    CHECK(contains(plan.steps[0].argv, "colorchannelmixer=rr=0:rg=0:rb=1:gr=0:gg=1:gb=0:br=1:bg=0:bb=0"));
    auto hue = plan_perturbation({"f.png"}, PerturbationSpec::color_distort({0, 1, 2}, 90), "pert");
    CHECK(contains(hue.steps[0].argv, "hue=h=90"));
}

TEST_CASE("perturbation specs must perturb") {
    CHECK_THROWS_AS(validate_spec(PerturbationSpec::color_distort({0, 1, 2}, 0.0)), InvalidSpec);
    CHECK_THROWS_AS(validate_spec(PerturbationSpec::color_distort({0, 0, 2}, 0.0)), InvalidSpec);
    CHECK_THROWS_AS(validate_spec(PerturbationSpec::downscale(1.0)), InvalidSpec);
    CHECK_THROWS_AS(validate_spec(PerturbationSpec::downscale(0.0)), InvalidSpec);
    CHECK_NOTHROW(validate_spec(PerturbationSpec::downscale(0.5)));
    auto s = PerturbationSpec::color_distort({1, 2, 0}, 15);
    CHECK(perturbation_spec_from_json(to_json(s)) == s);
}

TEST_CASE("check_plan catches missing inputs, duplicates and escapes") {
    MediaPlan p;
    p.steps.push_back({"t", {}, StepPurpose::Cut, {"nowhere.mp4"}, {"out/a.mp4"}});
    p.steps.push_back({"t", {}, StepPurpose::Cut, {"out/a.mp4"}, {"out/a.mp4"}});
    p.steps.push_back({"t", {}, StepPurpose::Cut, {"out/a.mp4"}, {"../b.mp4"}});
    auto problems = check_plan(p, "out");
    CHECK(problems.size() == 3);
    CHECK(check_plan(p, "out", false).size() == 2);
}

TEST_CASE("dry run reports every step skipped") {
    auto r = twtest::make_record("v", {"A", "B"});
    MediaOptions o;
    o.dry_run = true;
    o.toolkit = "definitely-not-installed-tool";
    auto plan = plan_clip_render(r, full_clip(r), std::nullopt, "out", o);
    auto rep = execute_plan(plan);
    CHECK(rep.ok);
    for (const auto& s : rep.steps) CHECK(s.status == StepStatus::Skipped);
}

TEST_CASE("missing toolkit fails before any step") {
    TempDir dir;
    write_file(dir / "v.mp4", "x");
    auto r = twtest::make_record("v", {"A", "B"});
    r.media_path = (dir / "v.mp4").string();
    MediaOptions o;
    o.toolkit = "definitely-not-installed-tool";
    auto plan = plan_clip_render(r, full_clip(r), std::nullopt, dir / "out", o);
    CHECK_FALSE(plan.dry_run);
    CHECK_THROWS_AS(execute_plan(plan), ToolkitUnavailable);
    CHECK_FALSE(fs::exists(dir / "out"));
}

TEST_CASE("execution with a stand-in toolkit, relative outputs under cwd") {
    TempDir dir;
    write_file(dir / "v.mp4", "x");
    auto r = twtest::make_record("v", {"A", "B", "C"});
    r.media_path = (dir / "v.mp4").string();
    MediaOptions o;
    o.toolkit = fake_tool(dir.path(), false).string();
    auto plan = plan_clip_render(r, full_clip(r), std::nullopt, "media", o);
    fs::create_directories(dir / "run");
    auto reps = execute_plans({plan, plan_frame_extraction("media/v.original.mp4", 24, "frames", 2, o)}, 2,
                              dir / "run");
    for (const auto& rep : reps) CHECK(rep.ok);
    CHECK(fs::exists(dir / "run" / "media" / "v.original.mp4"));
    CHECK(fs::exists(dir / "run" / "frames" / "v.original.f01.png"));
}

TEST_CASE("a failing step aborts the rest and reports stderr") {
    TempDir dir;
    write_file(dir / "v.mp4", "x");
    auto r = twtest::make_record("v", {"A", "B"});
    r.media_path = (dir / "v.mp4").string();
    MediaOptions o;
    o.toolkit = fake_tool(dir.path(), true).string();
    auto plan = plan_clip_render(r, full_clip(r), std::nullopt, dir / "out", o);
    auto reps = execute_plans({plan}, 1);
    REQUIRE(reps.size() == 1);
    CHECK_FALSE(reps[0].ok);
    CHECK(reps[0].steps[0].status == StepStatus::Failed);
    CHECK(reps[0].steps[0].exit_code == 7);
    CHECK(reps[0].steps[0].stderr_text.find("boom") != std::string::npos);
    CHECK(reps[0].steps[1].status == StepStatus::Aborted);
    CHECK(reps[0].steps[2].status == StepStatus::Aborted);
    CHECK_THROWS_AS(execute_plan(plan), StepFailed);
}

TEST_CASE("plans round trip through json") {
    auto r = twtest::make_record("v", {"A", "B"});
    auto plan = plan_clip_render(r, full_clip(r), std::nullopt, "out");
    CHECK(media_plan_from_json(to_json(plan)) == plan);
}
