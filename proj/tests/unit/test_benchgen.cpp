#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include <fmt/format.h>

#include "support.hpp"
#include "timewarp/benchgen.hpp"
#include "timewarp/errors.hpp"

using namespace timewarp;

namespace {

const PromptLibrary& lib() { return PromptLibrary::shared_default(); }

std::vector<std::string> caps(std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back("Event " + std::string(1, static_cast<char>('a' + i)) + ".");
    return out;
}

}  // namespace

TEST_CASE("five captions: near/before pairs the middle with its predecessor") {
    auto rec = twtest::make_record("v5", caps(5));
    auto pb = build_order_probes(rec, "media/v5.mp4", 1);
    REQUIRE(pb.statements.size() >= 4);
    // m = 2, partner 1
    std::vector<std::string> want = {
        "In the video, Event b happens before Event c.",
        "In the video, Event b happens after Event c.",
        "In the video, Event c happens after Event b.",
        "In the video, Event c happens before Event b.",
    };
    std::vector<bool> labels = {true, false, true, false};
    for (std::size_t k = 0; k < 4; ++k) {
        const auto& s = pb.statements[k];
        CHECK(s.category == OrderCategory::Near);
        CHECK(s.subtype == OrderSubtype::Before);
        CHECK(s.statement == want[k]);
        CHECK(s.label == labels[k]);
        CHECK(s.hop_distance == 1);
        CHECK(s.time_separation_s == doctest::Approx(10.0));
        CHECK(s.pair_id == "v5:near:before");
    }
    CHECK(to_json(pb.statements[1])["label"] == "no");
}

TEST_CASE("four captions cannot reach very_far") {
    auto rec = twtest::make_record("v4", caps(4));
    auto pb = build_order_probes(rec, "m.mp4", 1);
    // m = 2: index 4 does not exist, so moderately_far/after is missing too
    CHECK(pb.statements.size() == 12);
    REQUIRE(pb.coverage.size() == 6);
    for (const auto& c : pb.coverage) {
        bool want = c.category == OrderCategory::Near ||
                    (c.category == OrderCategory::ModeratelyFar && c.subtype == OrderSubtype::Before);
        CHECK(c.present == want);
    }
    for (const auto& s : pb.statements) CHECK(s.category != OrderCategory::VeryFar);
}

TEST_CASE("eight captions: every category has 8 statements, balanced labels") {
    auto rec = twtest::make_record("v8", caps(8));
    auto pb = build_order_probes(rec, "m.mp4", 3);
    CHECK(pb.statements.size() == 24);
    std::map<OrderCategory, int> per, yes;
    for (const auto& s : pb.statements) {
        per[s.category]++;
        yes[s.category] += s.label ? 1 : 0;
        CHECK(s.hop_distance >= min_hops(s.category));
        if (s.category != OrderCategory::VeryFar) CHECK(s.hop_distance == min_hops(s.category));
        CHECK(order_statement_from_json(to_json(s)) == s);
    }
    for (auto c : kOrderCategories) {
        CHECK(per[c] == 8);
        CHECK(yes[c] == 4);
    }
    // stride 10 puts near at 10 s and moderately_far at 20 s, inside their bins
    CHECK(pb.warnings.empty());
    CHECK(build_order_probes(rec, "m.mp4", 3).statements == pb.statements);
}

TEST_CASE("separation outside the nominal bin warns") {
    auto rec = twtest::make_record("vw", caps(5), 2, 3);
    auto pb = build_order_probes(rec, "m.mp4", 0);
    CHECK_FALSE(pb.warnings.empty());
}

TEST_CASE("probes need four captions") {
    auto rec = twtest::make_record("v3", caps(3));
    CHECK_THROWS_AS(build_order_probes(rec, "m.mp4", 0), TooFewScenes);
}

TEST_CASE("probe video selection") {
    Corpus c;
    for (int i = 0; i < 30; ++i) c.records.push_back(twtest::make_record(fmt::format("v{:02}", i), caps(3 + i % 4)));
    // 3,4,5,6 captions cycle: 3 in 4 are eligible
    auto all = select_probe_videos(c, 500, 4, 1);
    CHECK(all.eligible == 22);
    CHECK(all.records.size() == 22);
    CHECK(all.warning.has_value());
    auto some = select_probe_videos(c, 10, 4, 1);
    CHECK(some.records.size() == 10);
    CHECK_FALSE(some.warning.has_value());
    for (std::size_t i = 1; i < some.records.size(); ++i)
        CHECK(some.records[i - 1]->video_id < some.records[i]->video_id);
    for (const auto* r : some.records) CHECK(r->scenes.size() >= 4);
    auto again = select_probe_videos(c, 10, 4, 1);
    CHECK(again.records == some.records);
}

TEST_CASE("mcqa benchmark: normal and shuffled splits") {
    LlmClient gen(std::make_shared<MockBackend>(lib()));
    auto rec = twtest::make_record("v", {"A walks in.", "A sits.", "A reads.", "A leaves."});
    McqaSource src;
    src.record = &rec;
    src.clip = {"v", {0, 1, 2, 3}, 38, 38, false};
    src.perm = ScenePermutation{"v", PermKind::Reversed, {3, 2, 1, 0}, 1};
    src.video_path = "media/v.original.mp4";
    src.shuffled_video_path = "media/v.reversed.mp4";
    auto b = build_mcqa_benchmark({src}, gen, lib());
    REQUIRE(b.records.size() == 6);
    std::vector<std::string> orig = {"A walks in.", "A sits.", "A reads.", "A leaves."};
    std::vector<std::string> rev(orig.rbegin(), orig.rend());
    for (std::size_t i = 0; i < 3; ++i) {
        const auto& n = b.records[i];
        const auto& s = b.records[i + 3];
        CHECK(n.split == Split::Normal);
        CHECK(s.split == Split::Shuffled);
        CHECK(n.options.size() == 4);
        CHECK(n.options == s.options);
        CHECK(n.question == s.question);
        CHECK(n.options[n.answer_index] == orig[i + 1]);
        // successor of the asked event in the reversed narrative, cyclic
        auto pos = static_cast<std::size_t>(std::find(rev.begin(), rev.end(), orig[i]) - rev.begin());
        CHECK(s.options[s.answer_index] == rev[(pos + 1) % 4]);
        CHECK(s.video_path == "media/v.reversed.mp4");
        CHECK(s.perm_ref == src.perm->id());
        CHECK_FALSE(n.perm_ref.has_value());
        CHECK(benchmark_item_from_json(to_json(s)) == s);
    }

    src.perm.reset();
    CHECK(build_mcqa_benchmark({src}, gen, lib()).records.size() == 3);
}

TEST_CASE("split and category names") {
    CHECK(parse_split("shuffled") == Split::Shuffled);
    CHECK_THROWS(parse_split("other"));
    CHECK(parse_order_category("moderately_far") == OrderCategory::ModeratelyFar);
    CHECK(to_string(OrderCategory::VeryFar) == "very_far");
    CHECK(std::isinf(nominal_bin(OrderCategory::VeryFar).second));
}
