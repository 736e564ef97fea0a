#include <doctest.h>

#include <functional>
#include <map>

#include <fmt/format.h>

#include "support.hpp"
#include "timewarp/errors.hpp"
#include "timewarp/eval.hpp"

using namespace timewarp;

namespace {

const std::vector<std::string> kOpts = {"The woman waves.", "The man sits.", "The dog barks.", "The door opens."};

std::vector<OrderStatement> probe_set(const std::string& vid) {
    std::vector<std::string> caps;
    for (int i = 0; i < 8; ++i) caps.push_back(fmt::format("Event {}.", i));
    return build_order_probes(twtest::make_record(vid, caps), "media/" + vid + ".mp4", 11).statements;
}

// Answers the first `n_correct` statements of each pair correctly, the rest wrongly.
std::vector<RawPrediction> answer(const std::vector<OrderStatement>& st,
                                  const std::function<std::size_t(const OrderStatement&)>& n_correct) {
    std::vector<RawPrediction> out;
    std::map<std::string, std::size_t> seen;
    for (const auto& s : st) {
        std::size_t k = seen[s.pair_id]++;
        bool right = k < n_correct(s);
        bool yes = right ? s.label : !s.label;
        out.push_back({s.id, yes ? "Yes" : "No"});
    }
    return out;
}

}  // namespace

TEST_CASE("parse ladder") {
    CHECK(parse_choice("i", "B", kOpts, false).option == 1u);
    CHECK(parse_choice("i", "B", kOpts, false).route == ParseRoute::Letter);
    CHECK(parse_choice("i", "(C)", kOpts, false).option == 2u);
    CHECK(parse_choice("i", "Answer: D.", kOpts, false).option == 3u);
    CHECK(parse_choice("i", "the dog barks", kOpts, false).option == 2u);
    CHECK(parse_choice("i", "the dog barks", kOpts, false).route == ParseRoute::ExactText);
    CHECK_FALSE(parse_choice("i", "A man waves.", kOpts, false).parsed());
    CHECK_FALSE(parse_choice("i", "E", kOpts, false).parsed());
    CHECK_FALSE(parse_choice("i", "", kOpts, false).parsed());

    auto y = parse_choice("i", "Yes, the woman waves first.", {}, true);
    CHECK(y.route == ParseRoute::YesNo);
    CHECK(y.yes == true);
    CHECK(parse_choice("i", "no", {}, true).yes == false);
    CHECK(parse_choice("i", "No.", {}, true).route == ParseRoute::ExactText);
    CHECK_FALSE(parse_choice("i", "It depends.", {}, true).parsed());
    CHECK_FALSE(parse_choice("i", "Nope", {}, true).parsed());
}

TEST_CASE("mcqa accuracy per split") {
    std::vector<BenchmarkItem> items;
    std::vector<RawPrediction> preds;
    for (int i = 0; i < 8; ++i) {
        BenchmarkItem b;
        b.id = fmt::format("q{}", i);
        b.split = i < 4 ? Split::Normal : Split::Shuffled;
        b.question = "?";
        b.options = kOpts;
        b.answer_index = static_cast<std::size_t>(i % 4);
        items.push_back(b);
        // q6 and q7 wrong
        std::size_t said = i < 6 ? b.answer_index : (b.answer_index + 1) % 4;
        preds.push_back({b.id, std::string(1, static_cast<char>('A' + said))});
    }
    auto r = score_mcqa(items, preds);
    CHECK(r.overall.total == 8);
    CHECK(r.overall.correct == 6);
    CHECK(r.overall.accuracy == doctest::Approx(75.0));
    CHECK(r.splits.at("normal").accuracy == doctest::Approx(100.0));
    CHECK(r.splits.at("shuffled").accuracy == doctest::Approx(50.0));
    CHECK(r.normal_minus_shuffled.value() == doctest::Approx(50.0));
    CHECK(render_accuracy_table(r, "m").find("75.00") != std::string::npos);

    preds.pop_back();
    preds.push_back({"q7", "no idea"});
    preds.push_back({"zzz", "A"});
    r = score_mcqa(items, preds);
    CHECK(r.overall.correct == 6);
    CHECK(r.overall.unparsed == 1);
    CHECK(r.unknown_predictions == 1);

    preds.pop_back();
    preds.pop_back();
    r = score_mcqa(items, preds);
    CHECK(r.overall.missing == 1);
    CHECK(r.overall.total == 8);

    preds.push_back({"q0", "A"});
    CHECK_THROWS_AS(score_mcqa(items, preds), DuplicatePrediction);
}

TEST_CASE("all sixteen quads: 25 / 25 / 6.25") {
    std::vector<QuadruplePrediction> quads;
    int text = 0, video = 0, group = 0;
    for (int bits = 0; bits < 16; ++bits) {
        QuadruplePrediction q{fmt::format("g{}", bits), bits & 1, (bits >> 1) & 1, (bits >> 2) & 1, (bits >> 3) & 1};
        quads.push_back(q);
        bool t = q.t1 == 0 && q.t2 == 1;
        bool v = q.v1 == 0 && q.v2 == 1;
        text += t;
        video += v;
        group += t && v;
        CHECK(text_correct(q, {}) == t);
        CHECK(video_correct(q, {}) == v);
        CHECK(group_correct(q, {}) == (t && v));
    }
    auto g = score_group(quads);
    CHECK(g.text == doctest::Approx(100.0 * text / 16));
    CHECK(g.video == doctest::Approx(100.0 * video / 16));
    CHECK(g.group == doctest::Approx(100.0 * group / 16));
    CHECK(g.group == doctest::Approx(6.25));
    CHECK(kQuotedRandomGroupScore == 12.5);

    quads[0].t1 = 2;
    CHECK_THROWS_AS(score_group(quads), InvalidInput);
}

TEST_CASE("random group baseline converges on the independence value") {
    auto g = random_group_baseline(200000, 9);
    CHECK(g.group == doctest::Approx(6.25).epsilon(0.05));
    CHECK(g.text == doctest::Approx(25.0).epsilon(0.02));
}

TEST_CASE("group predictions from A/B answers") {
    std::vector<RawPrediction> preds;
    auto ids = quad_item_ids("q");
    REQUIRE(ids == std::vector<std::string>{"q:t1", "q:t2", "q:v1", "q:v2"});
    preds = {{"q:t1", "A"}, {"q:t2", "B"}, {"q:v1", "A"}, {"q:v2", "B"}};
    CHECK(score_group_predictions({"q"}, preds).group == doctest::Approx(100.0));
    preds[3].response = "maybe";
    auto g = score_group_predictions({"q"}, preds);
    CHECK(g.group == 0.0);
    CHECK(g.text == doctest::Approx(100.0));
    CHECK(g.unparsed_fields == 1);
}

TEST_CASE("probe grading: 3 of 4 per pair, 5 of 8 per category") {
    auto st = probe_set("v");
    REQUIRE(st.size() == 24);
    // near: 3 + 2 = 5/8 passes; moderately_far: 4 + 0 = 4/8 fails; very_far: 2 + 2
    auto preds = answer(st, [](const OrderStatement& s) -> std::size_t {
        bool before = s.subtype == OrderSubtype::Before;
        switch (s.category) {
            case OrderCategory::Near: return before ? 3 : 2;
            case OrderCategory::ModeratelyFar: return before ? 4 : 0;
            default: return 2;
        }
    });
    auto r = grade_order_probes(st, preds);
    CHECK(r.statements == 24);
    CHECK(r.correct == 3 + 2 + 4 + 0 + 2 + 2);
    CHECK(r.subcategories.at("near/before").passed == 1);
    CHECK(r.subcategories.at("near/after").passed == 0);
    CHECK(r.subcategories.at("moderately_far/before").passed == 1);
    CHECK(r.subcategories.at("very_far/after").passed == 0);
    CHECK(r.subcategory_overall.units == 6);
    CHECK(r.subcategory_overall.passed == 2);
    CHECK(r.categories.at("near").passed == 1);
    CHECK(r.categories.at("moderately_far").passed == 0);
    CHECK(r.categories.at("very_far").passed == 0);
    CHECK(r.category_overall.rate == doctest::Approx(100.0 / 3));
    CHECK(render_grade_table(r).find("near") != std::string::npos);
}

TEST_CASE("missing and unparsed probe answers count as wrong") {
    auto st = probe_set("v");
    auto preds = answer(st, [](const OrderStatement&) -> std::size_t { return 4; });
    preds.erase(preds.begin());
    preds[0].response = "It depends.";
    auto r = grade_order_probes(st, preds);
    CHECK(r.missing == 1);
    CHECK(r.unparsed == 1);
    CHECK(r.correct == 22);
    CHECK(r.subcategories.at("near/before").passed == 0);
}

TEST_CASE("all-No sweep: every pair has exactly two right") {
    auto st = probe_set("a");
    auto more = probe_set("b");
    st.insert(st.end(), more.begin(), more.end());
    std::vector<RawPrediction> preds;
    for (const auto& s : st) preds.push_back({s.id, "No"});
    auto sw = strictness_sweep(st, preds);
    REQUIRE(sw.size() == 4);
    CHECK(sw[0].pass_rate == 100.0);
    CHECK(sw[1].pass_rate == 100.0);
    CHECK(sw[2].pass_rate == 0.0);
    CHECK(sw[3].pass_rate == 0.0);
    auto r = grade_order_probes(st, preds);
    CHECK(r.subcategory_overall.passed == 0);
    // 4/8 in every category is below 5/8
    CHECK(r.category_overall.passed == 0);
}

TEST_CASE("sweep is non-increasing in k") {
    auto st = probe_set("r");
    Rng rng(derive_seed(5, "sweep"));
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<RawPrediction> preds;
        for (const auto& s : st) preds.push_back({s.id, uniform_below(rng, 2) ? "Yes" : "No"});
        auto sw = strictness_sweep(st, preds);
        for (std::size_t i = 1; i < sw.size(); ++i) CHECK(sw[i].pass_rate <= sw[i - 1].pass_rate);
    }
}

TEST_CASE("predictions file") {
    twtest::TempDir d;
    auto p = d.path() / "p.jsonl";
    write_jsonl(p, {to_json(RawPrediction{"a", "B"}), to_json(RawPrediction{"b", "Yes"})});
    auto rows = load_predictions(p);
    REQUIRE(rows.size() == 2);
    CHECK(rows[1].item_id == "b");
    CHECK_THROWS_AS(index_predictions({{"a", "x"}, {"a", "y"}}), DuplicatePrediction);
}
