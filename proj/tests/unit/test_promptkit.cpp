#include <doctest.h>

#include "support.hpp"
#include "timewarp/errors.hpp"
#include "timewarp/promptkit.hpp"

using namespace timewarp;

namespace {

const PromptLibrary& lib() { return PromptLibrary::shared_default(); }

std::size_t count_of(const std::string& hay, const std::string& needle) {
    std::size_t n = 0;
    for (auto p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + 1)) ++n;
    return n;
}

}  // namespace

TEST_CASE("every shipped template is present") {
    for (const char* id : {templates::kOpenEndedQa, templates::kMcqa, templates::kDispreferred,
                           templates::kShuffledOptionSelect, templates::kDescribe, templates::kEvalMcqa,
                           templates::kEvalBinary, templates::kEvalCaptionMatch, templates::kEvalVideoMatch}) {
        CHECK(lib().has(id));
    }
    for (int k = 1; k <= kHallucinationPromptCount; ++k) CHECK(lib().has(hallucination_template_id(k)));
    CHECK(lib().ids().size() == 16);
    CHECK_THROWS_AS(hallucination_template_id(8), UnknownTemplate);
}

TEST_CASE("hallucination_1 renders the fixed instruction verbatim") {
    CHECK(lib().render("hallucination_1", {}) ==
          "Describe the video with imaginative sequences of events that may unfold over time.");
}

TEST_CASE("oe_qa_gen embeds the caption once and leaves no placeholders") {
    auto text = lib().render(templates::kOpenEndedQa, {{"composite_caption", "First, A Then, B"}});
    CHECK(count_of(text, "First, A Then, B") == 1);
    CHECK(text.find("{composite_caption}") == std::string::npos);
    CHECK(text.find("{{") == std::string::npos);
    CHECK(text.find(R"({"items": [{"question")") != std::string::npos);  // escaped braces rendered
}

TEST_CASE("render errors") {
    CHECK_THROWS_AS(lib().render("nope", {}), UnknownTemplate);
    try {
        lib().render(templates::kDispreferred, {{"composite_caption", "First, A Then, B"}});
        FAIL("expected MissingPlaceholder");
    } catch (const MissingPlaceholder& e) {
        CHECK(std::string(e.what()).find("question") != std::string::npos);
    }
}

TEST_CASE("render is injective in the placeholder values") {
    auto a = lib().render(templates::kOpenEndedQa, {{"composite_caption", "First, A Then, B"}});
    auto b = lib().render(templates::kOpenEndedQa, {{"composite_caption", "First, B Then, A"}});
    CHECK(a != b);
}

TEST_CASE("template header parsing") {
    auto t = parse_template("x", "required: [a, b]\nHello {a} and {b}, {{literal}}");
    CHECK(t.required_placeholders == std::set<std::string>{"a", "b"});
    PromptLibrary l;
    l.add(t);
    CHECK(l.render("x", {{"a", "1"}, {"b", "2"}}) == "Hello 1 and 2, {literal}");
    CHECK_THROWS_AS(parse_template("y", "Hello"), TemplateFormatError);
    CHECK_THROWS_AS(parse_template("y", "required: [a]\nHello {b}"), TemplateFormatError);
    CHECK_THROWS_AS(parse_template("y", "required: []\nstray { brace"), TemplateFormatError);
}

TEST_CASE("oe envelope: three pairs") {
    auto p = parse_oe_qa(R"({"items":[
        {"question":"What happens after the dog barks?","answer":"The cat runs.","relation":"after"},
        {"question":"What happens before the cat runs?","answer":"The dog barks.","relation":"before"},
        {"question":"What happens at the end?","answer":"Rain.","relation":"end"}]})");
    CHECK(p.items.size() == 3);
    CHECK(p.dropped.empty());
    CHECK(p.items[1].target_relation == TemporalRelation::Before);
}

TEST_CASE("oe envelope: one empty answer dropped with a diagnostic") {
    auto p = parse_oe_qa(R"(Sure! {"items":[
        {"question":"What happens after A?","answer":"B","relation":"after"},
        {"question":"What happens after B?","answer":"  ","relation":"after"},
        {"question":"What happens before B?","answer":"A","relation":"before"}]} Hope this helps.)");
    CHECK(p.items.size() == 2);
    REQUIRE(p.dropped.size() == 1);
    CHECK(p.dropped[0].find("item 1") != std::string::npos);
}

TEST_CASE("oe envelope: other invariants") {
    auto p = parse_oe_qa(R"({"items":[
        {"question":"Who is the man?","answer":"Bob","relation":"after"},
        {"question":"What happens after A?","answer":"B","relation":"sideways"},
        "junk"]})");
    CHECK(p.items.empty());
    CHECK(p.dropped.size() == 3);
}

TEST_CASE("prose or broken JSON is a ParseFailure carrying the raw text") {
    try {
        parse_oe_qa("I cannot help with that.");
        FAIL("expected ParseFailure");
    } catch (const ParseFailure& e) {
        CHECK(e.raw() == "I cannot help with that.");
    }
    CHECK_THROWS_AS(parse_oe_qa(R"({"items": [ {"question": })"), ParseFailure);
    CHECK_THROWS_AS(parse_oe_qa(R"({"answers": []})"), ParseFailure);
}

TEST_CASE("mcqa envelope checks") {
    auto p = parse_mcqa(R"({"items":[
        {"question":"What happens after A?","options":["B","C","D","E"],"answer_index":2},
        {"question":"What happens after A?","options":["B","B","D","E"],"answer_index":0},
        {"question":"What happens after A?","options":["B","C","D","E"],"answer_index":5},
        {"question":"What happens after A?","options":["B","C","D"],"answer_index":0}]})");
    REQUIRE(p.items.size() == 1);
    CHECK(p.items[0].answer_index == 2);
    REQUIRE(p.dropped.size() == 3);
    CHECK(p.dropped[0].find("duplicate") != std::string::npos);
    CHECK(p.dropped[1].find("out of range") != std::string::npos);
}

TEST_CASE("envelopes round trip") {
    std::vector<OpenEndedQA> qa{{"What happens after A?", "B", TemporalRelation::After},
                                {"What happens between A and C?", "B", TemporalRelation::Between}};
    CHECK(parse_oe_qa(to_envelope(qa)).items == qa);
    std::vector<McqaItem> mc{{"What happens after A?", {"B", "C", "D", "E", "F"}, 4, {}}};
    CHECK(parse_mcqa(to_envelope(mc)).items == mc);
    CHECK(to_envelope(qa).rfind(R"({"items":[{"question":)", 0) == 0);
}

TEST_CASE("options are lettered") {
    CHECK(render_options({"x", "y", "z"}) == "A. x\nB. y\nC. z");
    CHECK(mentions_temporal_relation("What happens first?"));
    CHECK_FALSE(mentions_temporal_relation("What colour is the car?"));
}
