#include "timewarp/benchgen.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "timewarp/errors.hpp"

namespace timewarp {

std::string to_string(Split s) { return s == Split::Normal ? "normal" : "shuffled"; }

Split parse_split(const std::string& s) {
    if (s == "normal") return Split::Normal;
    if (s == "shuffled") return Split::Shuffled;
    throw SchemaMismatch("unknown split '" + s + "'");
}

json to_json(const BenchmarkItem& item) {
    return {{"id", item.id},
            {"video_path", item.video_path},
            {"split", to_string(item.split)},
            {"question", item.question},
            {"options", item.options},
            {"answer_index", item.answer_index},
            {"perm_ref", item.perm_ref ? json(*item.perm_ref) : json(nullptr)}};
}

BenchmarkItem benchmark_item_from_json(const json& j) {
    try {
        BenchmarkItem b;
        b.id = j.at("id").get<std::string>();
        b.video_path = j.at("video_path").get<std::string>();
        b.split = parse_split(j.at("split").get<std::string>());
        b.question = j.at("question").get<std::string>();
        b.options = j.at("options").get<std::vector<std::string>>();
        b.answer_index = j.at("answer_index").get<std::size_t>();
        if (const auto& p = j.at("perm_ref"); !p.is_null()) b.perm_ref = p.get<std::string>();
        if (b.answer_index >= b.options.size()) throw SchemaMismatch("answer_index out of range in " + b.id);
        return b;
    } catch (const json::exception& e) {
        throw SchemaMismatch(std::string("bad benchmark row: ") + e.what());
    }
}

namespace {

GenRequest text_request(std::string prompt, const GenSettings& s) {
    GenRequest r;
    r.prompt = std::move(prompt);
    r.model_id = s.model_id;
    r.temperature = s.temperature;
    r.max_tokens = s.max_tokens;
    return r;
}

}  // namespace

Built<BenchmarkItem> build_mcqa_benchmark(const std::vector<McqaSource>& videos, LlmClient& gen,
                                          const PromptLibrary& prompts, const GenSettings& settings) {
    Built<BenchmarkItem> out;
    for (const auto& v : videos) {
        if (!v.record) throw PreconditionFailed("build_mcqa_benchmark: null record");
        const auto& vid = v.record->video_id;
        auto original = build_composite_caption(*v.record, v.clip.kept_scene_indices);
        Parsed<McqaItem> parsed;
        try {
            auto resp = gen.generate(
                text_request(prompts.render(templates::kMcqa, {{"composite_caption", original.rendered}}), settings));
            parsed = parse_mcqa(resp.text);
        } catch (const ParseFailure& e) {
            out.diagnostics.push_back({vid, "mcqa", std::string("ParseFailure: ") + e.what()});
            continue;
        }
        for (const auto& d : parsed.dropped) out.diagnostics.push_back({vid, "mcqa", d});

        std::vector<BenchmarkItem> normal, shuffled;
        for (const auto& item : parsed.items) {
            BenchmarkItem b;
            b.id = content_id({vid, item.question, "normal"});
            b.video_path = v.video_path;
            b.split = Split::Normal;
            b.question = item.question;
            b.options = item.options;
            b.answer_index = item.answer_index;
            normal.push_back(std::move(b));
        }
        if (v.perm) {
            auto permuted = build_composite_caption(*v.record, permuted_scene_order(v.clip, *v.perm));
            for (const auto& n : normal) {
                auto field = "shuffled:" + n.id;
                std::string prompt = prompts.render(templates::kShuffledOptionSelect,
                                                    {{"composite_caption", permuted.rendered},
                                                     {"question", n.question},
                                                     {"options", render_options(n.options)}});
                Parsed<McqaItem> rekey;
                try {
                    rekey = parse_mcqa(gen.generate(text_request(prompt, settings)).text);
                } catch (const ParseFailure& e) {
                    out.diagnostics.push_back({vid, field, std::string("ParseFailure: ") + e.what()});
                    continue;
                }
                for (const auto& d : rekey.dropped) out.diagnostics.push_back({vid, field, d});
                if (rekey.items.empty()) continue;
                const auto& r = rekey.items.front();
                if (r.options != n.options) {
                    out.diagnostics.push_back({vid, field, "generator changed the options"});
                    continue;
                }
                BenchmarkItem b = n;
                b.id = content_id({vid, n.question, "shuffled"});
                b.video_path = v.shuffled_video_path;
                b.split = Split::Shuffled;
                b.answer_index = r.answer_index;
                b.perm_ref = v.perm->id();
                shuffled.push_back(std::move(b));
            }
        }
        for (auto& b : normal) out.records.push_back(std::move(b));
        for (auto& b : shuffled) out.records.push_back(std::move(b));
    }
    return out;
}

// ---------------------------------------------------------------- probes

std::string to_string(OrderCategory c) {
    switch (c) {
        case OrderCategory::Near: return "near";
        case OrderCategory::ModeratelyFar: return "moderately_far";
        case OrderCategory::VeryFar: return "very_far";
    }
    return "near";
}

std::string to_string(OrderSubtype s) { return s == OrderSubtype::Before ? "before" : "after"; }

OrderCategory parse_order_category(const std::string& s) {
    if (s == "near") return OrderCategory::Near;
    if (s == "moderately_far") return OrderCategory::ModeratelyFar;
    if (s == "very_far") return OrderCategory::VeryFar;
    throw SchemaMismatch("unknown order category '" + s + "'");
}

OrderSubtype parse_order_subtype(const std::string& s) {
    if (s == "before") return OrderSubtype::Before;
    if (s == "after") return OrderSubtype::After;
    throw SchemaMismatch("unknown order subtype '" + s + "'");
}

std::size_t min_hops(OrderCategory c) {
    switch (c) {
        case OrderCategory::Near: return 1;
        case OrderCategory::ModeratelyFar: return 2;
        case OrderCategory::VeryFar: return 3;
    }
    return 1;
}

std::pair<double, double> nominal_bin(OrderCategory c) {
    switch (c) {
        case OrderCategory::Near: return {10.0, 20.0};
        case OrderCategory::ModeratelyFar: return {20.0, 30.0};
        case OrderCategory::VeryFar: return {30.0, std::numeric_limits<double>::infinity()};
    }
    return {0.0, 0.0};
}

json to_json(const OrderStatement& s) {
    return {{"id", s.id},
            {"video_path", s.video_path},
            {"pair_id", s.pair_id},
            {"category", to_string(s.category)},
            {"subtype", to_string(s.subtype)},
            {"statement", s.statement},
            {"label", s.label ? "yes" : "no"},
            {"hop_distance", s.hop_distance},
            {"time_separation_s", s.time_separation_s}};
}

OrderStatement order_statement_from_json(const json& j) {
    try {
        OrderStatement s;
        s.id = j.at("id").get<std::string>();
        s.video_path = j.at("video_path").get<std::string>();
        s.pair_id = j.at("pair_id").get<std::string>();
        s.category = parse_order_category(j.at("category").get<std::string>());
        s.subtype = parse_order_subtype(j.at("subtype").get<std::string>());
        s.statement = j.at("statement").get<std::string>();
        auto label = j.at("label").get<std::string>();
        if (label != "yes" && label != "no") throw SchemaMismatch("label must be yes or no in " + s.id);
        s.label = label == "yes";
        s.hop_distance = j.at("hop_distance").get<std::size_t>();
        s.time_separation_s = j.at("time_separation_s").get<double>();
        return s;
    } catch (const json::exception& e) {
        throw SchemaMismatch(std::string("bad probe row: ") + e.what());
    }
}

namespace {

std::string event_text(const std::string& caption) {
    std::string s = trim(caption);
    while (!s.empty() && (s.back() == '.' || s.back() == '!' || s.back() == '?')) s.pop_back();
    return s;
}

}  // namespace

std::string order_statement_text(const std::string& a, bool before, const std::string& b) {
    return fmt::format("In the video, {} happens {} {}.", a, before ? "before" : "after", b);
}

ProbeBuild build_order_probes(const VideoRecord& record, const std::string& video_path, std::uint64_t seed) {
    const auto& scenes = record.scenes;
    const std::size_t n = scenes.size();
    if (n < 4) {
        throw TooFewScenes(fmt::format("{}: order probes need at least 4 captions, got {}", record.video_id, n));
    }
    const std::size_t m = n / 2;
    ProbeBuild out;
    for (auto cat : kOrderCategories) {
        for (auto sub : kOrderSubtypes) {
            const std::size_t h = min_hops(cat);
            // Admissible partner indices for this (category, subtype).
            std::vector<std::size_t> cands;
            if (sub == OrderSubtype::Before) {
                if (m >= h) {
                    if (cat == OrderCategory::VeryFar) {
                        for (std::size_t i = 0; i + h <= m; ++i) cands.push_back(i);
                    } else {
                        cands.push_back(m - h);
                    }
                }
            } else {
                if (m + h < n) {
                    if (cat == OrderCategory::VeryFar) {
                        for (std::size_t i = m + h; i < n; ++i) cands.push_back(i);
                    } else {
                        cands.push_back(m + h);
                    }
                }
            }
            out.coverage.push_back({cat, sub, !cands.empty()});
            if (cands.empty()) continue;

            std::size_t partner = cands.front();
            if (cands.size() > 1) {
                Rng rng(derive_seed(seed, record.video_id + ":" + to_string(cat) + ":" + to_string(sub)));
                partner = cands[static_cast<std::size_t>(uniform_below(rng, cands.size()))];
            }
            // A happens earlier than B.
            std::size_t a = sub == OrderSubtype::Before ? partner : m;
            std::size_t b = sub == OrderSubtype::Before ? m : partner;
            std::string ea = event_text(scenes[a].caption), eb = event_text(scenes[b].caption);
            std::size_t hops = b - a;
            double sep = std::abs(scenes[b].midpoint() - scenes[a].midpoint());
            auto [lo, hi] = nominal_bin(cat);
            if (sep < lo || sep >= hi) {
                out.warnings.push_back(fmt::format("{} {}/{}: separation {:.2f}s outside nominal bin",
                                                   record.video_id, to_string(cat), to_string(sub), sep));
            }
            std::string pair_id = fmt::format("{}:{}:{}", record.video_id, to_string(cat), to_string(sub));
            const std::pair<std::string, bool> texts[4] = {
                {order_statement_text(ea, true, eb), true},
                {order_statement_text(ea, false, eb), false},
                {order_statement_text(eb, false, ea), true},
                {order_statement_text(eb, true, ea), false},
            };
            for (std::size_t k = 0; k < 4; ++k) {
                OrderStatement s;
                s.id = fmt::format("{}:{}", pair_id, k);
                s.video_path = video_path;
                s.pair_id = pair_id;
                s.category = cat;
                s.subtype = sub;
                s.statement = texts[k].first;
                s.label = texts[k].second;
                s.hop_distance = hops;
                s.time_separation_s = sep;
                out.statements.push_back(std::move(s));
            }
        }
    }
    return out;
}

ProbeSelection select_probe_videos(const Corpus& corpus, std::size_t n, std::size_t min_captions,
                                   std::uint64_t seed) {
    std::vector<const VideoRecord*> eligible;
    for (const auto& r : corpus.records) {
        if (r.scenes.size() >= min_captions) eligible.push_back(&r);
    }
    ProbeSelection sel;
    sel.eligible = eligible.size();
    if (eligible.size() <= n) {
        if (eligible.size() < n) {
            sel.warning = fmt::format("only {} videos have at least {} captions; {} requested", eligible.size(),
                                      min_captions, n);
        }
        sel.records = eligible;
        return sel;
    }
    Rng rng(derive_seed(seed, "probe_videos"));
    for (auto i : sample_indices(eligible.size(), n, rng)) sel.records.push_back(eligible[i]);
    return sel;
}

}  // namespace timewarp
