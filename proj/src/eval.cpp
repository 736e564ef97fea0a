#include "timewarp/eval.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include <fmt/format.h>

#include "timewarp/errors.hpp"

namespace timewarp {

std::vector<RawPrediction> load_predictions(const fs::path& path) {
    std::vector<RawPrediction> out;
    auto rows = read_jsonl(path);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (!r.is_object() || !r.contains("item_id") || !r["item_id"].is_string() || !r.contains("response") ||
            !r["response"].is_string()) {
            throw SchemaMismatch(fmt::format("{}:{}: expected {{\"item_id\": str, \"response\": str}}",
                                             path.string(), i + 1));
        }
        out.push_back({r["item_id"].get<std::string>(), r["response"].get<std::string>()});
    }
    return out;
}

json to_json(const RawPrediction& p) { return {{"item_id", p.item_id}, {"response", p.response}}; }

std::string to_string(ParseRoute r) {
    switch (r) {
        case ParseRoute::ExactText: return "exact_text";
        case ParseRoute::Letter: return "letter";
        case ParseRoute::YesNo: return "yes_no";
        case ParseRoute::Unparsed: return "unparsed";
    }
    return "unparsed";
}

namespace {

std::string normalize(std::string_view s) {
    std::string t = to_lower(trim(s));
    while (!t.empty() && std::ispunct(static_cast<unsigned char>(t.back()))) t.pop_back();
    return trim(t);
}

// Drops an "Answer:" / "The answer is" lead-in.
std::string_view strip_lead_in(std::string_view s) {
    std::string low = to_lower(s.substr(0, std::min<std::size_t>(s.size(), 16)));
    for (const char* lead : {"answer:", "the answer is"}) {
        std::string_view l(lead);
        if (low.rfind(l, 0) == 0) {
            s.remove_prefix(l.size());
            while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
            return s;
        }
    }
    return s;
}

std::optional<std::size_t> leading_letter(std::string_view s, std::size_t n_options) {
    if (s.empty()) return std::nullopt;
    bool paren = s.front() == '(';
    if (paren) s.remove_prefix(1);
    if (s.empty()) return std::nullopt;
    char c = s.front();
    if (c < 'A' || c > 'E') return std::nullopt;
    // A bare letter, or one closed by punctuation; "A man ..." is prose.
    if (s.size() > 1) {
        char next = s[1];
        bool closes = next == '.' || next == ')' || next == ':' || next == ',';
        if (!closes && !(std::isspace(static_cast<unsigned char>(next)) && trim(s.substr(1)).empty())) {
            return std::nullopt;
        }
    } else if (paren) {
        return std::nullopt;
    }
    auto idx = static_cast<std::size_t>(c - 'A');
    if (idx >= n_options) return std::nullopt;
    return idx;
}

std::optional<bool> leading_yes_no(std::string_view s) {
    std::string word;
    for (char c : s) {
        if (!std::isalpha(static_cast<unsigned char>(c))) break;
        word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    if (word == "yes" || word == "true") return true;
    if (word == "no" || word == "false") return false;
    return std::nullopt;
}

double percent(std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : 100.0 * static_cast<double>(num) / static_cast<double>(den);
}

std::string pct(double v) { return fmt::format("{:.2f}", v); }

}  // namespace

Prediction parse_choice(const std::string& item_id, const std::string& raw, const std::vector<std::string>& options,
                        bool binary) {
    Prediction p;
    p.item_id = item_id;
    p.raw_response = raw;
    std::string norm = normalize(raw);
    if (!binary) {
        for (std::size_t i = 0; i < options.size(); ++i) {
            if (!norm.empty() && normalize(options[i]) == norm) {
                p.option = i;
                p.route = ParseRoute::ExactText;
                return p;
            }
        }
        std::string t = trim(raw);
        if (auto idx = leading_letter(strip_lead_in(t), options.size())) {
            p.option = *idx;
            p.route = ParseRoute::Letter;
            return p;
        }
        return p;
    }
    if (norm == "yes" || norm == "no") {
        p.yes = norm == "yes";
        p.route = ParseRoute::ExactText;
        return p;
    }
    if (auto yn = leading_yes_no(strip_lead_in(trim(raw)))) {
        p.yes = *yn;
        p.route = ParseRoute::YesNo;
    }
    return p;
}

Prediction parse_prediction(const std::string& raw, const BenchmarkItem& item) {
    return parse_choice(item.id, raw, item.options, false);
}

Prediction parse_prediction(const std::string& raw, const OrderStatement& statement) {
    return parse_choice(statement.id, raw, {}, true);
}

std::map<std::string, std::string> index_predictions(const std::vector<RawPrediction>& preds) {
    std::map<std::string, std::string> out;
    for (const auto& p : preds) {
        if (!out.emplace(p.item_id, p.response).second) {
            throw DuplicatePrediction("duplicate prediction for item " + p.item_id);
        }
    }
    return out;
}

// ---------------------------------------------------------------- mcqa

AccuracyReport score_mcqa(const std::vector<BenchmarkItem>& items, const std::vector<RawPrediction>& predictions) {
    auto preds = index_predictions(predictions);
    AccuracyReport rep;
    std::set<std::string> known;
    for (const auto& item : items) {
        known.insert(item.id);
        auto& s = rep.splits[to_string(item.split)];
        ++s.total;
        ++rep.overall.total;
        auto it = preds.find(item.id);
        if (it == preds.end()) {
            ++s.missing;
            ++rep.overall.missing;
            continue;
        }
        auto p = parse_prediction(it->second, item);
        if (!p.parsed()) {
            ++s.unparsed;
            ++rep.overall.unparsed;
            continue;
        }
        if (p.option && *p.option == item.answer_index) {
            ++s.correct;
            ++rep.overall.correct;
        }
    }
    for (const auto& [id, _] : preds) {
        if (!known.count(id)) ++rep.unknown_predictions;
    }
    for (auto& [_, s] : rep.splits) s.accuracy = percent(s.correct, s.total);
    rep.overall.accuracy = percent(rep.overall.correct, rep.overall.total);
    if (rep.splits.count("normal") && rep.splits.count("shuffled")) {
        rep.normal_minus_shuffled = rep.splits["normal"].accuracy - rep.splits["shuffled"].accuracy;
    }
    return rep;
}

namespace {

json split_json(const SplitScore& s) {
    return {{"total", s.total},
            {"correct", s.correct},
            {"missing", s.missing},
            {"unparsed", s.unparsed},
            {"accuracy", s.accuracy}};
}

}  // namespace

json to_json(const AccuracyReport& r) {
    json splits = json::object();
    for (const auto& [name, s] : r.splits) splits[name] = split_json(s);
    return {{"splits", std::move(splits)},
            {"overall", split_json(r.overall)},
            {"normal_minus_shuffled", r.normal_minus_shuffled ? json(*r.normal_minus_shuffled) : json(nullptr)},
            {"unknown_predictions", r.unknown_predictions}};
}

std::string render_accuracy_table(const AccuracyReport& r, const std::string& model) {
    auto acc = [&](const char* split) {
        auto it = r.splits.find(split);
        return it == r.splits.end() ? std::string("-") : pct(it->second.accuracy);
    };
    std::vector<std::vector<std::string>> rows = {
        {"Model", "Normal", "Shuffled", "Overall", "Gap"},
        {model, acc("normal"), acc("shuffled"), pct(r.overall.accuracy),
         r.normal_minus_shuffled ? pct(*r.normal_minus_shuffled) : std::string("-")}};
    return render_table(rows);
}

// ---------------------------------------------------------------- group

bool text_correct(const QuadruplePrediction& q, const QuadTruth& t) { return q.t1 == t.t1 && q.t2 == t.t2; }
bool video_correct(const QuadruplePrediction& q, const QuadTruth& t) { return q.v1 == t.v1 && q.v2 == t.v2; }
bool group_correct(const QuadruplePrediction& q, const QuadTruth& t) {
    return text_correct(q, t) && video_correct(q, t);
}

GroupScores score_group(const std::vector<QuadruplePrediction>& quads, const QuadTruth& truth) {
    GroupScores g;
    g.quads = quads.size();
    std::size_t text = 0, video = 0, group = 0;
    for (const auto& q : quads) {
        for (int f : {q.t1, q.t2, q.v1, q.v2}) {
            if (f != 0 && f != 1) throw InvalidInput("quad " + q.quad_id + " has a field outside {0,1}");
        }
        bool tc = text_correct(q, truth), vc = video_correct(q, truth);
        text += tc;
        video += vc;
        group += tc && vc;
    }
    g.text = percent(text, quads.size());
    g.video = percent(video, quads.size());
    g.group = percent(group, quads.size());
    return g;
}

std::vector<std::string> quad_item_ids(const std::string& quad_id) {
    return {quad_id + ":t1", quad_id + ":t2", quad_id + ":v1", quad_id + ":v2"};
}

GroupScores score_group_predictions(const std::vector<std::string>& quad_ids,
                                    const std::vector<RawPrediction>& predictions, const QuadTruth& truth) {
    auto preds = index_predictions(predictions);
    static const std::vector<std::string> ab = {"A", "B"};
    std::vector<QuadruplePrediction> quads;
    std::size_t bad = 0;
    for (const auto& qid : quad_ids) {
        auto ids = quad_item_ids(qid);
        const int want[4] = {truth.t1, truth.t2, truth.v1, truth.v2};
        int got[4];
        for (int k = 0; k < 4; ++k) {
            auto it = preds.find(ids[k]);
            std::optional<std::size_t> choice;
            if (it != preds.end()) choice = parse_choice(ids[k], it->second, ab, false).option;
            if (choice) {
                got[k] = static_cast<int>(*choice);
            } else {
                got[k] = 1 - want[k];
                ++bad;
            }
        }
        quads.push_back({qid, got[0], got[1], got[2], got[3]});
    }
    auto g = score_group(quads, truth);
    g.unparsed_fields = bad;
    return g;
}

GroupScores random_group_baseline(std::size_t n, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "random_group_baseline"));
    std::vector<QuadruplePrediction> quads(n);
    for (auto& q : quads) {
        std::uint64_t bits = uniform_below(rng, 16);
        q.t1 = static_cast<int>(bits & 1);
        q.t2 = static_cast<int>((bits >> 1) & 1);
        q.v1 = static_cast<int>((bits >> 2) & 1);
        q.v2 = static_cast<int>((bits >> 3) & 1);
    }
    return score_group(quads);
}

json to_json(const GroupScores& g) {
    return {{"quads", g.quads},
            {"text", g.text},
            {"video", g.video},
            {"group", g.group},
            {"unparsed_fields", g.unparsed_fields}};
}

// ---------------------------------------------------------------- probes

namespace {

struct Tally {
    std::size_t total = 0;
    std::size_t correct = 0;
};

void finish(PassRate& p) { p.rate = percent(p.passed, p.units); }

std::string sub_key(const OrderStatement& s) { return to_string(s.category) + "/" + to_string(s.subtype); }

// Per pair_id tallies plus statement-level counts.
std::map<std::string, Tally> tally_pairs(const std::vector<OrderStatement>& statements,
                                         const std::map<std::string, std::string>& preds, GradeReport* rep) {
    std::map<std::string, Tally> pairs;
    for (const auto& s : statements) {
        auto& t = pairs[s.pair_id];
        ++t.total;
        auto it = preds.find(s.id);
        bool ok = false;
        if (it == preds.end()) {
            if (rep) ++rep->missing;
        } else {
            auto p = parse_prediction(it->second, s);
            if (!p.parsed()) {
                if (rep) ++rep->unparsed;
            } else {
                ok = *p.yes == s.label;
            }
        }
        t.correct += ok;
    }
    return pairs;
}

}  // namespace

GradeReport grade_order_probes(const std::vector<OrderStatement>& statements,
                               const std::vector<RawPrediction>& predictions, const GradeOptions& options,
                               const std::string& model) {
    auto preds = index_predictions(predictions);
    GradeReport rep;
    rep.model = model;
    rep.statements = statements.size();
    auto pairs = tally_pairs(statements, preds, &rep);

    std::map<std::string, const OrderStatement*> first_of_pair;
    for (const auto& s : statements) first_of_pair.emplace(s.pair_id, &s);

    // (video, category) -> tally
    std::map<std::pair<std::string, std::string>, Tally> cats;
    for (const auto& [pid, t] : pairs) {
        const auto& s = *first_of_pair.at(pid);
        rep.correct += t.correct;
        auto& sub = rep.subcategories[sub_key(s)];
        ++sub.units;
        ++rep.subcategory_overall.units;
        if (t.correct >= options.subcategory_k) {
            ++sub.passed;
            ++rep.subcategory_overall.passed;
        }
        auto& c = cats[{s.video_path, to_string(s.category)}];
        c.total += t.total;
        c.correct += t.correct;
    }
    for (const auto& [key, t] : cats) {
        auto& cat = rep.categories[key.second];
        ++cat.units;
        ++rep.category_overall.units;
        // correct/total >= num/den, kept in integers
        if (t.correct * options.category_den >= options.category_num * t.total) {
            ++cat.passed;
            ++rep.category_overall.passed;
        }
    }
    for (auto& [_, p] : rep.subcategories) finish(p);
    for (auto& [_, p] : rep.categories) finish(p);
    finish(rep.subcategory_overall);
    finish(rep.category_overall);
    return rep;
}

std::vector<SweepPoint> strictness_sweep(const std::vector<OrderStatement>& statements,
                                         const std::vector<RawPrediction>& predictions) {
    auto preds = index_predictions(predictions);
    auto pairs = tally_pairs(statements, preds, nullptr);
    std::vector<SweepPoint> out;
    for (std::size_t k = 1; k <= 4; ++k) {
        std::size_t passed = 0;
        for (const auto& [_, t] : pairs) passed += t.correct >= k;
        out.push_back({k, percent(passed, pairs.size())});
    }
    return out;
}

namespace {

json pass_json(const PassRate& p) { return {{"units", p.units}, {"passed", p.passed}, {"rate", p.rate}}; }

}  // namespace

json to_json(const GradeReport& r) {
    json subs = json::object(), cats = json::object();
    for (const auto& [k, p] : r.subcategories) subs[k] = pass_json(p);
    for (const auto& [k, p] : r.categories) cats[k] = pass_json(p);
    return {{"model", r.model},
            {"statements", r.statements},
            {"correct", r.correct},
            {"missing", r.missing},
            {"unparsed", r.unparsed},
            {"subcategories", std::move(subs)},
            {"categories", std::move(cats)},
            {"subcategory_overall", pass_json(r.subcategory_overall)},
            {"category_overall", pass_json(r.category_overall)}};
}

json to_json(const std::vector<SweepPoint>& sweep) {
    json arr = json::array();
    for (const auto& p : sweep) arr.push_back({{"k", p.k}, {"pass_rate", p.pass_rate}});
    return arr;
}

std::string render_grade_table(const GradeReport& r) {
    std::vector<std::vector<std::string>> rows = {{"Model", "Category", "Before", "After", "Category pass"}};
    for (auto cat : kOrderCategories) {
        auto name = to_string(cat);
        auto sub = [&](OrderSubtype s) {
            auto it = r.subcategories.find(name + "/" + to_string(s));
            return it == r.subcategories.end() ? std::string("-") : pct(it->second.rate);
        };
        auto c = r.categories.find(name);
        rows.push_back({r.model, name, sub(OrderSubtype::Before), sub(OrderSubtype::After),
                        c == r.categories.end() ? std::string("-") : pct(c->second.rate)});
    }
    rows.push_back({r.model, "all", "", "", pct(r.category_overall.rate)});
    return render_table(rows);
}

}  // namespace timewarp
