#include "timewarp/promptkit.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>

#include <fmt/format.h>

#include "timewarp/errors.hpp"

#ifndef TIMEWARP_PROMPT_DIR_DEFAULT
#define TIMEWARP_PROMPT_DIR_DEFAULT "assets/prompts"
#endif

namespace timewarp {

namespace {

bool is_name_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

// Walks the body, calling on_text for literal runs and on_placeholder for
// `{name}` occurrences.
template <typename Text, typename Placeholder>
void scan_body(const std::string& body, Text&& on_text, Placeholder&& on_placeholder) {
    std::size_t i = 0;
    std::string literal;
    while (i < body.size()) {
        char c = body[i];
        if (c == '{' && i + 1 < body.size() && body[i + 1] == '{') {
            literal.push_back('{');
            i += 2;
        } else if (c == '}' && i + 1 < body.size() && body[i + 1] == '}') {
            literal.push_back('}');
            i += 2;
        } else if (c == '{') {
            std::size_t j = i + 1;
            while (j < body.size() && is_name_char(body[j])) ++j;
            if (j == i + 1 || j >= body.size() || body[j] != '}') {
                throw TemplateFormatError(fmt::format("stray '{{' at offset {}", i));
            }
            on_text(literal);
            literal.clear();
            on_placeholder(body.substr(i + 1, j - i - 1));
            i = j + 1;
        } else if (c == '}') {
            throw TemplateFormatError(fmt::format("stray '}}' at offset {}", i));
        } else {
            literal.push_back(c);
            ++i;
        }
    }
    on_text(literal);
}

std::set<std::string> parse_required_header(const std::string& line) {
    static const std::string key = "required:";
    std::string t = trim(line);
    if (t.rfind(key, 0) != 0) {
        throw TemplateFormatError("template header must start with 'required:'");
    }
    std::string list = trim(t.substr(key.size()));
    if (list.size() < 2 || list.front() != '[' || list.back() != ']') {
        throw TemplateFormatError("template header list must be written as [a, b]");
    }
    std::set<std::string> out;
    std::string inner = list.substr(1, list.size() - 2);
    std::size_t pos = 0;
    while (pos <= inner.size()) {
        auto comma = inner.find(',', pos);
        std::string name = trim(inner.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
        if (!name.empty()) out.insert(name);
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return out;
}

const std::vector<std::string>& temporal_words() {
    static const std::vector<std::string> words = {
        "after", "before", "beginning", "begin", "begins", "start", "starts", "first", "end",
        "ends", "ending", "last", "finally", "between", "then", "next", "following", "follows",
        "precede", "precedes", "preceding", "earlier", "later", "immediately", "initially"};
    return words;
}

std::vector<std::string> word_tokens(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (std::isalpha(static_cast<unsigned char>(c))) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

json items_array(const std::string& response) {
    json env = extract_envelope(response);
    return env["items"];
}

}  // namespace

PromptTemplate parse_template(const std::string& template_id, const std::string& text) {
    auto nl = text.find('\n');
    std::string header = text.substr(0, nl);
    PromptTemplate t;
    t.template_id = template_id;
    t.required_placeholders = parse_required_header(header);
    t.body = nl == std::string::npos ? std::string() : text.substr(nl + 1);
    // Assets end with a newline; the prompt itself should not.
    while (!t.body.empty() && (t.body.back() == '\n' || t.body.back() == '\r')) t.body.pop_back();
    for (const auto& p : placeholders_in(t.body)) {
        if (!t.required_placeholders.count(p)) {
            throw TemplateFormatError(template_id + ": placeholder {" + p + "} not listed in header");
        }
    }
    return t;
}

std::vector<std::string> placeholders_in(const std::string& body) {
    std::vector<std::string> out;
    scan_body(body, [](const std::string&) {}, [&](const std::string& name) {
        if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
    });
    return out;
}

PromptLibrary PromptLibrary::load(const fs::path& dir) {
    if (!fs::is_directory(dir)) {
        throw ConfigError("prompt directory not found: " + dir.string());
    }
    PromptLibrary lib;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) lib.add(parse_template(f.stem().string(), read_file(f)));
    return lib;
}

fs::path PromptLibrary::default_dir() {
    if (const char* env = std::getenv("TIMEWARP_PROMPT_DIR"); env && *env) return fs::path(env);
    return fs::path(TIMEWARP_PROMPT_DIR_DEFAULT);
}

const PromptLibrary& PromptLibrary::shared_default() {
    static const PromptLibrary lib = load(default_dir());
    return lib;
}

void PromptLibrary::add(PromptTemplate t) {
    auto id = t.template_id;
    templates_[id] = std::move(t);
}

bool PromptLibrary::has(const std::string& id) const { return templates_.count(id) > 0; }

const PromptTemplate& PromptLibrary::get(const std::string& id) const {
    auto it = templates_.find(id);
    if (it == templates_.end()) throw UnknownTemplate("unknown template_id '" + id + "'");
    return it->second;
}

std::vector<std::string> PromptLibrary::ids() const {
    std::vector<std::string> out;
    for (const auto& [id, _] : templates_) out.push_back(id);
    return out;
}

std::string PromptLibrary::render(const std::string& id, const std::map<std::string, std::string>& values) const {
    const auto& t = get(id);
    for (const auto& name : t.required_placeholders) {
        if (!values.count(name)) throw MissingPlaceholder(id + ": missing placeholder '" + name + "'");
    }
    std::string out;
    scan_body(t.body, [&](const std::string& text) { out += text; },
              [&](const std::string& name) { out += values.at(name); });
    return out;
}

std::string hallucination_template_id(int k) {
    if (k < 1 || k > kHallucinationPromptCount) {
        throw UnknownTemplate(fmt::format("hallucination prompt index {} outside 1..{}", k, kHallucinationPromptCount));
    }
    return fmt::format("hallucination_{}", k);
}

std::string to_string(TemporalRelation r) {
    switch (r) {
        case TemporalRelation::After: return "after";
        case TemporalRelation::Before: return "before";
        case TemporalRelation::Beginning: return "beginning";
        case TemporalRelation::End: return "end";
        case TemporalRelation::Between: return "between";
    }
    return "after";
}

std::optional<TemporalRelation> parse_relation(const std::string& s) {
    std::string t = to_lower(trim(s));
    if (t == "after") return TemporalRelation::After;
    if (t == "before") return TemporalRelation::Before;
    if (t == "beginning") return TemporalRelation::Beginning;
    if (t == "end") return TemporalRelation::End;
    if (t == "between") return TemporalRelation::Between;
    return std::nullopt;
}

bool mentions_temporal_relation(const std::string& question) {
    const auto& words = temporal_words();
    for (const auto& tok : word_tokens(question)) {
        if (std::find(words.begin(), words.end(), tok) != words.end()) return true;
    }
    return false;
}

json extract_envelope(const std::string& response) {
    auto first = response.find('{');
    auto last = response.rfind('}');
    if (first == std::string::npos || last == std::string::npos || last < first) {
        throw ParseFailure("no JSON object in generator response", response);
    }
    json env;
    try {
        env = json::parse(response.substr(first, last - first + 1));
    } catch (const json::parse_error& e) {
        throw ParseFailure(std::string("malformed JSON envelope: ") + e.what(), response);
    }
    if (!env.is_object() || !env.contains("items") || !env["items"].is_array()) {
        throw ParseFailure("envelope lacks an \"items\" array", response);
    }
    return env;
}

Parsed<OpenEndedQA> parse_oe_qa(const std::string& response) {
    Parsed<OpenEndedQA> out;
    json items = items_array(response);
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& it = items[i];
        auto drop = [&](const std::string& why) { out.dropped.push_back(fmt::format("item {}: {}", i, why)); };
        if (!it.is_object()) { drop("not an object"); continue; }
        auto str = [&](const char* key) -> std::optional<std::string> {
            auto f = it.find(key);
            if (f == it.end() || !f->is_string()) return std::nullopt;
            return f->get<std::string>();
        };
        auto q = str("question"), a = str("answer"), rel = str("relation");
        if (!q || trim(*q).empty()) { drop("empty question"); continue; }
        if (!a || trim(*a).empty()) { drop("empty answer"); continue; }
        if (!rel) { drop("missing relation"); continue; }
        auto relation = parse_relation(*rel);
        if (!relation) { drop("unknown relation '" + *rel + "'"); continue; }
        if (!mentions_temporal_relation(*q)) { drop("question has no temporal relation word"); continue; }
        out.items.push_back({*q, *a, *relation});
    }
    return out;
}

Parsed<McqaItem> parse_mcqa(const std::string& response) {
    Parsed<McqaItem> out;
    json items = items_array(response);
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& it = items[i];
        auto drop = [&](const std::string& why) { out.dropped.push_back(fmt::format("item {}: {}", i, why)); };
        if (!it.is_object()) { drop("not an object"); continue; }
        auto q = it.find("question");
        if (q == it.end() || !q->is_string() || trim(q->get<std::string>()).empty()) { drop("empty question"); continue; }
        auto opts = it.find("options");
        if (opts == it.end() || !opts->is_array()) { drop("missing options"); continue; }
        std::vector<std::string> options;
        bool ok = true;
        for (const auto& o : *opts) {
            if (!o.is_string() || trim(o.get<std::string>()).empty()) { ok = false; break; }
            options.push_back(o.get<std::string>());
        }
        if (!ok) { drop("non-text or empty option"); continue; }
        if (options.size() < 4 || options.size() > 5) {
            drop(fmt::format("{} options (expected 4 or 5)", options.size()));
            continue;
        }
        std::set<std::string> distinct;
        for (const auto& o : options) distinct.insert(trim(o));
        if (distinct.size() != options.size()) { drop("duplicate options"); continue; }
        auto ai = it.find("answer_index");
        if (ai == it.end() || !ai->is_number_integer()) { drop("missing answer_index"); continue; }
        auto idx = ai->get<long long>();
        if (idx < 0 || static_cast<std::size_t>(idx) >= options.size()) {
            drop(fmt::format("answer_index {} out of range for {} options", idx, options.size()));
            continue;
        }
        out.items.push_back({q->get<std::string>(), std::move(options), static_cast<std::size_t>(idx), {}});
    }
    return out;
}

std::string to_envelope(const std::vector<OpenEndedQA>& items) {
    json arr = json::array();
    for (const auto& qa : items) {
        arr.push_back({{"question", qa.question}, {"answer", qa.answer}, {"relation", to_string(qa.target_relation)}});
    }
    return json{{"items", std::move(arr)}}.dump();
}

std::string to_envelope(const std::vector<McqaItem>& items) {
    json arr = json::array();
    for (const auto& m : items) {
        arr.push_back({{"question", m.question}, {"options", m.options}, {"answer_index", m.answer_index}});
    }
    return json{{"items", std::move(arr)}}.dump();
}

std::string render_options(const std::vector<std::string>& options) {
    std::string out;
    for (std::size_t i = 0; i < options.size(); ++i) {
        if (i > 0) out.push_back('\n');
        out += fmt::format("{}. {}", static_cast<char>('A' + i), options[i]);
    }
    return out;
}

}  // namespace timewarp
