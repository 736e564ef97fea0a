#include "timewarp/llmclient.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>

#include <fmt/format.h>
#include <openssl/evp.h>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "timewarp/errors.hpp"
#include "timewarp/preprocess.hpp"

namespace timewarp {

std::string GenRequest::request_key() const {
    json j = {{"prompt", prompt},
              {"attachments", attachments},
              {"model_id", model_id},
              {"temperature", temperature},
              {"max_tokens", max_tokens}};
    return sha256_hex(j.dump());
}

BackendKind parse_backend_kind(const std::string& s) {
    if (s == "mock") return BackendKind::Mock;
    if (s == "http" || s == "http_openai_compatible") return BackendKind::HttpOpenAiCompatible;
    throw ConfigError("unknown backend '" + s + "' (expected mock or http_openai_compatible)");
}

// ------------------------------------------------------------------ mock

namespace {

std::int64_t count_words(const std::string& s) {
    std::int64_t n = 0;
    bool in_word = false;
    for (char c : s) {
        bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
        if (!space && !in_word) ++n;
        in_word = !space;
    }
    return n;
}

std::uint64_t stable_hash(const std::string& prompt, const std::vector<std::string>& attachments) {
    std::string material = prompt;
    for (const auto& a : attachments) {
        material.push_back('\x1f');
        material += a;
    }
    return std::stoull(sha256_hex(material).substr(0, 15), nullptr, 16);
}

std::string strip_terminal_punct(std::string s) {
    s = trim(s);
    while (!s.empty() && (s.back() == '.' || s.back() == '!' || s.back() == '?')) s.pop_back();
    return s;
}

std::optional<std::string> labelled_line(const std::string& prompt, const std::string& label) {
    for (const auto& line : split_lines(prompt)) {
        if (line.rfind(label, 0) == 0) return line.substr(label.size());
    }
    return std::nullopt;
}

std::vector<std::string> option_lines(const std::string& prompt) {
    std::vector<std::string> out;
    bool in_options = false;
    for (const auto& line : split_lines(prompt)) {
        if (line == "Options:") {
            in_options = true;
            continue;
        }
        if (!in_options) continue;
        if (line.size() >= 3 && line[0] >= 'A' && line[0] <= 'Z' && line[1] == '.' && line[2] == ' ' &&
            static_cast<std::size_t>(line[0] - 'A') == out.size()) {
            out.push_back(line.substr(3));
        } else {
            break;
        }
    }
    return out;
}

std::optional<std::string> task_id(const std::string& prompt) { return labelled_line(prompt, "Task id: "); }

std::vector<std::string> narrative(const std::string& prompt) {
    auto line = labelled_line(prompt, "Narrative: ");
    if (!line) return {};
    try {
        return parse_composite_caption(*line);
    } catch (const Error&) {
        return {};
    }
}

// Subject of "What happens immediately after: <X>?".
std::optional<std::string> asked_event(const std::string& question) {
    static const std::string prefix = "What happens immediately after: ";
    if (question.rfind(prefix, 0) != 0) return std::nullopt;
    return strip_terminal_punct(question.substr(prefix.size()));
}

std::optional<std::size_t> find_caption(const std::vector<std::string>& caps, const std::string& event) {
    for (std::size_t i = 0; i < caps.size(); ++i) {
        if (strip_terminal_punct(caps[i]) == event) return i;
    }
    return std::nullopt;
}

const std::vector<std::string>& fillers() {
    static const std::vector<std::string> f = {"Nothing else happens in the video.",
                                               "The video shows a blank screen.",
                                               "The same scene repeats from the start."};
    return f;
}

std::string describe(const std::vector<std::string>& attachments) {
    if (attachments.empty()) return "The video shows a sequence of events from beginning to end.";
    std::string out = "The video unfolds over the frames";
    for (std::size_t i = 0; i < attachments.size(); ++i) {
        out += (i == 0 ? " " : ", ") + fs::path(attachments[i]).stem().string();
    }
    return out + ", in that order.";
}

}  // namespace

std::string mock_question_after(const std::string& caption) {
    return "What happens immediately after: " + strip_terminal_punct(caption) + "?";
}

MockBackend::MockBackend(const PromptLibrary& prompts) : prompts_(prompts) {}

std::string MockBackend::respond(const std::string& prompt, const std::vector<std::string>& attachments) const {
    auto id = task_id(prompt);
    const std::uint64_t h = stable_hash(prompt, attachments);

    if (!id) {
        std::string body = trim(prompt);
        for (int k = 1; k <= kHallucinationPromptCount; ++k) {
            auto tid = hallucination_template_id(k);
            if (prompts_.has(tid) && trim(prompts_.get(tid).body) == body) {
                return std::string(kHallucinationMarker) + " " + describe(attachments);
            }
        }
        return describe(attachments);
    }

    if (*id == templates::kOpenEndedQa) {
        auto caps = narrative(prompt);
        std::vector<OpenEndedQA> items;
        for (std::size_t i = 0; i + 1 < caps.size(); ++i) {
            items.push_back({mock_question_after(caps[i]), caps[i + 1], TemporalRelation::After});
        }
        return to_envelope(items);
    }
    if (*id == templates::kMcqa) {
        auto caps = narrative(prompt);
        std::vector<McqaItem> items;
        for (std::size_t i = 0; i + 1 < caps.size(); ++i) {
            const std::string& correct = caps[i + 1];
            std::vector<std::string> distractors;
            for (std::size_t j = 0; j < caps.size() && distractors.size() < 3; ++j) {
                if (j == i + 1 || caps[j] == correct ||
                    std::find(distractors.begin(), distractors.end(), caps[j]) != distractors.end()) {
                    continue;
                }
                distractors.push_back(caps[j]);
            }
            for (std::size_t f = 0; distractors.size() < 3; ++f) distractors.push_back(fillers().at(f));
            std::string question = mock_question_after(caps[i]);
            std::size_t pos = static_cast<std::size_t>(std::stoull(sha256_hex(question).substr(0, 8), nullptr, 16) % 4);
            std::vector<std::string> options = distractors;
            options.insert(options.begin() + static_cast<std::ptrdiff_t>(pos), correct);
            items.push_back({question, options, pos, {"other_scene"}});
        }
        return to_envelope(items);
    }
    if (*id == templates::kDispreferred) {
        auto caps = narrative(prompt);
        std::string question = labelled_line(prompt, "Question: ").value_or("");
        std::string answer = "The narrative does not say.";
        if (auto event = asked_event(question); event && !caps.empty()) {
            if (auto j = find_caption(caps, *event)) answer = caps[(*j + 1) % caps.size()];
        }
        return to_envelope(std::vector<OpenEndedQA>{{question, answer, TemporalRelation::After}});
    }
    if (*id == templates::kShuffledOptionSelect) {
        auto caps = narrative(prompt);
        std::string question = labelled_line(prompt, "Question: ").value_or("");
        auto options = option_lines(prompt);
        std::size_t answer = 0;
        auto event = asked_event(question);
        auto j = event ? find_caption(caps, *event) : std::nullopt;
        if (j) {
            // First option found walking forward (cyclically) from the event.
            bool found = false;
            for (std::size_t step = 1; step < caps.size() && !found; ++step) {
                const auto& cand = caps[(*j + step) % caps.size()];
                for (std::size_t o = 0; o < options.size(); ++o) {
                    if (options[o] == cand) {
                        answer = o;
                        found = true;
                        break;
                    }
                }
            }
        }
        McqaItem item{question, options, answer, {}};
        return to_envelope(std::vector<McqaItem>{item});
    }
    if (*id == templates::kEvalMcqa) {
        auto n = std::max<std::size_t>(1, option_lines(prompt).size());
        return std::string(1, static_cast<char>('A' + h % n));
    }
    if (*id == templates::kEvalBinary) {
        return h % 2 == 0 ? "Yes" : "No";
    }
    if (*id == templates::kEvalCaptionMatch || *id == templates::kEvalVideoMatch) {
        return h % 2 == 0 ? "A" : "B";
    }
    return R"({"items": []})";
}

GenResponse MockBackend::complete(const GenRequest& request) {
    GenResponse r;
    r.text = respond(request.prompt, request.attachments);
    r.model_id = request.model_id.empty() ? "mock" : request.model_id;
    r.usage.prompt_tokens = count_words(request.prompt);
    r.usage.completion_tokens = count_words(r.text);
    return r;
}

// ------------------------------------------------------------------ http

std::string base64_encode(std::string_view bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                            reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

namespace {

class HttplibTransport final : public HttpTransport {
public:
    HttpResult post(const std::string& url, const std::map<std::string, std::string>& headers,
                    const std::string& body, std::chrono::milliseconds timeout) override {
        // Split "scheme://host[:port]/path".
        auto scheme_end = url.find("://");
        if (scheme_end == std::string::npos) throw TransportError("malformed endpoint " + url);
        auto path_start = url.find('/', scheme_end + 3);
        std::string origin = url.substr(0, path_start);
        std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

        httplib::Client client(origin);
        auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout).count();
        client.set_connection_timeout(std::max<long>(1, static_cast<long>(secs)));
        client.set_read_timeout(std::max<long>(1, static_cast<long>(secs)));
        httplib::Headers h;
        for (const auto& [k, v] : headers) h.emplace(k, v);
        auto res = client.Post(path, h, body, "application/json");
        if (!res) throw TransportError("request to " + origin + " failed: " + httplib::to_string(res.error()));
        return {res->status, res->body};
    }
};

std::string guess_mime(const fs::path& p) {
    auto ext = to_lower(p.extension().string());
    if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
    if (ext == ".webp") return "image/webp";
    return "image/png";
}

}  // namespace

std::shared_ptr<HttpTransport> make_default_transport() { return std::make_shared<HttplibTransport>(); }

HttpBackend::HttpBackend(HttpBackendConfig config, std::shared_ptr<HttpTransport> transport)
    : sleep([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }),
      config_(std::move(config)),
      transport_(transport ? std::move(transport) : make_default_transport()) {}

json HttpBackend::build_body(const GenRequest& request) const {
    json content = json::array();
    content.push_back({{"type", "text"}, {"text", request.prompt}});
    for (const auto& a : request.attachments) {
        if (!fs::exists(a)) throw PreconditionFailed("attachment not found: " + a);
        std::string url = "data:" + guess_mime(a) + ";base64," + base64_encode(read_file(a));
        content.push_back({{"type", "image_url"}, {"image_url", {{"url", url}}}});
    }
    return {{"model", request.model_id},
            {"messages", json::array({{{"role", "user"}, {"content", content}}})},
            {"temperature", request.temperature},
            {"max_tokens", request.max_tokens}};
}

GenResponse HttpBackend::complete(const GenRequest& request) {
    const char* key = std::getenv(config_.credential_env.c_str());
    if (!key || !*key) {
        throw CredentialMissing("environment variable " + config_.credential_env + " is not set");
    }
    if (config_.endpoint.empty()) throw ConfigError("http backend has no endpoint");
    std::string body = build_body(request).dump();
    std::map<std::string, std::string> headers = {{"Authorization", std::string("Bearer ") + key}};

    auto backoff = config_.initial_backoff;
    std::string last_error;
    const int attempts = std::max(1, config_.max_attempts);
    for (int attempt = 1; attempt <= attempts; ++attempt) {
        auto t0 = std::chrono::steady_clock::now();
        try {
            HttpResult res = transport_->post(config_.endpoint, headers, body, config_.timeout);
            if (res.status >= 200 && res.status < 300) {
                json j;
                try {
                    j = json::parse(res.body);
                } catch (const json::parse_error& e) {
                    throw RequestRejected(std::string("unparseable completion body: ") + e.what());
                }
                GenResponse r;
                try {
                    r.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
                } catch (const json::exception& e) {
                    throw RequestRejected(std::string("completion body lacks message content: ") + e.what());
                }
                r.model_id = j.value("model", request.model_id);
                if (j.contains("usage") && j["usage"].is_object()) {
                    r.usage.prompt_tokens = j["usage"].value("prompt_tokens", std::int64_t{0});
                    r.usage.completion_tokens = j["usage"].value("completion_tokens", std::int64_t{0});
                }
                r.latency_ms =
                    std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
                return r;
            }
            if (res.status >= 400 && res.status < 500 && res.status != 408 && res.status != 429) {
                throw RequestRejected(fmt::format("HTTP {}: {}", res.status, res.body));
            }
            last_error = fmt::format("HTTP {}: {}", res.status, res.body);
        } catch (const TransportError& e) {
            last_error = e.what();
        }
        if (attempt < attempts) {
            sleep(backoff);
            backoff = std::min(backoff * 2, config_.max_backoff);
        }
    }
    throw BackendUnavailable(fmt::format("{} unavailable after {} attempt(s): {}", config_.endpoint, attempts,
                                         last_error));
}

// ------------------------------------------------------------------ cache

DiskCache::DiskCache(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

std::optional<GenResponse> DiskCache::get(const std::string& key) const {
    std::shared_lock lock(mutex_);
    fs::path p = dir_ / key.substr(0, 2) / (key + ".json");
    if (!fs::exists(p)) return std::nullopt;
    json j;
    try {
        j = json::parse(read_file(p));
    } catch (const std::exception&) {
        return std::nullopt;  // a corrupt entry is treated as a miss and rewritten
    }
    GenResponse r;
    r.text = j.value("text", "");
    r.model_id = j.value("model_id", "");
    r.usage.prompt_tokens = j.value("prompt_tokens", std::int64_t{0});
    r.usage.completion_tokens = j.value("completion_tokens", std::int64_t{0});
    r.cached = true;
    return r;
}

void DiskCache::put(const std::string& key, const GenResponse& r) {
    std::unique_lock lock(mutex_);
    json j = {{"text", r.text},
              {"model_id", r.model_id},
              {"prompt_tokens", r.usage.prompt_tokens},
              {"completion_tokens", r.usage.completion_tokens}};
    write_file(dir_ / key.substr(0, 2) / (key + ".json"), j.dump());
}

// ------------------------------------------------------------------ client

LlmClient::LlmClient(std::shared_ptr<Backend> backend, ClientOptions options)
    : backend_(std::move(backend)), max_in_flight_(std::max<std::size_t>(1, options.max_in_flight)) {
    if (options.cache_dir) cache_.emplace(*options.cache_dir);
}

GenResponse LlmClient::generate(const GenRequest& request) {
    const std::string key = request.request_key();
    if (cache_) {
        if (auto hit = cache_->get(key)) {
            ++cache_hits_;
            return *hit;
        }
    }
    {
        std::unique_lock lock(slot_mutex_);
        slot_cv_.wait(lock, [&] { return in_flight_ < max_in_flight_; });
        ++in_flight_;
    }
    struct SlotRelease {
        LlmClient* self;
        ~SlotRelease() {
            {
                std::lock_guard lock(self->slot_mutex_);
                --self->in_flight_;
            }
            self->slot_cv_.notify_one();
        }
    } release{this};

    ++backend_calls_;
    auto t0 = std::chrono::steady_clock::now();
    GenResponse r = backend_->complete(request);
    if (r.latency_ms == 0.0) {
        r.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    }
    r.cached = false;
    if (cache_) cache_->put(key, r);
    return r;
}

}  // namespace timewarp
