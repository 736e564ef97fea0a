#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "timewarp/promptkit.hpp"
#include "timewarp/util.hpp"

namespace timewarp {

struct GenRequest {
    std::string prompt;
    std::vector<std::string> attachments;  // frame image paths
    std::string model_id;
    double temperature = 0.0;
    int max_tokens = 1024;

    // sha256 over the canonical JSON of every other field.
    std::string request_key() const;
};

struct TokenUsage {
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
};

struct GenResponse {
    std::string text;
    TokenUsage usage;
    std::string model_id;
    bool cached = false;
    double latency_ms = 0.0;
};

class Backend {
public:
    virtual ~Backend() = default;
    virtual GenResponse complete(const GenRequest& request) = 0;
    virtual std::string name() const = 0;
};

// ------------------------------------------------------------------ mock
//
// Deterministic stand-in for both the text generator and the video model.
// Prompts are classified by their "Task id: <template>" line or, for the
// description and hallucination prompts, by matching the template body.
//
//  oe_qa_gen            one "after" QA per adjacent scene pair:
//                       "What happens immediately after: <cap_i>?" -> cap_{i+1}
//  mcqa_gen             same questions as 4-option items; distractors are the
//                       other scenes' captions, padded with fixed fillers
//  dispreferred_gen     answers from the narrative as given; the successor of
//                       the last event wraps to the first
//  shuffled_option_select  picks the option holding that successor
//  hallucination_k      "HALLUCINATED: " + the description answer
//  mut_describe         lists the attached frames in order
//  eval_*               hash-based answers (a fixed-seed random subject)
class MockBackend final : public Backend {
public:
    explicit MockBackend(const PromptLibrary& prompts);
    GenResponse complete(const GenRequest& request) override;
    std::string name() const override { return "mock"; }

    std::string respond(const std::string& prompt, const std::vector<std::string>& attachments) const;

    static constexpr const char* kHallucinationMarker = "HALLUCINATED:";

private:
    const PromptLibrary& prompts_;
};

std::string mock_question_after(const std::string& caption);

// ------------------------------------------------------------------ http

struct HttpResult {
    int status = 0;
    std::string body;
};

// Thrown by transports when no HTTP response was obtained at all.
class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class HttpTransport {
public:
    virtual ~HttpTransport() = default;
    virtual HttpResult post(const std::string& url, const std::map<std::string, std::string>& headers,
                            const std::string& body, std::chrono::milliseconds timeout) = 0;
};

// cpp-httplib backed transport (http:// and https://).
std::shared_ptr<HttpTransport> make_default_transport();

struct HttpBackendConfig {
    // Full chat-completions URL, e.g. https://api.example.com/v1/chat/completions
    std::string endpoint;
    std::string credential_env = "OPENAI_API_KEY";
    int max_attempts = 4;
    std::chrono::milliseconds initial_backoff{500};
    std::chrono::milliseconds max_backoff{8000};
    std::chrono::milliseconds timeout{60000};
};

// OpenAI-compatible chat completions. Attachments are sent as inline
// base64 images. Retries transport errors, 429 and 5xx with exponential
// backoff; other 4xx responses raise RequestRejected.
class HttpBackend final : public Backend {
public:
    HttpBackend(HttpBackendConfig config, std::shared_ptr<HttpTransport> transport = nullptr);
    GenResponse complete(const GenRequest& request) override;
    std::string name() const override { return "http_openai_compatible"; }

    // Overridable for tests so backoff does not slow them down.
    std::function<void(std::chrono::milliseconds)> sleep;

    json build_body(const GenRequest& request) const;

private:
    HttpBackendConfig config_;
    std::shared_ptr<HttpTransport> transport_;
};

std::string base64_encode(std::string_view bytes);

// ------------------------------------------------------------------ cache

// Content-addressed response cache: <dir>/<key[0:2]>/<key>.json.
class DiskCache {
public:
    explicit DiskCache(fs::path dir);
    std::optional<GenResponse> get(const std::string& key) const;
    void put(const std::string& key, const GenResponse& response);
    const fs::path& dir() const { return dir_; }

private:
    fs::path dir_;
    mutable std::shared_mutex mutex_;
};

// ------------------------------------------------------------------ client

struct ClientOptions {
    std::optional<fs::path> cache_dir;
    std::size_t max_in_flight = 4;
};

// Shareable across threads: at most `max_in_flight` backend calls run at
// once; cache hits never reach the backend.
class LlmClient {
public:
    LlmClient(std::shared_ptr<Backend> backend, ClientOptions options = {});

    GenResponse generate(const GenRequest& request);

    std::size_t backend_calls() const { return backend_calls_.load(); }
    std::size_t cache_hits() const { return cache_hits_.load(); }
    Backend& backend() { return *backend_; }

private:
    std::shared_ptr<Backend> backend_;
    std::optional<DiskCache> cache_;
    std::size_t max_in_flight_;
    std::size_t in_flight_ = 0;
    std::mutex slot_mutex_;
    std::condition_variable slot_cv_;
    std::atomic<std::size_t> backend_calls_{0};
    std::atomic<std::size_t> cache_hits_{0};
};

enum class BackendKind { Mock, HttpOpenAiCompatible };
BackendKind parse_backend_kind(const std::string& s);

}  // namespace timewarp
