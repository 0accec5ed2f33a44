#pragma once

#include <cstddef>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace capsule {

enum class TokenSource { backend_reported, heuristic };

std::string to_string(TokenSource source);

struct CompletionRequest {
    std::string system_text;
    std::string user_text;
    std::string model_name;
    double temperature = 0.0;
    int max_output_tokens = 2048;
    /// Routing tag for scripted and replay backends; not sent over the wire.
    std::string problem_id;
};

struct CompletionResult {
    std::string text;
    long prompt_tokens = 0;
    long completion_tokens = 0;
    TokenSource token_source = TokenSource::heuristic;
};

/// ceil(bytes / 4), the fallback when a backend reports no usage.
long heuristic_tokens(std::size_t bytes);

/// Stable identity of a request, used for transcript matching.
std::string request_digest(const CompletionRequest& request);

/// Uniform completion interface. Implementations must be safe to call from
/// multiple workers concurrently.
class CompletionBackend {
public:
    virtual ~CompletionBackend() = default;
    virtual CompletionResult complete(const CompletionRequest& request) = 0;
};

/// Scripted backend: an ordered list of canned response texts per problem id,
/// with a default sequence fallback. A problem's cursor advances one canned
/// text per call; an exhausted sequence repeats its last entry.
class MockBackend : public CompletionBackend {
public:
    MockBackend(std::map<std::string, std::vector<std::string>> per_problem,
                std::vector<std::string> default_sequence);

    /// Script file: {"problems": {"<id>": ["text", ...]}, "default": ["text", ...]}
    explicit MockBackend(const std::filesystem::path& script_path);

    CompletionResult complete(const CompletionRequest& request) override;

private:
    std::map<std::string, std::vector<std::string>> per_problem_;
    std::vector<std::string> default_sequence_;
    std::map<std::string, std::size_t> cursors_; // one per problem id
    std::mutex mutex_;
};

/// Replays a recorded transcript: each request is answered by the next
/// recorded entry with the same request digest. Throws ReplayExhausted when
/// none is left.
class ReplayBackend : public CompletionBackend {
public:
    explicit ReplayBackend(const std::filesystem::path& transcript_path);

    CompletionResult complete(const CompletionRequest& request) override;

private:
    struct Entry {
        std::string text;
        long prompt_tokens = 0;
        long completion_tokens = 0;
    };
    std::map<std::string, std::deque<Entry>> by_digest_;
    std::mutex mutex_;
};

/// Decorator that appends every (request digest, completion, usage) to a
/// JSONL transcript in call order. The file is replayable by ReplayBackend.
class RecordingBackend : public CompletionBackend {
public:
    RecordingBackend(CompletionBackend& inner, const std::filesystem::path& transcript_path);

    CompletionResult complete(const CompletionRequest& request) override;

private:
    CompletionBackend& inner_;
    std::ofstream file_;
    std::mutex mutex_;
};

struct HttpBackendConfig {
    std::string base_url; // e.g. https://api.example.com/v1 (env CAPSULE_API_BASE)
    std::string api_key;  // env CAPSULE_API_KEY
    int max_retries = 3;
    double backoff_initial_s = 0.5;
    double backoff_cap_s = 8.0;
    int max_concurrent = 4; // in-flight request cap shared across workers
    double request_timeout_s = 120.0;

    static HttpBackendConfig from_env();
};

/// Chat-completion HTTP endpoint. Transient failures (connect errors, 429,
/// 5xx) are retried with capped exponential backoff; exhaustion throws
/// BackendUnavailable. Usage is taken from the endpoint's report when present,
/// else estimated heuristically.
class HttpBackend : public CompletionBackend {
public:
    explicit HttpBackend(HttpBackendConfig config);
    ~HttpBackend() override;

    CompletionResult complete(const CompletionRequest& request) override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace capsule
