#include "capsule/backend.hpp"

#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "capsule/digest.hpp"
#include "capsule/errors.hpp"

namespace capsule {

using nlohmann::json;

std::string to_string(TokenSource source) {
    return source == TokenSource::backend_reported ? "backend_reported" : "heuristic";
}

long heuristic_tokens(std::size_t bytes) { return static_cast<long>((bytes + 3) / 4); }

std::string request_digest(const CompletionRequest& request) {
    std::ostringstream canonical;
    canonical.precision(17);
    canonical << request.model_name << '\x1f' << request.temperature << '\x1f'
              << request.max_output_tokens << '\x1f' << request.system_text << '\x1f'
              << request.user_text << '\x1f' << request.problem_id;
    return sha256_hex(canonical.str());
}

namespace {

CompletionResult with_heuristic_usage(const CompletionRequest& request, std::string text) {
    CompletionResult result;
    result.prompt_tokens =
        heuristic_tokens(request.system_text.size() + request.user_text.size());
    result.completion_tokens = heuristic_tokens(text.size());
    result.token_source = TokenSource::heuristic;
    result.text = std::move(text);
    return result;
}

} // namespace

// --- mock ---------------------------------------------------------------

MockBackend::MockBackend(std::map<std::string, std::vector<std::string>> per_problem,
                         std::vector<std::string> default_sequence)
    : per_problem_(std::move(per_problem)), default_sequence_(std::move(default_sequence)) {}

MockBackend::MockBackend(const std::filesystem::path& script_path) {
    std::ifstream in(script_path);
    if (!in) throw BackendUnavailable("cannot open mock script: " + script_path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw BackendUnavailable("invalid mock script: " + std::string(e.what()));
    }
    if (j.contains("problems"))
        per_problem_ = j.at("problems").get<std::map<std::string, std::vector<std::string>>>();
    if (j.contains("default")) default_sequence_ = j.at("default").get<std::vector<std::string>>();
}

CompletionResult MockBackend::complete(const CompletionRequest& request) {
    std::string text;
    {
        std::lock_guard lock(mutex_);
        const std::vector<std::string>* sequence = &default_sequence_;
        if (auto it = per_problem_.find(request.problem_id); it != per_problem_.end())
            sequence = &it->second;
        if (sequence->empty())
            throw BackendUnavailable("mock script has no responses for problem '" +
                                     request.problem_id + "'");
        std::size_t& cursor = cursors_[request.problem_id];
        // an exhausted sequence repeats its last canned text
        text = (*sequence)[std::min(cursor, sequence->size() - 1)];
        ++cursor;
    }
    return with_heuristic_usage(request, std::move(text));
}

// --- replay -------------------------------------------------------------

ReplayBackend::ReplayBackend(const std::filesystem::path& transcript_path) {
    std::ifstream in(transcript_path);
    if (!in) throw BackendUnavailable("cannot open transcript: " + transcript_path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw BackendUnavailable("invalid transcript line " + std::to_string(line_no) + ": " +
                                     e.what());
        }
        Entry entry;
        entry.text = j.at("response_text").get<std::string>();
        entry.prompt_tokens = j.value("prompt_tokens", 0L);
        entry.completion_tokens = j.value("completion_tokens", 0L);
        by_digest_[j.at("request_digest").get<std::string>()].push_back(std::move(entry));
    }
}

CompletionResult ReplayBackend::complete(const CompletionRequest& request) {
    std::string digest = request_digest(request);
    std::lock_guard lock(mutex_);
    auto it = by_digest_.find(digest);
    if (it == by_digest_.end() || it->second.empty())
        throw ReplayExhausted("transcript has no entry for this request (problem '" +
                              request.problem_id + "')");
    Entry entry = std::move(it->second.front());
    it->second.pop_front();
    CompletionResult result;
    result.text = std::move(entry.text);
    result.prompt_tokens = entry.prompt_tokens;
    result.completion_tokens = entry.completion_tokens;
    result.token_source = TokenSource::backend_reported;
    return result;
}

// --- recording ----------------------------------------------------------

RecordingBackend::RecordingBackend(CompletionBackend& inner,
                                   const std::filesystem::path& transcript_path)
    : inner_(inner), file_(transcript_path, std::ios::trunc) {
    if (!file_) throw BackendUnavailable("cannot write transcript: " + transcript_path.string());
}

CompletionResult RecordingBackend::complete(const CompletionRequest& request) {
    CompletionResult result = inner_.complete(request);
    json entry{
        {"request_digest", request_digest(request)},
        {"response_text", result.text},
        {"prompt_tokens", result.prompt_tokens},
        {"completion_tokens", result.completion_tokens},
    };
    std::lock_guard lock(mutex_);
    file_ << entry.dump() << '\n';
    file_.flush();
    return result;
}

// --- http ---------------------------------------------------------------

HttpBackendConfig HttpBackendConfig::from_env() {
    HttpBackendConfig config;
    if (const char* base = std::getenv("CAPSULE_API_BASE")) config.base_url = base;
    if (const char* key = std::getenv("CAPSULE_API_KEY")) config.api_key = key;
    return config;
}

struct HttpBackend::Impl {
    HttpBackendConfig config;
    std::string host; // scheme://authority
    std::string path_prefix;

    // runtime-sized concurrency cap shared across workers
    std::mutex slots_mutex;
    std::condition_variable slots_cv;
    int slots_in_use = 0;

    explicit Impl(HttpBackendConfig c) : config(std::move(c)) {
        if (config.base_url.empty())
            throw BackendUnavailable("no API base URL configured (set CAPSULE_API_BASE)");
        std::string url = config.base_url;
        std::size_t scheme = url.find("://");
        std::size_t path = scheme == std::string::npos ? url.find('/')
                                                       : url.find('/', scheme + 3);
        if (path == std::string::npos) {
            host = url;
        } else {
            host = url.substr(0, path);
            path_prefix = url.substr(path);
        }
        while (!path_prefix.empty() && path_prefix.back() == '/') path_prefix.pop_back();
    }

    struct Slot {
        Impl& impl;
        explicit Slot(Impl& i) : impl(i) {
            std::unique_lock lock(impl.slots_mutex);
            impl.slots_cv.wait(lock,
                               [&] { return impl.slots_in_use < impl.config.max_concurrent; });
            ++impl.slots_in_use;
        }
        ~Slot() {
            {
                std::lock_guard lock(impl.slots_mutex);
                --impl.slots_in_use;
            }
            impl.slots_cv.notify_one();
        }
    };
};

HttpBackend::HttpBackend(HttpBackendConfig config)
    : impl_(std::make_unique<Impl>(std::move(config))) {}

HttpBackend::~HttpBackend() = default;

CompletionResult HttpBackend::complete(const CompletionRequest& request) {
    Impl::Slot slot(*impl_);

    json body{
        {"model", request.model_name},
        {"messages",
         {{{"role", "system"}, {"content", request.system_text}},
          {{"role", "user"}, {"content", request.user_text}}}},
        {"temperature", request.temperature},
        {"max_tokens", request.max_output_tokens},
    };
    httplib::Headers headers;
    if (!impl_->config.api_key.empty())
        headers.emplace("Authorization", "Bearer " + impl_->config.api_key);

    std::string last_error;
    double backoff = impl_->config.backoff_initial_s;
    for (int attempt = 0; attempt <= impl_->config.max_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
            backoff = std::min(backoff * 2, impl_->config.backoff_cap_s);
        }
        httplib::Client client(impl_->host);
        client.set_connection_timeout(std::chrono::duration<double>(10));
        client.set_read_timeout(std::chrono::duration<double>(impl_->config.request_timeout_s));
        auto res = client.Post(impl_->path_prefix + "/chat/completions", headers, body.dump(),
                               "application/json");
        if (!res) {
            last_error = "connection error: " + httplib::to_string(res.error());
            continue; // transient
        }
        if (res->status == 429 || res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status);
            continue; // transient
        }
        if (res->status != 200)
            throw BackendUnavailable("completion endpoint returned HTTP " +
                                     std::to_string(res->status) + ": " + res->body);
        try {
            json j = json::parse(res->body);
            CompletionResult result;
            result.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
            if (j.contains("usage")) {
                const auto& usage = j.at("usage");
                result.prompt_tokens = usage.value("prompt_tokens", 0L);
                result.completion_tokens = usage.value("completion_tokens", 0L);
                result.token_source = TokenSource::backend_reported;
            } else {
                CompletionResult heur = with_heuristic_usage(request, result.text);
                result.prompt_tokens = heur.prompt_tokens;
                result.completion_tokens = heur.completion_tokens;
                result.token_source = TokenSource::heuristic;
            }
            return result;
        } catch (const json::exception& e) {
            throw BackendUnavailable("malformed completion response: " + std::string(e.what()));
        }
    }
    throw BackendUnavailable("completion endpoint unavailable after " +
                             std::to_string(impl_->config.max_retries + 1) +
                             " attempts: " + last_error);
}

} // namespace capsule
