#include <doctest.h>

#include <atomic>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "capsule/backend.hpp"
#include "capsule/errors.hpp"

#include "support.hpp"

using namespace capsule;
using nlohmann::json;

namespace {

CompletionRequest request_for(const std::string& problem_id, const std::string& user = "hello") {
    CompletionRequest request;
    request.system_text = "system";
    request.user_text = user;
    request.model_name = "test-model";
    request.problem_id = problem_id;
    return request;
}

} // namespace

TEST_CASE("heuristic token count is ceil(bytes/4)") {
    CHECK(heuristic_tokens(400) == 100);
    CHECK(heuristic_tokens(401) == 101);
    CHECK(heuristic_tokens(0) == 0);
    CHECK(heuristic_tokens(3) == 1);
}

TEST_CASE("request digest distinguishes every field") {
    CompletionRequest base = request_for("p");
    std::string d0 = request_digest(base);
    CHECK(request_digest(base) == d0);

    CompletionRequest variant = base;
    variant.user_text = "other";
    CHECK(request_digest(variant) != d0);
    variant = base;
    variant.model_name = "m2";
    CHECK(request_digest(variant) != d0);
    variant = base;
    variant.temperature = 0.5;
    CHECK(request_digest(variant) != d0);
    variant = base;
    variant.problem_id = "q";
    CHECK(request_digest(variant) != d0);
}

TEST_CASE("mock backend walks per-problem sequences in order") {
    MockBackend backend({{"p", {"bad one", "bad two", "good"}}}, {});
    CHECK(backend.complete(request_for("p")).text == "bad one");
    CHECK(backend.complete(request_for("p")).text == "bad two");
    CHECK(backend.complete(request_for("p")).text == "good");
    // exhausted sequences repeat the last entry
    CHECK(backend.complete(request_for("p")).text == "good");
}

TEST_CASE("mock backend default sequence is per problem") {
    MockBackend backend({}, {"first", "second"});
    CHECK(backend.complete(request_for("a")).text == "first");
    CHECK(backend.complete(request_for("b")).text == "first");
    CHECK(backend.complete(request_for("a")).text == "second");
}

TEST_CASE("mock backend with no script entry is unavailable") {
    MockBackend backend({{"p", {"x"}}}, {});
    CHECK_THROWS_AS(backend.complete(request_for("unknown")), BackendUnavailable);
}

TEST_CASE("mock usage is the documented heuristic") {
    MockBackend backend({}, {"12345678"});
    CompletionRequest request = request_for("p"); // "system" + "hello" = 11 bytes
    CompletionResult result = backend.complete(request);
    CHECK(result.prompt_tokens == 3);
    CHECK(result.completion_tokens == 2);
    CHECK(result.token_source == TokenSource::heuristic);
}

TEST_CASE("mock script file format") {
    testutil::TempDir dir;
    auto path = dir.write("script.json",
                          R"({"problems": {"p": ["alpha"]}, "default": ["fallback"]})");
    MockBackend backend(path);
    CHECK(backend.complete(request_for("p")).text == "alpha");
    CHECK(backend.complete(request_for("other")).text == "fallback");
}

TEST_CASE("recording then replaying reproduces completions byte for byte") {
    testutil::TempDir dir;
    auto transcript = dir.path() / "transcript.jsonl";
    MockBackend mock({{"p", {"one", "two"}}}, {});
    {
        RecordingBackend recorder(mock, transcript);
        CHECK(recorder.complete(request_for("p")).text == "one");
        CHECK(recorder.complete(request_for("p", "second prompt")).text == "two");
    }
    ReplayBackend replay(transcript);
    CompletionResult first = replay.complete(request_for("p"));
    CompletionResult second = replay.complete(request_for("p", "second prompt"));
    CHECK(first.text == "one");
    CHECK(second.text == "two");
    CHECK(first.prompt_tokens == heuristic_tokens(11));
}

TEST_CASE("replay exhaustion raises after the transcript runs out") {
    testutil::TempDir dir;
    auto transcript = dir.path() / "t.jsonl";
    MockBackend mock({}, {"only"});
    {
        RecordingBackend recorder(mock, transcript);
        recorder.complete(request_for("p"));
    }
    ReplayBackend replay(transcript);
    replay.complete(request_for("p"));
    CHECK_THROWS_AS(replay.complete(request_for("p")), ReplayExhausted);
}

TEST_CASE("replay of an unseen request raises") {
    testutil::TempDir dir;
    auto transcript = dir.path() / "t.jsonl";
    MockBackend mock({}, {"only"});
    {
        RecordingBackend recorder(mock, transcript);
        recorder.complete(request_for("p"));
    }
    ReplayBackend replay(transcript);
    CHECK_THROWS_AS(replay.complete(request_for("different")), ReplayExhausted);
}

TEST_CASE("mock backend is safe under concurrent callers") {
    MockBackend backend({}, {"r0", "r1", "r2", "r3", "r4", "r5", "r6", "r7"});
    std::atomic<int> failures{0};
    auto worker = [&](int id) {
        std::string problem = "p" + std::to_string(id);
        for (int k = 0; k < 8; ++k) {
            std::string expected = "r" + std::to_string(k);
            if (backend.complete(request_for(problem)).text != expected) ++failures;
        }
    };
    std::vector<std::thread> threads;
    for (int i = 0; i < 4; ++i) threads.emplace_back(worker, i);
    for (auto& t : threads) t.join();
    CHECK(failures.load() == 0);
}

TEST_CASE("http backend speaks the chat-completion wire format") {
    httplib::Server server;
    json seen_body;
    std::string seen_auth;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        seen_body = json::parse(req.body);
        if (req.has_header("Authorization")) seen_auth = req.get_header_value("Authorization");
        json reply{
            {"choices", {{{"message", {{"role", "assistant"}, {"content", "pong"}}}}}},
            {"usage", {{"prompt_tokens", 7}, {"completion_tokens", 5}}},
        };
        res.set_content(reply.dump(), "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    HttpBackendConfig config;
    config.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
    config.api_key = "sk-test";
    HttpBackend backend(config);
    CompletionResult result = backend.complete(request_for("p"));

    server.stop();
    thread.join();

    CHECK(result.text == "pong");
    CHECK(result.prompt_tokens == 7);
    CHECK(result.completion_tokens == 5);
    CHECK(result.token_source == TokenSource::backend_reported);
    CHECK(seen_auth == "Bearer sk-test");
    REQUIRE(seen_body.contains("messages"));
    REQUIRE(seen_body.at("messages").size() == 2);
    CHECK(seen_body.at("messages").at(0).at("role") == "system");
    CHECK(seen_body.at("messages").at(1).at("role") == "user");
    CHECK(seen_body.at("model") == "test-model");
}

TEST_CASE("http backend retries transient failures with backoff") {
    httplib::Server server;
    std::atomic<int> calls{0};
    server.Post("/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        if (calls.fetch_add(1) < 2) {
            res.status = 503;
            return;
        }
        json reply{{"choices", {{{"message", {{"content", "recovered"}}}}}}};
        res.set_content(reply.dump(), "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    HttpBackendConfig config;
    config.base_url = "http://127.0.0.1:" + std::to_string(port);
    config.backoff_initial_s = 0.01;
    HttpBackend backend(config);
    CompletionResult result = backend.complete(request_for("p"));

    server.stop();
    thread.join();

    CHECK(result.text == "recovered");
    CHECK(calls.load() == 3);
    // no usage block in the reply, so the heuristic kicks in
    CHECK(result.token_source == TokenSource::heuristic);
}

TEST_CASE("http backend gives up after the retry budget") {
    HttpBackendConfig config;
    config.base_url = "http://127.0.0.1:1"; // nothing listens there
    config.max_retries = 1;
    config.backoff_initial_s = 0.01;
    HttpBackend backend(config);
    CHECK_THROWS_AS(backend.complete(request_for("p")), BackendUnavailable);
}

TEST_CASE("token source names") {
    CHECK(to_string(TokenSource::backend_reported) == "backend_reported");
    CHECK(to_string(TokenSource::heuristic) == "heuristic");
}
