#include <doctest.h>

#include <chrono>
#include <csignal>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "capsule/runlog.hpp"
#include "capsule/subprocess.hpp"

#include "support.hpp"

using namespace capsule;
using nlohmann::json;

namespace {

// CAPSULE_BIN is set by ctest; direct runs find the tool next to this binary.
std::string capsule_bin() {
    if (const char* env = std::getenv("CAPSULE_BIN")) return env;
    std::error_code ec;
    auto self = std::filesystem::read_symlink("/proc/self/exe", ec);
    if (!ec) {
        auto candidate = self.parent_path().parent_path() / "capsule";
        if (std::filesystem::exists(candidate)) return candidate.string();
    }
    return {};
}

ProcessResult run_cli(const std::vector<std::string>& args,
                      const std::vector<std::pair<std::string, std::string>>& extra_env = {}) {
    ProcessOptions options;
    options.argv.push_back(capsule_bin());
    for (const auto& a : args) options.argv.push_back(a);
    if (const char* path = std::getenv("PATH")) options.env.emplace_back("PATH", path);
    if (const char* home = std::getenv("HOME")) options.env.emplace_back("HOME", home);
    for (const auto& kv : extra_env) options.env.push_back(kv);
    options.timeout_s = 120.0;
    return run_process(options);
}

// one-problem dataset plus a mock script that fails `failures` times
struct MiniSuite {
    testutil::TempDir dir;
    std::string dataset;
    std::string script;

    explicit MiniSuite(int failures = 0) {
        json problem{{"id", "mini/0"},
                     {"description", "Write foo(x) returning x squared."},
                     {"tests", {"assert foo(4) == 16"}}};
        dataset = dir.write("dataset.jsonl", problem.dump() + "\n").string();
        json responses = json::array();
        for (int i = 0; i < failures; ++i)
            responses.push_back(testutil::canned_response("def foo(x):\n    return x"));
        responses.push_back(testutil::canned_response("def foo(x):\n    return x * x"));
        json script_json{{"problems", {{"mini/0", responses}}}};
        script = dir.write("script.json", script_json.dump()).string();
    }

    std::vector<std::string> run_args(const std::string& log_name) const {
        return {"run",           "--dataset", dataset,
                "--format",      "custom",    "--backend",
                "mock",          "--mock-script", script,
                "--exec",        "subprocess", "--work-dir",
                (dir.path() / "work").string(), "--output",
                (dir.path() / log_name).string()};
    }
};

} // namespace

TEST_CASE("cli run writes a log and reports the summary") {
    REQUIRE_MESSAGE(!capsule_bin().empty(), "capsule binary not found");
    MiniSuite suite;
    ProcessResult result = run_cli(suite.run_args("runlog.jsonl"));
    CAPTURE(result.err);
    CHECK(result.exit_code == 0);
    CHECK(result.out.find("Success rate: 100.0%") != std::string::npos);
    RunLog log = read_run_log(suite.dir.path() / "runlog.jsonl");
    REQUIRE(log.outcomes.size() == 1);
    CHECK(log.outcomes[0].solved);
}

TEST_CASE("cli exits nonzero when the dataset is missing") {
    REQUIRE(!capsule_bin().empty());
    ProcessResult result = run_cli({"run", "--dataset", "/no/such/file.jsonl", "--format",
                                    "custom", "--backend", "mock"});
    CHECK(result.exit_code == 1);
    CHECK(result.err.find("/no/such/file.jsonl") != std::string::npos);
}

TEST_CASE("cli max-attempts zero runs generation only") {
    REQUIRE(!capsule_bin().empty());
    MiniSuite suite(3); // would need 3 fixes; none are allowed
    auto args = suite.run_args("gen-only.jsonl");
    args.push_back("--max-attempts");
    args.push_back("0");
    ProcessResult result = run_cli(args);
    CHECK(result.exit_code == 0); // run completed even though unsolved
    RunLog log = read_run_log(suite.dir.path() / "gen-only.jsonl");
    REQUIRE(log.outcomes.size() == 1);
    CHECK_FALSE(log.outcomes[0].solved);
    CHECK(log.outcomes[0].llm_calls == 1);
}

TEST_CASE("cli analyze emits the table workflow artifacts") {
    REQUIRE(!capsule_bin().empty());
    testutil::TempDir dir;
    ProcessResult result = run_cli({"analyze", "--from-table", "92.0,3.8,1.9,1.1,1.1,0.2", "--n",
                                    "100", "--fit", "--out-dir", dir.path().string()});
    CAPTURE(result.err);
    CHECK(result.exit_code == 0);
    CHECK(result.out.find("i,S_i,N_i,I_i") != std::string::npos);
    CHECK(result.out.find("0,92,100,0.92") != std::string::npos);
    std::string csv = testutil::read_file(dir.path() / "influence.csv");
    CHECK(csv.find("1,3.8,8,0.475") != std::string::npos);
    json fit = json::parse(testutil::read_file(dir.path() / "fit.json"));
    CHECK(fit.at("points_used").get<int>() == 6);
    CHECK(fit.at("r_squared").get<double>() <= 1.0);
}

TEST_CASE("cli analyze of a run log stays within the attempt table bounds") {
    REQUIRE(!capsule_bin().empty());
    MiniSuite suite(2);
    REQUIRE(run_cli(suite.run_args("for-analyze.jsonl")).exit_code == 0);
    ProcessResult result =
        run_cli({"analyze", "--log", (suite.dir.path() / "for-analyze.jsonl").string(),
                 "--out-dir", (suite.dir.path() / "analysis").string()});
    CAPTURE(result.err);
    CHECK(result.exit_code == 0);
    std::string csv = testutil::read_file(suite.dir.path() / "analysis" / "influence.csv");
    CHECK(csv.rfind("i,S_i,N_i,I_i\n", 0) == 0);
    std::size_t rows = 0;
    for (char c : csv)
        if (c == '\n') ++rows;
    CHECK(rows <= 7); // header + attempts 0..5
    json summary = json::parse(testutil::read_file(suite.dir.path() / "analysis" / "summary.json"));
    CHECK(summary.at("problems").get<int>() == 1);
    CHECK(summary.at("solved").get<int>() == 1);
    CHECK(summary.at("avg_llm_calls_per_problem").get<double>() == 3.0);
}

TEST_CASE("cli analyze --fit with one usable point exits nonzero") {
    REQUIRE(!capsule_bin().empty());
    testutil::TempDir dir;
    ProcessResult result = run_cli({"analyze", "--from-table", "100", "--n", "100", "--fit",
                                    "--out-dir", dir.path().string()});
    CHECK(result.exit_code == 2);
    CHECK(result.err.find("two points") != std::string::npos);
}

TEST_CASE("cli replay reproduces a recorded run") {
    REQUIRE(!capsule_bin().empty());
    MiniSuite suite(1);
    auto args = suite.run_args("original.jsonl");
    args.push_back("--record-transcript");
    args.push_back((suite.dir.path() / "transcript.jsonl").string());
    ProcessResult recorded = run_cli(args);
    CAPTURE(recorded.err);
    REQUIRE(recorded.exit_code == 0);

    ProcessResult replayed = run_cli(
        {"replay", "--transcript", (suite.dir.path() / "transcript.jsonl").string(), "--dataset",
         suite.dataset, "--format", "custom", "--work-dir",
         (suite.dir.path() / "work2").string(), "--output",
         (suite.dir.path() / "replayed.jsonl").string()});
    CAPTURE(replayed.err);
    CHECK(replayed.exit_code == 0);

    RunLog original = read_run_log(suite.dir.path() / "original.jsonl");
    RunLog replay_log = read_run_log(suite.dir.path() / "replayed.jsonl");
    REQUIRE(replay_log.outcomes.size() == original.outcomes.size());
    CHECK(replay_log.outcomes[0].solved == original.outcomes[0].solved);
    CHECK(replay_log.outcomes[0].llm_calls == original.outcomes[0].llm_calls);
}

TEST_CASE("cli replay against a mismatched dataset exits nonzero") {
    REQUIRE(!capsule_bin().empty());
    MiniSuite suite;
    auto args = suite.run_args("orig.jsonl");
    args.push_back("--record-transcript");
    args.push_back((suite.dir.path() / "t.jsonl").string());
    REQUIRE(run_cli(args).exit_code == 0);

    json other{{"id", "different/0"},
               {"description", "Another problem entirely."},
               {"tests", {"assert bar(1) == 1"}}};
    auto mismatched = suite.dir.write("other.jsonl", other.dump() + "\n");
    ProcessResult result = run_cli({"replay", "--transcript",
                                    (suite.dir.path() / "t.jsonl").string(), "--dataset",
                                    mismatched.string(), "--format", "custom", "--work-dir",
                                    (suite.dir.path() / "work3").string(), "--output",
                                    (suite.dir.path() / "r.jsonl").string()});
    CHECK(result.exit_code == 2);
}

TEST_CASE("cli solve prints the final code") {
    REQUIRE(!capsule_bin().empty());
    testutil::TempDir dir;
    json script_json{{"default", {testutil::canned_response("def twice(x):\n    return 2 * x")}}};
    auto script = dir.write("script.json", script_json.dump());
    ProcessResult result = run_cli({"solve", "--description", "Double a number.", "--test",
                                    "assert twice(2) == 4", "--backend", "mock", "--mock-script",
                                    script.string(), "--work-dir",
                                    (dir.path() / "work").string()});
    CAPTURE(result.err);
    CHECK(result.exit_code == 0);
    CHECK(result.out.find("solved in 1 call(s)") != std::string::npos);
    CHECK(result.out.find("return 2 * x") != std::string::npos);
}

// Ctrl-C: in-flight executions are killed and the log is flushed.
TEST_CASE("cli interrupt cancels promptly and preserves the log") {
    REQUIRE(!capsule_bin().empty());
    testutil::TempDir dir;
    json problem{{"id", "spin/0"},
                 {"description", "Loop forever."},
                 {"tests", {"assert True"}}};
    auto dataset = dir.write("dataset.jsonl", problem.dump() + "\n");
    json script{{"default", {testutil::canned_response("while True:\n    pass")}}};
    auto script_path = dir.write("script.json", script.dump());
    auto log_path = dir.path() / "cancelled.jsonl";

    pid_t pid = fork();
    REQUIRE(pid >= 0);
    if (pid == 0) {
        std::string bin = capsule_bin();
        // a generous timeout so only cancellation can end the run quickly
        execl(bin.c_str(), bin.c_str(), "run", "--dataset", dataset.c_str(), "--format",
              "custom", "--backend", "mock", "--mock-script", script_path.c_str(), "--exec",
              "subprocess", "--timeout", "60", "--work-dir", (dir.path() / "work").c_str(),
              "--output", log_path.c_str(), static_cast<char*>(nullptr));
        _exit(127);
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(1500));
    kill(pid, SIGINT);

    int status = 0;
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(15);
    while (waitpid(pid, &status, WNOHANG) == 0) {
        if (std::chrono::steady_clock::now() > deadline) {
            kill(pid, SIGKILL);
            waitpid(pid, &status, 0);
            FAIL("cli did not exit after SIGINT");
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    REQUIRE(WIFEXITED(status));
    CHECK(WEXITSTATUS(status) == 2);
    // the append-only log survived with at least the config line
    std::string log_text = testutil::read_file(log_path);
    CHECK(log_text.find("\"type\":") != std::string::npos);
}

// flag > environment > config file > built-in default
TEST_CASE("cli option precedence matrix") {
    REQUIRE(!capsule_bin().empty());
    MiniSuite suite;
    auto config_file = suite.dir.write("capsule.conf", "max-attempts = 2\n");

    auto effective_max_attempts = [&](const std::vector<std::string>& extra,
                                      bool with_env) -> int {
        // --config in subcommand position
        std::vector<std::string> args = suite.run_args("precedence.jsonl");
        args.push_back("--config");
        args.push_back(config_file.string());
        for (const auto& a : extra) args.push_back(a);
        std::vector<std::pair<std::string, std::string>> env;
        if (with_env) env.emplace_back("CAPSULE_MAX_ATTEMPTS", "3");
        ProcessResult result = run_cli(args, env);
        CAPTURE(result.err);
        REQUIRE(result.exit_code == 0);
        RunLog log = read_run_log(suite.dir.path() / "precedence.jsonl");
        return log.config_snapshot.at("max_attempts").get<int>();
    };

    CHECK(effective_max_attempts({"--max-attempts", "4"}, true) == 4); // flag wins
    CHECK(effective_max_attempts({}, true) == 3);                     // env beats file
    CHECK(effective_max_attempts({}, false) == 2);                    // file beats default
    MiniSuite plain;
    ProcessResult result = run_cli(plain.run_args("default.jsonl"));
    REQUIRE(result.exit_code == 0);
    RunLog log = read_run_log(plain.dir.path() / "default.jsonl");
    CHECK(log.config_snapshot.at("max_attempts").get<int>() == 5); // built-in default
}
