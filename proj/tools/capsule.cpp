// capsule: run code-generation suites against a completion backend, execute
// candidates in a sandbox, and analyze the resulting logs.

#include <atomic>
#include <cctype>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "capsule/analytics.hpp"
#include "capsule/backend.hpp"
#include "capsule/dataset.hpp"
#include "capsule/errors.hpp"
#include "capsule/executor.hpp"
#include "capsule/orchestrator.hpp"
#include "capsule/runlog.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::atomic<bool> g_cancel{false};

void handle_signal(int) { g_cancel.store(true); }

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct CommonOptions {
    std::string config_path; // consumed by apply_config_file before parsing
    std::string backend_kind = "mock";
    std::string mock_script;
    std::string transcript;
    std::string record_transcript;
    std::string model_name = "mock";
    int max_attempts = 5;
    double timeout_s = 10.0;
    int workers = 1;
    std::size_t error_budget = 2000;
    std::string exec_backend = "subprocess";
    std::string work_dir;
    bool keep_artifacts = false;
    std::string hint_mode = "auto";
    double temperature = 0.0;
    int max_output_tokens = 2048;
    std::string interpreter = "python3";
    std::string image = "python:3.11-slim";
    std::string engine_socket = "/var/run/docker.sock";
    int llm_concurrency = 4;
    std::string guidance_file;
    std::string generation_template_file;
    std::string fix_template_file;
};

void add_common_options(CLI::App* cmd, CommonOptions& opt) {
    cmd->add_option("--config", opt.config_path, "Config file (key = value lines)");
    cmd->add_option("--backend", opt.backend_kind, "Completion backend: mock|replay|http")
        ->envname("CAPSULE_BACKEND");
    cmd->add_option("--mock-script", opt.mock_script, "Canned responses for the mock backend")
        ->envname("CAPSULE_MOCK_SCRIPT");
    cmd->add_option("--transcript", opt.transcript, "Transcript to replay")
        ->envname("CAPSULE_TRANSCRIPT");
    cmd->add_option("--record-transcript", opt.record_transcript,
                    "Record every completion to this JSONL file")
        ->envname("CAPSULE_RECORD_TRANSCRIPT");
    cmd->add_option("--model", opt.model_name, "Model name sent to the backend")
        ->envname("CAPSULE_MODEL");
    cmd->add_option("--max-attempts", opt.max_attempts, "Fix-mode iterations after generation")
        ->check(CLI::NonNegativeNumber)
        ->envname("CAPSULE_MAX_ATTEMPTS");
    cmd->add_option("--timeout", opt.timeout_s, "Per-execution timeout in seconds")
        ->check(CLI::PositiveNumber)
        ->envname("CAPSULE_TIMEOUT");
    cmd->add_option("--workers", opt.workers, "Concurrent problems")
        ->check(CLI::PositiveNumber)
        ->envname("CAPSULE_WORKERS");
    cmd->add_option("--error-budget", opt.error_budget, "Refined error budget in characters")
        ->envname("CAPSULE_ERROR_BUDGET");
    cmd->add_option("--exec", opt.exec_backend, "Execution backend: subprocess|container")
        ->envname("CAPSULE_EXEC_BACKEND");
    cmd->add_option("--work-dir", opt.work_dir, "Workspace root (default: temp dir)")
        ->envname("CAPSULE_WORK_DIR");
    cmd->add_flag("--keep-artifacts", opt.keep_artifacts, "Keep workspaces after execution")
        ->envname("CAPSULE_KEEP_ARTIFACTS");
    cmd->add_option("--hint-mode", opt.hint_mode, "Signature hint injection: auto|always|never")
        ->envname("CAPSULE_HINT_MODE");
    cmd->add_option("--temperature", opt.temperature, "Sampling temperature")
        ->envname("CAPSULE_TEMPERATURE");
    cmd->add_option("--max-output-tokens", opt.max_output_tokens, "Completion length cap")
        ->check(CLI::PositiveNumber)
        ->envname("CAPSULE_MAX_OUTPUT_TOKENS");
    cmd->add_option("--interpreter", opt.interpreter, "Interpreter for the subprocess backend")
        ->envname("CAPSULE_INTERPRETER");
    cmd->add_option("--image", opt.image, "Image for the container backend")
        ->envname("CAPSULE_IMAGE");
    cmd->add_option("--engine-socket", opt.engine_socket, "Container engine control socket")
        ->envname("CAPSULE_ENGINE_SOCKET");
    cmd->add_option("--llm-concurrency", opt.llm_concurrency,
                    "In-flight request cap for the HTTP backend")
        ->check(CLI::PositiveNumber)
        ->envname("CAPSULE_LLM_CONCURRENCY");
    cmd->add_option("--guidance-file", opt.guidance_file,
                    "JSON table overriding per-category guidance sentences")
        ->envname("CAPSULE_GUIDANCE_FILE");
    cmd->add_option("--generation-template", opt.generation_template_file,
                    "File overriding the generation-mode system prompt")
        ->envname("CAPSULE_GENERATION_TEMPLATE");
    cmd->add_option("--fix-template", opt.fix_template_file,
                    "File overriding the fix-mode system prompt")
        ->envname("CAPSULE_FIX_TEMPLATE");
}

std::unique_ptr<capsule::CompletionBackend> make_backend(const CommonOptions& opt) {
    if (opt.backend_kind == "mock") {
        if (opt.mock_script.empty())
            throw CLI::ValidationError("--mock-script is required with the mock backend");
        return std::make_unique<capsule::MockBackend>(std::filesystem::path(opt.mock_script));
    }
    if (opt.backend_kind == "replay") {
        if (opt.transcript.empty())
            throw CLI::ValidationError("--transcript is required with the replay backend");
        return std::make_unique<capsule::ReplayBackend>(opt.transcript);
    }
    if (opt.backend_kind == "http") {
        auto config = capsule::HttpBackendConfig::from_env();
        config.max_concurrent = opt.llm_concurrency;
        return std::make_unique<capsule::HttpBackend>(std::move(config));
    }
    throw CLI::ValidationError("unknown backend: " + opt.backend_kind);
}

capsule::ExecutorConfig make_executor_config(const CommonOptions& opt) {
    capsule::ExecutorConfig config;
    config.backend = capsule::exec_backend_from_string(opt.exec_backend);
    config.timeout_s = opt.timeout_s;
    config.keep_artifacts = opt.keep_artifacts;
    config.interpreter = opt.interpreter;
    config.image = opt.image;
    config.engine_socket = opt.engine_socket;
    if (!opt.work_dir.empty()) {
        config.work_root = opt.work_dir;
    } else {
        config.work_root = fs::temp_directory_path() /
                           ("capsule-" + std::to_string(::getpid()));
    }
    return config;
}

capsule::SolveConfig make_solve_config(const CommonOptions& opt) {
    capsule::SolveConfig config;
    config.max_attempts = opt.max_attempts;
    config.timeout_s = opt.timeout_s;
    config.error_budget = opt.error_budget;
    config.model_name = opt.model_name;
    config.temperature = opt.temperature;
    config.max_output_tokens = opt.max_output_tokens;
    config.hint_mode = capsule::hint_mode_from_string(opt.hint_mode);
    config.workers = opt.workers;
    config.cleanup_workspaces = !opt.keep_artifacts;
    return config;
}

capsule::PromptTemplates make_templates(const CommonOptions& opt) {
    auto templates = capsule::PromptTemplates::defaults();
    if (!opt.generation_template_file.empty())
        templates.generation = capsule::PromptTemplates::load_template(opt.generation_template_file);
    if (!opt.fix_template_file.empty())
        templates.fix = capsule::PromptTemplates::load_template(opt.fix_template_file);
    return templates;
}

capsule::GuidanceTable make_guidance(const CommonOptions& opt) {
    if (opt.guidance_file.empty()) return capsule::default_guidance();
    return capsule::load_guidance(opt.guidance_file);
}

void print_summary(const capsule::RunLog& log) {
    capsule::Summary summary = capsule::summarize(log);
    std::printf("Problems: %d  Solved: %d  Success rate: %.1f%%\n", summary.problems,
                summary.solved, summary.success_rate * 100.0);
    std::printf("Total tokens: %lld  Avg tokens/problem: %.2f\n",
                summary.total_tokens, summary.avg_tokens_per_problem);
    std::printf("Avg LLM calls/problem: %.2f  Avg debugging attempts/problem: %.2f\n",
                summary.avg_llm_calls_per_problem, summary.avg_attempts_per_problem);
}

// Executes a suite and maintains the append-only log: outcomes are written in
// completion order while the run is live (a crash preserves finished work)
// and rewritten in input order on completion.
capsule::RunLog run_problems(const std::vector<capsule::Problem>& problems,
                             const CommonOptions& opt, const std::string& output_path) {
    auto backend = make_backend(opt);
    capsule::CompletionBackend* effective = backend.get();
    std::unique_ptr<capsule::RecordingBackend> recorder;
    if (!opt.record_transcript.empty()) {
        recorder = std::make_unique<capsule::RecordingBackend>(*backend, opt.record_transcript);
        effective = recorder.get();
    }

    capsule::SandboxExecutor executor(make_executor_config(opt));
    executor.set_cancel_flag(&g_cancel);
    capsule::Orchestrator orchestrator(*effective, executor, make_templates(opt),
                                       make_solve_config(opt), make_guidance(opt));
    orchestrator.set_cancel_flag(&g_cancel);

    std::ofstream live;
    if (!output_path.empty()) {
        live.open(output_path, std::ios::trunc);
        if (!live) throw capsule::Error("cannot write run log: " + output_path);
        live << json{{"type", "config"}, {"config", orchestrator.config_snapshot()}}.dump()
             << '\n';
        live.flush();
    }
    capsule::RunLog log = orchestrator.run_suite(problems, [&](const capsule::SolveOutcome& o) {
        if (!live.is_open()) return;
        json j = capsule::to_json(o);
        j["type"] = "outcome";
        live << j.dump() << '\n';
        live.flush();
    });
    if (live.is_open()) {
        live.close();
        capsule::write_run_log(output_path, log); // final file in input order
    }
    return log;
}

int cmd_run(const CommonOptions& opt, const std::string& dataset, const std::string& format,
            const std::string& split, const std::string& output_path) {
    if (!fs::exists(dataset)) {
        std::cerr << "error: dataset file does not exist: " << dataset << "\n";
        return kExitUsage;
    }
    capsule::LoadOptions load_options;
    load_options.split = split == "instruct" ? capsule::BigCodeBenchSplit::instruct
                                             : capsule::BigCodeBenchSplit::complete;
    capsule::LoadResult loaded =
        capsule::load_problems(dataset, capsule::source_format_from_string(format), load_options);
    for (const auto& w : loaded.warnings) std::cerr << "warning: " << w << "\n";

    capsule::RunLog log = run_problems(loaded.problems, opt, output_path);
    print_summary(log);
    int setup_failures = 0;
    for (const auto& outcome : log.outcomes)
        if (outcome.setup_failure) ++setup_failures;
    if (setup_failures > 0)
        std::cerr << "warning: " << setup_failures
                  << " problem(s) aborted on infrastructure failures; see the run log\n";
    if (!output_path.empty()) std::cout << "Run log: " << output_path << "\n";
    if (g_cancel.load()) {
        std::cerr << "run cancelled\n";
        return kExitRuntime;
    }
    return kExitOk;
}

int cmd_solve(const CommonOptions& opt, const std::string& id, const std::string& description,
              const std::vector<std::string>& tests, const std::string& entry_point) {
    capsule::Problem problem;
    problem.id = id;
    problem.description = description;
    problem.tests = tests;
    if (!entry_point.empty()) problem.entry_point = entry_point;
    problem.source_format = capsule::SourceFormat::custom;

    auto backend = make_backend(opt);
    capsule::SandboxExecutor executor(make_executor_config(opt));
    executor.set_cancel_flag(&g_cancel);
    capsule::Orchestrator orchestrator(*backend, executor, make_templates(opt),
                                       make_solve_config(opt), make_guidance(opt));
    orchestrator.set_cancel_flag(&g_cancel);

    capsule::SolveOutcome outcome = orchestrator.solve(problem);
    for (const auto& attempt : outcome.attempts) {
        std::printf("attempt %d: %s (exit %d, %.2fs)\n", attempt.index,
                    capsule::to_string(attempt.execution.status).c_str(),
                    attempt.execution.exit_code, attempt.execution.duration_s);
        if (attempt.refined)
            std::printf("  refined [%s]: %s\n", capsule::to_string(attempt.refined->category).c_str(),
                        attempt.refined->guidance.c_str());
    }
    if (outcome.setup_failure) {
        std::cerr << "setup failure: " << *outcome.setup_failure << "\n";
        return kExitRuntime;
    }
    if (outcome.solved) {
        std::printf("solved in %d call(s)\n---\n%s\n", outcome.llm_calls,
                    outcome.final_code.c_str());
    } else {
        std::printf("unsolved after %d call(s)\n", outcome.llm_calls);
    }
    return kExitOk;
}

int cmd_analyze(const std::vector<std::string>& log_paths, const std::string& table,
                const std::string& total, bool fit, bool pooled, const std::string& out_dir,
                int max_attempts) {
    std::vector<std::vector<capsule::InfluencePoint>> runs;
    std::optional<capsule::Summary> summary;

    if (!table.empty()) {
        std::vector<std::string> cells;
        std::stringstream ss(table);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        runs.push_back(capsule::influence(capsule::counts_from_table(cells, total)));
    }
    std::vector<json> summaries;
    for (const auto& path : log_paths) {
        capsule::RunLog log = capsule::read_run_log(path);
        runs.push_back(capsule::influence(capsule::tally(log, max_attempts)));
        summaries.push_back(capsule::to_json(capsule::summarize(log)));
    }
    if (runs.empty()) {
        std::cerr << "error: nothing to analyze; pass --log or --from-table\n";
        return kExitUsage;
    }

    std::vector<capsule::InfluencePoint> points;
    if (runs.size() == 1) {
        points = runs.front();
    } else if (pooled) {
        for (const auto& run : runs) points.insert(points.end(), run.begin(), run.end());
        std::stable_sort(points.begin(), points.end(),
                         [](const auto& a, const auto& b) { return a.attempt < b.attempt; });
    } else {
        points = capsule::mean_influence(runs);
    }

    fs::create_directories(out_dir);
    std::string csv = capsule::influence_csv(points);
    {
        std::ofstream out(fs::path(out_dir) / "influence.csv");
        out << csv;
    }
    std::cout << csv;

    if (!summaries.empty()) {
        std::ofstream out(fs::path(out_dir) / "summary.json");
        if (summaries.size() == 1)
            out << summaries.front().dump(2) << "\n";
        else
            out << json(summaries).dump(2) << "\n";
    }

    if (fit) {
        capsule::DecayFit decay = capsule::fit_decay(points);
        json j = capsule::to_json(decay);
        {
            std::ofstream out(fs::path(out_dir) / "fit.json");
            out << j.dump(2) << "\n";
        }
        std::printf("fit: a=%.6f b=%.6f r_squared=%.6f points=%d\n", decay.a, decay.b,
                    decay.r_squared, decay.points_used);
    }
    return kExitOk;
}

// Values from a `key = value` config file become option defaults, keeping the
// documented precedence: flag > environment > file > built-in default.
void apply_config_file(CLI::App& app, int argc, char** argv) {
    std::string config_path;
    for (int i = 1; i < argc - 1; ++i)
        if (std::string(argv[i]) == "--config") config_path = argv[i + 1];
    if (config_path.empty())
        if (const char* env = std::getenv("CAPSULE_CONFIG")) config_path = env;
    if (config_path.empty()) return;

    std::ifstream in(config_path);
    if (!in) throw CLI::ValidationError("cannot open config file: " + config_path);
    std::string line;
    std::map<std::string, std::string> values;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto strip = [](std::string s) {
            while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.erase(0, 1);
            while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
            return s;
        };
        std::string key = strip(line.substr(0, eq));
        std::string value = strip(line.substr(eq + 1));
        if (!key.empty()) values[key] = value;
    }
    for (auto* sub : app.get_subcommands({})) {
        for (const auto& [key, value] : values) {
            CLI::Option* option = sub->get_option_no_throw("--" + key);
            if (option && !option->get_positional()) option->default_val(value);
        }
    }
}

} // namespace

int main(int argc, char** argv) {
    std::signal(SIGINT, handle_signal);
    std::signal(SIGTERM, handle_signal);

    CLI::App app{"self-debugging code-generation harness"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("--config", config_path, "Config file (key = value lines)");

    CommonOptions run_opt;
    std::string dataset, format = "custom", split = "complete", output_path = "runlog.jsonl";
    CLI::App* run = app.add_subcommand("run", "Solve every problem in a dataset");
    run->add_option("--dataset", dataset, "JSONL dataset path")->required()
        ->envname("CAPSULE_DATASET");
    run->add_option("--format", format, "Dataset format: humaneval|mbpp|bigcodebench_lite|custom")
        ->envname("CAPSULE_FORMAT");
    run->add_option("--split", split, "BigCodeBench prompt split: complete|instruct")
        ->envname("CAPSULE_SPLIT");
    run->add_option("--output", output_path, "Run log path")->envname("CAPSULE_OUTPUT");
    add_common_options(run, run_opt);

    CommonOptions solve_opt;
    std::string solve_id = "cli/0", solve_description, solve_entry;
    std::vector<std::string> solve_tests;
    CLI::App* solve = app.add_subcommand("solve", "Solve a single inline problem");
    solve->add_option("--id", solve_id, "Problem id");
    solve->add_option("--description", solve_description, "Problem description")->required();
    solve->add_option("--test", solve_tests, "Test statement (repeatable)")->required();
    solve->add_option("--entry-point", solve_entry, "Entry-point function name");
    add_common_options(solve, solve_opt);

    std::vector<std::string> analyze_logs;
    std::string analyze_table, analyze_total = "100";
    bool analyze_fit = false, analyze_pooled = false;
    std::string analyze_out_dir = ".";
    int analyze_max_attempts = 5;
    std::string analyze_config_sink;
    CLI::App* analyze = app.add_subcommand("analyze", "Per-attempt influence, decay fit, summary");
    analyze->add_option("--config", analyze_config_sink, "Config file (key = value lines)");
    analyze->add_option("--log", analyze_logs, "Run log path (repeatable)");
    analyze->add_option("--from-table", analyze_table,
                        "Comma-separated per-attempt solved counts or percentages");
    analyze->add_option("--n", analyze_total, "Total problem count for --from-table");
    analyze->add_flag("--fit", analyze_fit, "Fit the exponential decay model");
    analyze->add_flag("--pooled", analyze_pooled,
                      "Pool points across runs instead of per-attempt means");
    analyze->add_option("--out-dir", analyze_out_dir, "Artifact output directory");
    analyze->add_option("--max-attempts", analyze_max_attempts, "Attempt indices to tally");

    CommonOptions replay_opt;
    std::string replay_dataset, replay_format = "custom", replay_split = "complete";
    std::string replay_output = "replay.jsonl";
    CLI::App* replay = app.add_subcommand("replay", "Re-run a recorded transcript deterministically");
    replay->add_option("--dataset", replay_dataset, "JSONL dataset path")->required();
    replay->add_option("--format", replay_format, "Dataset format");
    replay->add_option("--split", replay_split, "BigCodeBench prompt split");
    replay->add_option("--output", replay_output, "Run log path");
    add_common_options(replay, replay_opt);
    replay->get_option("--transcript")->required();

    try {
        apply_config_file(app, argc, argv);
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (run->parsed()) return cmd_run(run_opt, dataset, format, split, output_path);
        if (solve->parsed())
            return cmd_solve(solve_opt, solve_id, solve_description, solve_tests, solve_entry);
        if (analyze->parsed())
            return cmd_analyze(analyze_logs, analyze_table, analyze_total, analyze_fit,
                               analyze_pooled, analyze_out_dir, analyze_max_attempts);
        if (replay->parsed()) {
            replay_opt.backend_kind = "replay";
            replay_opt.record_transcript.clear();
            int rc = cmd_run(replay_opt, replay_dataset, replay_format, replay_split,
                             replay_output);
            if (rc != kExitOk) return rc;
            capsule::RunLog log = capsule::read_run_log(replay_output);
            for (const auto& outcome : log.outcomes) {
                if (outcome.setup_failure) {
                    std::cerr << "replay failed for " << outcome.problem_id << ": "
                              << *outcome.setup_failure << "\n";
                    return kExitRuntime;
                }
            }
            return kExitOk;
        }
    } catch (const capsule::DatasetError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const capsule::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
