#include "capsule/orchestrator.hpp"

#include <chrono>
#include <mutex>
#include <thread>

#include "capsule/dataset.hpp"
#include "capsule/digest.hpp"
#include "capsule/errors.hpp"
#include "capsule/sanitizer.hpp"

namespace capsule {

namespace {

RefinedError missing_code_error() {
    RefinedError refined;
    refined.category = ErrorCategory::other;
    refined.guidance =
        "Your response contained no code block. Provide your complete solution in a '### Code' "
        "section enclosed with triple backticks.";
    return refined;
}

ExecutionResult missing_code_result() {
    ExecutionResult result;
    result.status = ExecStatus::failed;
    result.exit_code = -1;
    result.stderr_text = "completion contained no usable code block";
    result.duration_s = 0.0;
    return result;
}

} // namespace

HintMode hint_mode_from_string(const std::string& name) {
    if (name == "auto") return HintMode::auto_;
    if (name == "always") return HintMode::always;
    if (name == "never") return HintMode::never;
    throw Error("unknown hint mode: " + name + " (expected auto|always|never)");
}

std::string to_string(HintMode mode) {
    switch (mode) {
    case HintMode::auto_: return "auto";
    case HintMode::always: return "always";
    case HintMode::never: return "never";
    }
    return "auto";
}

Orchestrator::Orchestrator(CompletionBackend& backend, SandboxExecutor& executor,
                           PromptTemplates templates, SolveConfig config, GuidanceTable guidance)
    : backend_(backend), executor_(executor), templates_(std::move(templates)),
      config_(config),
      error_handler_(ErrorHandlerConfig{config.error_budget, config.timeout_s, "main.py"},
                     std::move(guidance)) {}

bool Orchestrator::should_hint(const Problem& problem) const {
    switch (config_.hint_mode) {
    case HintMode::always: return true;
    case HintMode::never: return false;
    case HintMode::auto_:
        // inject only where the dataset provides no signature of its own
        return problem.source_format == SourceFormat::mbpp ||
               problem.source_format == SourceFormat::custom;
    }
    return false;
}

SolveOutcome Orchestrator::solve(const Problem& problem) {
    const auto start = std::chrono::steady_clock::now();
    SolveOutcome outcome;
    outcome.problem_id = problem.id;

    std::optional<SignatureHint> hint;
    if (should_hint(problem)) {
        try {
            hint = infer_signature(problem);
        } catch (const AssertParseError&) {
            // degraded mode: generation proceeds without a hint
        }
    }

    const TestHarnessText harness = assemble_test_harness(problem);
    std::string last_code;
    std::optional<RefinedError> last_refined;

    for (int index = 0; index <= config_.max_attempts; ++index) {
        if (cancel_ && cancel_->load()) {
            outcome.setup_failure = "cancelled";
            break;
        }
        // fix mode pairs the most recent code with its refined error; without
        // prior code (unparseable first completion) generation mode is reused
        PromptBundle bundle =
            (index == 0 || last_code.empty() || !last_refined)
                ? build_generation_prompt(templates_, problem, hint)
                : build_fix_prompt(templates_, problem, last_code, *last_refined);

        CompletionRequest request;
        request.system_text = bundle.system_text;
        request.user_text = bundle.user_text;
        request.model_name = config_.model_name;
        request.temperature = config_.temperature;
        request.max_output_tokens = config_.max_output_tokens;
        request.problem_id = problem.id;

        CompletionResult completion;
        try {
            completion = backend_.complete(request);
        } catch (const Error& e) {
            // backend failure is infrastructure, not a debugging attempt
            outcome.setup_failure = e.what();
            break;
        }

        AttemptRecord record;
        record.index = index;
        record.prompt_tokens = completion.prompt_tokens;
        record.completion_tokens = completion.completion_tokens;

        bool code_missing = false;
        std::string sanitized;
        try {
            ModelResponse response = parse_response(completion.text);
            SanitizedCode clean = strip_example_calls(response.code);
            sanitized = clean.code;
            record.code_digest = sha256_hex(clean.code);
            Workspace workspace =
                executor_.prepare_workspace(clean, harness, response.requirements, problem.id,
                                            index);
            record.execution = executor_.execute(workspace, config_.timeout_s);
            if (config_.cleanup_workspaces) executor_.cleanup(workspace);
        } catch (const MissingCodeSection&) {
            code_missing = true;
            record.execution = missing_code_result();
        } catch (const SandboxUnavailable& e) {
            record.execution.status = ExecStatus::setup_error;
            record.execution.stderr_text = e.what();
            outcome.setup_failure = e.what();
            outcome.attempts.push_back(std::move(record));
            break;
        }

        if (record.execution.status == ExecStatus::passed) {
            outcome.solved = true;
            outcome.final_code = sanitized;
            outcome.attempts.push_back(std::move(record));
            break;
        }

        if (index < config_.max_attempts) {
            RefinedError refined =
                code_missing ? missing_code_error() : error_handler_.refine(record.execution);
            record.refined = refined;
            last_refined = std::move(refined);
            if (!sanitized.empty()) last_code = sanitized;
        }
        outcome.attempts.push_back(std::move(record));
    }

    outcome.llm_calls = static_cast<int>(outcome.attempts.size());
    outcome.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return outcome;
}

RunLog Orchestrator::run_suite(const std::vector<Problem>& problems,
                               const std::function<void(const SolveOutcome&)>& on_complete) {
    RunLog log;
    log.config_snapshot = config_snapshot();
    log.outcomes.resize(problems.size());

    std::atomic<std::size_t> next{0};
    std::mutex complete_mutex;
    auto worker = [&] {
        while (true) {
            std::size_t k = next.fetch_add(1);
            if (k >= problems.size()) break;
            SolveOutcome outcome;
            if (cancel_ && cancel_->load()) {
                outcome.problem_id = problems[k].id;
                outcome.setup_failure = "cancelled";
            } else {
                outcome = solve(problems[k]);
            }
            log.outcomes[k] = outcome;
            if (on_complete) {
                std::lock_guard lock(complete_mutex);
                on_complete(outcome);
            }
        }
    };

    int workers = std::max(1, config_.workers);
    std::vector<std::thread> pool;
    for (int i = 1; i < workers; ++i) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    return log;
}

nlohmann::json Orchestrator::config_snapshot() const {
    return {
        {"max_attempts", config_.max_attempts},
        {"timeout_s", config_.timeout_s},
        {"error_budget", config_.error_budget},
        {"model_name", config_.model_name},
        {"temperature", config_.temperature},
        {"max_output_tokens", config_.max_output_tokens},
        {"hint_mode", to_string(config_.hint_mode)},
        {"workers", config_.workers},
        {"exec_backend",
         executor_.config().backend == ExecBackendKind::container ? "container" : "subprocess"},
    };
}

} // namespace capsule
