#pragma once

#include <atomic>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "capsule/backend.hpp"
#include "capsule/error_handler.hpp"
#include "capsule/executor.hpp"
#include "capsule/problem.hpp"
#include "capsule/protocol.hpp"

namespace capsule {

enum class HintMode { auto_, always, never };

HintMode hint_mode_from_string(const std::string& name);
std::string to_string(HintMode mode);

/// One completion + execution round. Index 0 is the initial generation;
/// 1..max_attempts are fix-mode iterations. `refined` is present exactly when
/// the attempt failed and a further attempt follows.
struct AttemptRecord {
    int index = 0;
    long prompt_tokens = 0;
    long completion_tokens = 0;
    std::string code_digest; // sha256 of the sanitized code; empty when no code parsed
    ExecutionResult execution;
    std::optional<RefinedError> refined;
};

struct SolveOutcome {
    std::string problem_id;
    bool solved = false;
    std::vector<AttemptRecord> attempts;
    int llm_calls = 0; // == attempts.size() <= max_attempts + 1
    double wall_time_s = 0.0;
    /// Set when infrastructure failed (backend or engine unreachable); such
    /// problems are aborted without consuming further attempts.
    std::optional<std::string> setup_failure;
    /// Final accepted code when solved.
    std::string final_code;
};

struct SolveConfig {
    int max_attempts = 5; // fix-mode iterations after the initial generation
    double timeout_s = 10.0;
    std::size_t error_budget = 2000;
    std::string model_name = "mock";
    double temperature = 0.0;
    int max_output_tokens = 2048;
    HintMode hint_mode = HintMode::auto_;
    int workers = 1;
    bool cleanup_workspaces = true;
};

struct RunLog {
    nlohmann::json config_snapshot;
    std::vector<SolveOutcome> outcomes; // input order, regardless of completion order
};

/// Drives one problem through generation mode, execution, and up to
/// max_attempts fix-mode iterations, holding only the most recent
/// problem-solution pair.
class Orchestrator {
public:
    Orchestrator(CompletionBackend& backend, SandboxExecutor& executor,
                 PromptTemplates templates, SolveConfig config,
                 GuidanceTable guidance = default_guidance());

    SolveOutcome solve(const Problem& problem);

    /// Solve all problems with a bounded worker pool. `on_complete` fires once
    /// per finished problem (serialized, completion order) for append-only
    /// logging; the returned log is in input order.
    RunLog run_suite(const std::vector<Problem>& problems,
                     const std::function<void(const SolveOutcome&)>& on_complete = {});

    void set_cancel_flag(std::atomic<bool>* flag) { cancel_ = flag; }

    nlohmann::json config_snapshot() const;

private:
    bool should_hint(const Problem& problem) const;

    CompletionBackend& backend_;
    SandboxExecutor& executor_;
    PromptTemplates templates_;
    SolveConfig config_;
    ErrorHandler error_handler_;
    std::atomic<bool>* cancel_ = nullptr;
};

} // namespace capsule
