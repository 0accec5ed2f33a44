#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "capsule/problem.hpp"
#include "capsule/sanitizer.hpp"

namespace capsule {

enum class ExecStatus { passed, failed, timeout, setup_error };

std::string to_string(ExecStatus status);
ExecStatus exec_status_from_string(const std::string& name);

struct ExecutionResult {
    ExecStatus status = ExecStatus::setup_error;
    int exit_code = -1;
    std::string stdout_text; // capped
    std::string stderr_text; // capped
    double duration_s = 0.0;
};

/// Materialized files for one execution: main file (code + blank line + test
/// harness) and a requirements file, one package per line.
struct Workspace {
    std::filesystem::path root;
    std::filesystem::path main_file;
    std::filesystem::path requirements_file;
    std::string problem_id;
    int attempt_index = 0;
};

enum class ExecBackendKind { subprocess, container };

ExecBackendKind exec_backend_from_string(const std::string& name);

struct ExecutorConfig {
    std::filesystem::path work_root; // workspaces and the install cache live here
    ExecBackendKind backend = ExecBackendKind::subprocess;
    double timeout_s = 10.0;
    bool keep_artifacts = false;
    std::size_t stream_cap = 64 * 1024;

    // subprocess backend
    std::string interpreter = "python3";
    std::vector<std::string> pip_argv; // default: {interpreter, -m, pip, install, --no-cache-dir, --quiet}
    double install_timeout_s = 180.0;

    // container backend
    std::string engine_socket = "/var/run/docker.sock";
    std::string image = "python:3.11-slim";
    std::optional<long long> memory_limit_bytes; // passthrough, untested feature
    std::optional<double> cpus;                  // passthrough
};

/// The executor agent's mechanical core: write the workspace, run it in an
/// isolated environment with a hard timeout, report pass/fail with captured
/// output.
///
/// Failure taxonomy: infrastructure problems (engine unreachable, filesystem
/// failure) throw SandboxUnavailable and never consume a debugging attempt;
/// dependency-installation failures return status=setup_error with the
/// installer's stderr, because the generated code chose the dependencies.
class SandboxExecutor {
public:
    explicit SandboxExecutor(ExecutorConfig config);

    Workspace prepare_workspace(const SanitizedCode& code, const TestHarnessText& harness,
                                const std::vector<std::string>& requirements,
                                const std::string& problem_id, int attempt_index);

    ExecutionResult execute(const Workspace& workspace, double timeout_s);
    ExecutionResult execute(const Workspace& workspace) { return execute(workspace, config_.timeout_s); }

    /// Remove the workspace directory unless keep-artifacts is set. Idempotent;
    /// failures are swallowed.
    void cleanup(const Workspace& workspace);

    const ExecutorConfig& config() const { return config_; }

    /// Cooperative cancellation: in-flight executions are killed when set.
    void set_cancel_flag(std::atomic<bool>* flag) { cancel_ = flag; }

private:
    ExecutionResult run_subprocess(const Workspace& workspace, double timeout_s);
    ExecutionResult run_container(const Workspace& workspace, double timeout_s);

    /// Install the requirements set into a cached environment keyed by the
    /// file's content digest. Returns the site directory, an empty path when
    /// there is nothing to install, or an ExecutionResult on installer failure.
    struct InstallOutcome {
        std::filesystem::path site_dir;
        std::optional<ExecutionResult> failure;
    };
    InstallOutcome ensure_requirements(const Workspace& workspace);

    ExecutorConfig config_;
    std::mutex env_cache_mutex_;
    std::map<std::string, std::filesystem::path> env_cache_; // requirements digest -> site dir
    std::atomic<bool>* cancel_ = nullptr;
};

/// Demultiplex the engine's log stream (8-byte frame headers) into
/// stdout/stderr. Exposed for tests.
void demux_engine_logs(const std::string& raw, std::string& out, std::string& err);

} // namespace capsule
