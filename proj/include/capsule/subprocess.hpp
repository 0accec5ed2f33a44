#pragma once

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace capsule {

struct ProcessOptions {
    std::vector<std::string> argv; // argv[0] resolved through PATH
    std::filesystem::path cwd;
    std::vector<std::pair<std::string, std::string>> env; // complete child environment
    double timeout_s = 10.0;
    std::size_t stream_cap = 64 * 1024; // per stream; overflow keeps head and tail
    std::atomic<bool>* cancel = nullptr;
};

struct ProcessResult {
    bool spawn_failed = false;
    std::string spawn_error;
    bool timed_out = false;
    bool cancelled = false;
    int exit_code = -1; // 128+signo when killed by a signal
    std::string out;
    std::string err;
    double duration_s = 0.0;
};

/// Run a child process in its own process group, capture both streams with a
/// cap, and kill the whole group at the deadline.
ProcessResult run_process(const ProcessOptions& options);

} // namespace capsule
