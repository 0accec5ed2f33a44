#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>

#include "capsule/executor.hpp"

namespace capsule {

enum class ErrorCategory {
    assertion,
    syntax,
    name,
    type,
    value,
    index_key,
    import_missing,
    recursion,
    timeout,
    setup,
    other,
};

std::string to_string(ErrorCategory category);
ErrorCategory error_category_from_string(const std::string& name);

/// Concise, categorized, budgeted feedback derived from a failed execution.
struct RefinedError {
    ErrorCategory category = ErrorCategory::other;
    std::string filtered_traceback;
    std::string guidance;
    bool truncated = false;        // head/tail elision was applied
    std::size_t original_length = 0; // bytes of raw stderr seen

    /// Traceback and guidance joined for prompt embedding.
    std::string text() const;
};

/// category -> one guidance sentence. The timeout entry may contain the
/// placeholder {timeout}, replaced with the configured limit in seconds.
using GuidanceTable = std::map<ErrorCategory, std::string>;

GuidanceTable default_guidance();
GuidanceTable load_guidance(const std::filesystem::path& path); // JSON object, defaults fill gaps

struct ErrorHandlerConfig {
    std::size_t budget = 2000; // characters, traceback + guidance combined
    double timeout_s = 10.0;   // named in the timeout guidance
    std::string main_file_name = "main.py";
};

class ErrorHandler {
public:
    explicit ErrorHandler(ErrorHandlerConfig config = {}, GuidanceTable table = default_guidance());

    /// Category from status first (timeout, setup), else from the final
    /// exception name in stderr. Never looks at stdout.
    ErrorCategory classify(const ExecutionResult& result) const;

    /// Drop traceback frames outside the main file, collapse repeated frame
    /// cycles to one occurrence plus a repeat count, append the category's
    /// guidance, and elide the middle when still over budget.
    RefinedError refine(const ExecutionResult& result) const;

    const ErrorHandlerConfig& config() const { return config_; }

private:
    ErrorHandlerConfig config_;
    GuidanceTable table_;
};

} // namespace capsule
