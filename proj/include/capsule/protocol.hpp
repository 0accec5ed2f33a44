#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "capsule/error_handler.hpp"
#include "capsule/problem.hpp"
#include "capsule/signature.hpp"

namespace capsule {

enum class PromptMode { generation, fix };

struct PromptBundle {
    PromptMode mode = PromptMode::generation;
    std::string system_text;
    std::string user_text;
};

/// Parsed sections of a completion.
struct ModelResponse {
    std::string raw;
    std::optional<std::string> reasoning;
    std::vector<std::string> requirements; // empty when the section says None
    std::string code;
    std::vector<std::string> warnings; // dropped requirement tokens etc.
};

/// Generation- and fix-mode system prompts. Defaults are embedded; either can
/// be overridden from a text file.
struct PromptTemplates {
    std::string generation;
    std::string fix;

    static PromptTemplates defaults();
    static std::string load_template(const std::filesystem::path& path);
};

/// System text is the generation template; user text is the problem
/// description followed by the rendered hint when one is given. Test expected
/// outputs are never included.
PromptBundle build_generation_prompt(const PromptTemplates& templates, const Problem& problem,
                                     const std::optional<SignatureHint>& hint);

/// System text is the fix template; user text holds, in order, the original
/// description, the most recent code, and the refined error — exactly one
/// problem-solution pair regardless of attempt index.
PromptBundle build_fix_prompt(const PromptTemplates& templates, const Problem& problem,
                              const std::string& last_code, const RefinedError& refined);

/// Extract code (first fenced block after the '### Code' heading, fence
/// language tag stripped; falls back to the first fenced block anywhere),
/// requirements (comma-split tokens, literal None meaning empty, tokens not
/// matching [A-Za-z0-9._-]+ dropped with a warning), and reasoning. Throws
/// MissingCodeSection when no fenced block exists.
ModelResponse parse_response(const std::string& raw);

} // namespace capsule
