#pragma once

#include <cstddef>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace capsule {

/// Result of stripping example invocations from generated code.
struct SanitizedCode {
    std::string code;
    /// (first_line, last_line) physical spans removed, with the statement text.
    struct Removal {
        std::size_t first_line = 0;
        std::size_t last_line = 0;
        std::string statement;
    };
    std::vector<Removal> removed;
    std::set<std::string> defined_names;
    /// Assignments whose right side calls a defined name; preserved but logged.
    std::vector<std::string> suspicious;
    /// Set when the input could not be scanned and was returned unchanged.
    bool warned = false;
};

/// Names bound by top-level def / async def / class statements. Nested
/// definitions and names appearing inside strings are excluded.
std::set<std::string> scan_definitions(std::string_view code);

/// Remove top-level expression statements that invoke a defined name
/// (directly or wrapped in print) and top-level __main__ guard blocks.
/// Imports, assignments, definitions and all nested code are preserved
/// byte-identically; the operation is idempotent.
SanitizedCode strip_example_calls(std::string_view code);

} // namespace capsule
