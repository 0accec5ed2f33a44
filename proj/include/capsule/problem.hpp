#pragma once

#include <optional>
#include <string>
#include <vector>

namespace capsule {

enum class SourceFormat { humaneval, mbpp, bigcodebench_lite, custom };

std::string to_string(SourceFormat format);
SourceFormat source_format_from_string(const std::string& name);

/// One benchmark task: natural-language description plus executable test
/// statements. `entry_point` is the function name the tests exercise, when
/// the source dataset provides one.
struct Problem {
    std::string id;
    std::string description;
    std::vector<std::string> tests;
    std::optional<std::string> entry_point;
    SourceFormat source_format = SourceFormat::custom;

    bool operator==(const Problem&) const = default;
};

/// Test statements appended to the main file after the solution code.
struct TestHarnessText {
    std::string body;
};

} // namespace capsule
