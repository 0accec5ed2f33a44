#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "capsule/problem.hpp"

namespace capsule {

enum class BigCodeBenchSplit { complete, instruct };

struct LoadOptions {
    BigCodeBenchSplit split = BigCodeBenchSplit::complete;
};

struct LoadResult {
    std::vector<Problem> problems;
    std::vector<std::string> warnings;
};

/// Load benchmark problems from a JSONL file, one record per line.
///
/// Field mapping per format:
///   humaneval         {task_id, prompt, test, entry_point}
///   mbpp              {task_id, text, test_list[]}
///   bigcodebench_lite {task_id, complete_prompt | instruct_prompt, test, entry_point?}
///   custom            {id, description, tests[], entry_point?}
///
/// Malformed lines raise DatasetError naming the line number; they are never
/// silently skipped. An empty file yields an empty list plus a warning.
LoadResult load_problems(const std::filesystem::path& path, SourceFormat format,
                         const LoadOptions& options = {});

/// Serialize problems as custom-format JSONL. load_problems(path, custom) of
/// the written file round-trips to identical Problem values.
void save_problems(const std::filesystem::path& path, const std::vector<Problem>& problems);

/// Assemble the per-problem test text appended to the main file.
/// mbpp/custom: test statements joined by newlines, input order preserved.
/// humaneval: the dataset's check-function text followed by a call of the
/// check function on the entry point.
TestHarnessText assemble_test_harness(const Problem& problem);

} // namespace capsule
