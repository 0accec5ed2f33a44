#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "capsule/orchestrator.hpp"

namespace capsule {

nlohmann::json to_json(const ExecutionResult& result);
ExecutionResult execution_result_from_json(const nlohmann::json& j);

nlohmann::json to_json(const RefinedError& refined);
RefinedError refined_error_from_json(const nlohmann::json& j);

nlohmann::json to_json(const AttemptRecord& record);
AttemptRecord attempt_record_from_json(const nlohmann::json& j);

nlohmann::json to_json(const SolveOutcome& outcome);
SolveOutcome solve_outcome_from_json(const nlohmann::json& j);

/// JSONL: first line {"type":"config",...}, then one {"type":"outcome",...}
/// per problem in input order.
void write_run_log(const std::filesystem::path& path, const RunLog& log);
RunLog read_run_log(const std::filesystem::path& path);

} // namespace capsule
