#include "capsule/runlog.hpp"

#include <fstream>

#include "capsule/errors.hpp"

namespace capsule {

using nlohmann::json;

json to_json(const ExecutionResult& result) {
    return {
        {"status", to_string(result.status)},
        {"exit_code", result.exit_code},
        {"stdout", result.stdout_text},
        {"stderr", result.stderr_text},
        {"duration_s", result.duration_s},
    };
}

ExecutionResult execution_result_from_json(const json& j) {
    ExecutionResult result;
    result.status = exec_status_from_string(j.at("status").get<std::string>());
    result.exit_code = j.at("exit_code").get<int>();
    result.stdout_text = j.at("stdout").get<std::string>();
    result.stderr_text = j.at("stderr").get<std::string>();
    result.duration_s = j.at("duration_s").get<double>();
    return result;
}

json to_json(const RefinedError& refined) {
    return {
        {"category", to_string(refined.category)},
        {"filtered_traceback", refined.filtered_traceback},
        {"guidance", refined.guidance},
        {"truncated", refined.truncated},
        {"original_length", refined.original_length},
    };
}

RefinedError refined_error_from_json(const json& j) {
    RefinedError refined;
    refined.category = error_category_from_string(j.at("category").get<std::string>());
    refined.filtered_traceback = j.at("filtered_traceback").get<std::string>();
    refined.guidance = j.at("guidance").get<std::string>();
    refined.truncated = j.at("truncated").get<bool>();
    refined.original_length = j.at("original_length").get<std::size_t>();
    return refined;
}

json to_json(const AttemptRecord& record) {
    json j{
        {"index", record.index},
        {"prompt_tokens", record.prompt_tokens},
        {"completion_tokens", record.completion_tokens},
        {"code_digest", record.code_digest},
        {"execution", to_json(record.execution)},
    };
    if (record.refined) j["refined"] = to_json(*record.refined);
    return j;
}

AttemptRecord attempt_record_from_json(const json& j) {
    AttemptRecord record;
    record.index = j.at("index").get<int>();
    record.prompt_tokens = j.at("prompt_tokens").get<long>();
    record.completion_tokens = j.at("completion_tokens").get<long>();
    record.code_digest = j.at("code_digest").get<std::string>();
    record.execution = execution_result_from_json(j.at("execution"));
    if (j.contains("refined")) record.refined = refined_error_from_json(j.at("refined"));
    return record;
}

json to_json(const SolveOutcome& outcome) {
    json attempts = json::array();
    for (const auto& a : outcome.attempts) attempts.push_back(to_json(a));
    json j{
        {"problem_id", outcome.problem_id},
        {"solved", outcome.solved},
        {"llm_calls", outcome.llm_calls},
        {"wall_time_s", outcome.wall_time_s},
        {"attempts", std::move(attempts)},
    };
    if (outcome.setup_failure) j["setup_failure"] = *outcome.setup_failure;
    if (!outcome.final_code.empty()) j["final_code"] = outcome.final_code;
    return j;
}

SolveOutcome solve_outcome_from_json(const json& j) {
    SolveOutcome outcome;
    outcome.problem_id = j.at("problem_id").get<std::string>();
    outcome.solved = j.at("solved").get<bool>();
    outcome.llm_calls = j.at("llm_calls").get<int>();
    outcome.wall_time_s = j.at("wall_time_s").get<double>();
    for (const auto& a : j.at("attempts")) outcome.attempts.push_back(attempt_record_from_json(a));
    if (j.contains("setup_failure")) outcome.setup_failure = j.at("setup_failure").get<std::string>();
    if (j.contains("final_code")) outcome.final_code = j.at("final_code").get<std::string>();
    return outcome;
}

void write_run_log(const std::filesystem::path& path, const RunLog& log) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write run log: " + path.string());
    out << json{{"type", "config"}, {"config", log.config_snapshot}}.dump() << '\n';
    for (const auto& outcome : log.outcomes) {
        json j = to_json(outcome);
        j["type"] = "outcome";
        out << j.dump() << '\n';
    }
}

RunLog read_run_log(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open run log: " + path.string());
    RunLog log;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw Error("run log line " + std::to_string(line_no) + ": " + e.what());
        }
        std::string type = j.value("type", "outcome");
        if (type == "config")
            log.config_snapshot = j.value("config", json::object());
        else
            log.outcomes.push_back(solve_outcome_from_json(j));
    }
    return log;
}

} // namespace capsule
