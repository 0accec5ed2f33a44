#include "capsule/dataset.hpp"

#include <cctype>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "capsule/errors.hpp"
#include "capsule/pysrc.hpp"

namespace capsule {

using nlohmann::json;

std::string to_string(SourceFormat format) {
    switch (format) {
    case SourceFormat::humaneval: return "humaneval";
    case SourceFormat::mbpp: return "mbpp";
    case SourceFormat::bigcodebench_lite: return "bigcodebench_lite";
    case SourceFormat::custom: return "custom";
    }
    return "custom";
}

SourceFormat source_format_from_string(const std::string& name) {
    if (name == "humaneval") return SourceFormat::humaneval;
    if (name == "mbpp") return SourceFormat::mbpp;
    if (name == "bigcodebench_lite" || name == "bigcodebench") return SourceFormat::bigcodebench_lite;
    if (name == "custom") return SourceFormat::custom;
    throw DatasetError("unknown source format: " + name);
}

namespace {

[[noreturn]] void at_line(std::size_t line_no, const std::string& message) {
    throw DatasetError("line " + std::to_string(line_no) + ": " + message);
}

std::string require_string(const json& record, const char* field, std::size_t line_no) {
    auto it = record.find(field);
    if (it == record.end()) at_line(line_no, std::string("missing field '") + field + "'");
    if (it->is_string()) return it->get<std::string>();
    if (it->is_number_integer()) return std::to_string(it->get<long long>());
    at_line(line_no, std::string("field '") + field + "' is not a string");
}

Problem parse_record(const json& record, SourceFormat format, const LoadOptions& options,
                     std::size_t line_no) {
    Problem p;
    p.source_format = format;
    switch (format) {
    case SourceFormat::humaneval: {
        p.id = require_string(record, "task_id", line_no);
        p.description = require_string(record, "prompt", line_no);
        p.tests = {require_string(record, "test", line_no)};
        p.entry_point = require_string(record, "entry_point", line_no);
        if (p.entry_point->empty()) at_line(line_no, "empty entry_point");
        break;
    }
    case SourceFormat::mbpp: {
        p.id = require_string(record, "task_id", line_no);
        p.description = require_string(record, "text", line_no);
        auto it = record.find("test_list");
        if (it == record.end() || !it->is_array())
            at_line(line_no, "missing field 'test_list'");
        for (const auto& t : *it) {
            if (!t.is_string()) at_line(line_no, "test_list entry is not a string");
            p.tests.push_back(t.get<std::string>());
        }
        break;
    }
    case SourceFormat::bigcodebench_lite: {
        p.id = require_string(record, "task_id", line_no);
        const char* field =
            options.split == BigCodeBenchSplit::complete ? "complete_prompt" : "instruct_prompt";
        p.description = require_string(record, field, line_no);
        p.tests = {require_string(record, "test", line_no)};
        if (auto it = record.find("entry_point"); it != record.end() && it->is_string())
            p.entry_point = it->get<std::string>();
        break;
    }
    case SourceFormat::custom: {
        p.id = require_string(record, "id", line_no);
        p.description = require_string(record, "description", line_no);
        auto it = record.find("tests");
        if (it == record.end() || !it->is_array()) at_line(line_no, "missing field 'tests'");
        for (const auto& t : *it) {
            if (!t.is_string()) at_line(line_no, "tests entry is not a string");
            p.tests.push_back(t.get<std::string>());
        }
        if (auto e = record.find("entry_point"); e != record.end() && e->is_string())
            p.entry_point = e->get<std::string>();
        if (auto f = record.find("source_format"); f != record.end() && f->is_string())
            p.source_format = source_format_from_string(f->get<std::string>());
        break;
    }
    }
    if (p.id.empty()) at_line(line_no, "empty id");
    if (p.tests.empty()) at_line(line_no, "record has no tests");
    return p;
}

} // namespace

LoadResult load_problems(const std::filesystem::path& path, SourceFormat format,
                         const LoadOptions& options) {
    std::ifstream in(path);
    if (!in) throw DatasetError("cannot open dataset file: " + path.string());

    LoadResult result;
    std::set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (pysrc::trim(line).empty()) continue;
        json record;
        try {
            record = json::parse(line);
        } catch (const json::exception& e) {
            at_line(line_no, std::string("invalid JSON: ") + e.what());
        }
        if (!record.is_object()) at_line(line_no, "record is not a JSON object");
        Problem p = parse_record(record, format, options, line_no);
        if (!seen.insert(p.id).second) at_line(line_no, "duplicate id: " + p.id);
        result.problems.push_back(std::move(p));
    }
    if (result.problems.empty())
        result.warnings.push_back("no records loaded from " + path.string());
    return result;
}

void save_problems(const std::filesystem::path& path, const std::vector<Problem>& problems) {
    std::ofstream out(path);
    if (!out) throw DatasetError("cannot write dataset file: " + path.string());
    for (const auto& p : problems) {
        json record{
            {"id", p.id},
            {"description", p.description},
            {"tests", p.tests},
            {"source_format", to_string(p.source_format)},
        };
        if (p.entry_point) record["entry_point"] = *p.entry_point;
        out << record.dump() << '\n';
    }
}

TestHarnessText assemble_test_harness(const Problem& problem) {
    std::string joined;
    for (std::size_t i = 0; i < problem.tests.size(); ++i) {
        if (i) joined += '\n';
        joined += problem.tests[i];
    }
    auto rstrip = [](std::string s) {
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
        return s;
    };
    switch (problem.source_format) {
    case SourceFormat::humaneval:
        // The dataset's test field defines check(candidate); run it against
        // the entry point.
        return {rstrip(joined) + "\n\ncheck(" + problem.entry_point.value_or("") + ")"};
    case SourceFormat::bigcodebench_lite:
        if (joined.find("unittest") != std::string::npos &&
            joined.find("unittest.main(") == std::string::npos)
            return {rstrip(joined) + "\n\nunittest.main()"};
        return {joined};
    case SourceFormat::mbpp:
    case SourceFormat::custom:
        return {joined};
    }
    return {joined};
}

} // namespace capsule
