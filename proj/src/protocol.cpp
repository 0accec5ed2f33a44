#include "capsule/protocol.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "capsule/errors.hpp"
#include "capsule/pysrc.hpp"

namespace capsule {

namespace {

// Default system prompts. Whitespace matters: these are compared verbatim and
// overriding files must reproduce them exactly to get identical behavior.
const char kGenerationTemplate[] =
    "You are an experienced Python developer. Your task is to complete the function based on the provided function signature and description\n"
    "    - Analyze the description and provide a step by step reasoning on how to solve the problem.\n"
    "    - Maintain the function signature: Do not alter/modify the function signature.\n"
    "    - Avoid example calls: Do not include any example call in your response.\n"
    "    - If external libraries are needed, add a '### Requirements' Section listing them separated by ','. e.g. pandas, pyhton-dotenv ). If no external libraries are needed, add 'None'.\n"
    "    - Import all required libraries and complete the function in a '### Code' Section, enclosed with triple backticks.\n"
    " \n"
    "Example Response Structure-\n"
    "### Step-by-step reasoning\n"
    "$reasoning\n"
    " \n"
    "### Requirements\n"
    "$external_libraries\n"
    " \n"
    "### Code\n"
    "```\n"
    "$code\n"
    "``` \n";

const char kFixTemplate[] =
    "You are an experienced Python developer. \n"
    "    - Your previous solution resulted an error.\n"
    "    - Error message from a python compiler and Conversation history has been added for your reference.\n"
    "    - Analyze the description and provide a step by step reasoning on how to solve the problem.\n"
    "    - Maintain the function signature: Do not alter/modify the function signature.\n"
    "    - Avoid example calls: Do not include any example call in your response.\n"
    "    - If external libraries are needed, add a '### Requirements' Section listing them separated by ','. e.g. pandas, pyhton-dotenv ). If no external libraries are needed, add 'None'.\n"
    "    - Import all required libraries and complete the function in a '### Code' Section, enclosed with triple backticks.\n"
    "\n"
    "Example Response Structure-\n"
    "### Step-by-step reasoning\n"
    "$reasoning\n"
    "\n"
    "### Requirements\n"
    "$external_libraries\n"
    "\n"
    "### Code\n"
    "```\n"
    "$code\n"
    "``` \n";

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) {
            lines.push_back(text.substr(pos));
            break;
        }
        lines.push_back(text.substr(pos, nl - pos));
        pos = nl + 1;
    }
    // a trailing newline is not an extra (empty) line
    if (!text.empty() && text.back() == '\n' && !lines.empty() && lines.back().empty())
        lines.pop_back();
    return lines;
}

bool starts_with(std::string_view s, std::string_view prefix) {
    return s.substr(0, prefix.size()) == prefix;
}

bool is_fence(std::string_view line) { return starts_with(pysrc::trim(line), "```"); }

bool is_heading(std::string_view line) { return starts_with(pysrc::trim(line), "###"); }

// Contents of the first fenced block at or after line `from`. Returns false
// when no opening fence exists. A missing closing fence takes the rest.
bool fenced_block(const std::vector<std::string_view>& lines, std::size_t from, std::string& out) {
    std::size_t open = from;
    while (open < lines.size() && !is_fence(lines[open])) ++open;
    if (open >= lines.size()) return false;
    std::string body;
    std::size_t i = open + 1;
    for (; i < lines.size() && !is_fence(lines[i]); ++i) {
        body.append(lines[i]);
        body.push_back('\n');
    }
    if (!body.empty()) body.pop_back(); // no trailing newline
    out = std::move(body);
    return true;
}

std::string section_text(const std::vector<std::string_view>& lines, std::size_t heading,
                         std::size_t* end = nullptr) {
    std::string body;
    std::size_t i = heading + 1;
    for (; i < lines.size() && !is_heading(lines[i]) && !is_fence(lines[i]); ++i) {
        body.append(lines[i]);
        body.push_back('\n');
    }
    if (end) *end = i;
    return std::string(pysrc::trim(body));
}

bool valid_package_name(std::string_view token) {
    if (token.empty()) return false;
    for (char c : token)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '-'))
            return false;
    return true;
}

std::string ensure_trailing_newline(std::string s) {
    if (s.empty() || s.back() != '\n') s.push_back('\n');
    return s;
}

} // namespace

PromptTemplates PromptTemplates::defaults() { return {kGenerationTemplate, kFixTemplate}; }

std::string PromptTemplates::load_template(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open prompt template: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

PromptBundle build_generation_prompt(const PromptTemplates& templates, const Problem& problem,
                                     const std::optional<SignatureHint>& hint) {
    PromptBundle bundle;
    bundle.mode = PromptMode::generation;
    bundle.system_text = templates.generation;
    bundle.user_text = problem.description;
    if (hint) {
        bundle.user_text += "\n\n";
        bundle.user_text += hint->rendered_hint;
    }
    return bundle;
}

PromptBundle build_fix_prompt(const PromptTemplates& templates, const Problem& problem,
                              const std::string& last_code, const RefinedError& refined) {
    PromptBundle bundle;
    bundle.mode = PromptMode::fix;
    bundle.system_text = templates.fix;
    // Exactly one problem-solution pair: the original description, the most
    // recent code, the refined error. Nothing from earlier attempts.
    std::string user = problem.description;
    user += "\n\n### Previous solution\n```\n";
    user += ensure_trailing_newline(last_code);
    user += "```\n\n### Error message\n";
    user += refined.text();
    bundle.user_text = std::move(user);
    return bundle;
}

ModelResponse parse_response(const std::string& raw) {
    ModelResponse response;
    response.raw = raw;
    auto lines = split_lines(raw);

    std::size_t code_heading = lines.size();
    std::size_t requirements_heading = lines.size();
    std::size_t reasoning_heading = lines.size();
    for (std::size_t i = 0; i < lines.size(); ++i) {
        std::string_view t = pysrc::trim(lines[i]);
        if (code_heading == lines.size() && starts_with(t, "### Code")) code_heading = i;
        if (requirements_heading == lines.size() && starts_with(t, "### Requirements"))
            requirements_heading = i;
        if (reasoning_heading == lines.size() && starts_with(t, "### Step-by-step reasoning"))
            reasoning_heading = i;
    }

    std::string code;
    bool found = code_heading < lines.size() && fenced_block(lines, code_heading + 1, code);
    if (!found || pysrc::trim(code).empty()) {
        // lenient fallback: real completions drift from the response skeleton
        found = fenced_block(lines, 0, code);
    }
    if (!found || pysrc::trim(code).empty())
        throw MissingCodeSection("completion contains no usable code block");
    response.code = code;

    if (requirements_heading < lines.size()) {
        std::string section = section_text(lines, requirements_heading);
        std::string lowered = section;
        for (char& c : lowered) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        if (!section.empty() && lowered != "none" && lowered != "none.") {
            std::string normalized = section;
            for (char& c : normalized)
                if (c == '\n') c = ',';
            std::istringstream ss(normalized);
            std::string token;
            while (std::getline(ss, token, ',')) {
                std::string_view t = pysrc::trim(token);
                while (!t.empty() && (t.front() == '`' || t.front() == '\'' || t.front() == '"'))
                    t.remove_prefix(1);
                while (!t.empty() && (t.back() == '`' || t.back() == '\'' || t.back() == '"'))
                    t.remove_suffix(1);
                if (t.empty() || t == "None" || t == "none") continue;
                if (valid_package_name(t)) {
                    response.requirements.emplace_back(t);
                } else {
                    response.warnings.push_back("dropped invalid requirement token: " +
                                                std::string(t));
                }
            }
        }
    }

    if (reasoning_heading < lines.size()) {
        std::string reasoning = section_text(lines, reasoning_heading);
        if (!reasoning.empty()) response.reasoning = reasoning;
    }
    return response;
}

} // namespace capsule
