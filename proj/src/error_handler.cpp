#include "capsule/error_handler.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "capsule/errors.hpp"
#include "capsule/pysrc.hpp"

namespace capsule {

namespace {

struct CategoryName {
    ErrorCategory category;
    const char* name;
};

constexpr CategoryName kCategoryNames[] = {
    {ErrorCategory::assertion, "assertion"},
    {ErrorCategory::syntax, "syntax"},
    {ErrorCategory::name, "name"},
    {ErrorCategory::type, "type"},
    {ErrorCategory::value, "value"},
    {ErrorCategory::index_key, "index_key"},
    {ErrorCategory::import_missing, "import_missing"},
    {ErrorCategory::recursion, "recursion"},
    {ErrorCategory::timeout, "timeout"},
    {ErrorCategory::setup, "setup"},
    {ErrorCategory::other, "other"},
};

std::string format_seconds(double s) {
    if (s == std::floor(s) && s >= 0 && s < 1e9)
        return std::to_string(static_cast<long long>(s));
    std::ostringstream out;
    out << s;
    return out.str();
}

std::vector<std::string> split_lines(std::string_view text) {
    std::vector<std::string> lines;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) {
            lines.emplace_back(text.substr(pos));
            break;
        }
        lines.emplace_back(text.substr(pos, nl - pos));
        pos = nl + 1;
    }
    while (!lines.empty() && pysrc::trim(lines.back()).empty()) lines.pop_back();
    return lines;
}

// Exception name from the final non-empty stderr line: "Name: message" or a
// bare "Name", possibly dotted. Returns the last dotted component.
std::string final_exception_name(const std::string& stderr_text) {
    auto lines = split_lines(stderr_text);
    for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
        std::string_view line = pysrc::trim(*it);
        if (line.empty()) continue;
        std::string_view head = line.substr(0, line.find(':'));
        head = pysrc::trim(head);
        if (head.empty()) return {};
        for (char c : head)
            if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.')) return {};
        if (std::isdigit(static_cast<unsigned char>(head[0]))) return {};
        std::size_t dot = head.rfind('.');
        if (dot != std::string_view::npos) head = head.substr(dot + 1);
        return std::string(head);
    }
    return {};
}

// "  File "<path>", line N[, in f]" — the start of one traceback frame.
bool parse_frame_header(const std::string& line, std::string& path) {
    std::string_view t = pysrc::trim(line);
    if (t.substr(0, 5) != "File ") return false;
    t.remove_prefix(5);
    if (t.empty() || t.front() != '"') return false;
    t.remove_prefix(1);
    std::size_t end = t.find('"');
    if (end == std::string_view::npos) return false;
    std::string_view rest = t.substr(end + 1);
    if (rest.substr(0, 6) != ", line") return false;
    path = std::string(t.substr(0, end));
    return true;
}

std::string path_basename(const std::string& path) {
    std::size_t slash = path.find_last_of("/\\");
    return slash == std::string::npos ? path : path.substr(slash + 1);
}

struct Item {
    bool frame = false;
    std::string path; // frame only
    std::string text; // full text, embedded newlines, no trailing newline
};

// Group stderr lines into frame items (File header plus its indented
// continuation lines) and passthrough items for everything else.
std::vector<Item> parse_items(const std::vector<std::string>& lines) {
    std::vector<Item> items;
    std::size_t i = 0;
    while (i < lines.size()) {
        std::string path;
        if (parse_frame_header(lines[i], path)) {
            Item item;
            item.frame = true;
            item.path = std::move(path);
            item.text = lines[i];
            ++i;
            while (i < lines.size() && !lines[i].empty() &&
                   (lines[i][0] == ' ' || lines[i][0] == '\t')) {
                std::string dummy;
                if (parse_frame_header(lines[i], dummy)) break;
                item.text += '\n';
                item.text += lines[i];
                ++i;
            }
            items.push_back(std::move(item));
        } else {
            items.push_back({false, {}, lines[i]});
            ++i;
        }
    }
    return items;
}

// Collapse consecutive repeats of frame blocks (cycle period 1..4) into one
// occurrence plus a repeat count. Handles both straight recursion and short
// mutual-recursion cycles, which the interpreter does not pre-collapse.
std::vector<Item> collapse_cycles(const std::vector<Item>& items, bool& collapsed) {
    std::vector<Item> out;
    std::size_t i = 0;
    const std::size_t n = items.size();
    auto block_equal = [&](std::size_t a, std::size_t b, std::size_t p) {
        for (std::size_t k = 0; k < p; ++k) {
            if (!items[a + k].frame || !items[b + k].frame) return false;
            if (items[a + k].text != items[b + k].text) return false;
        }
        return true;
    };
    while (i < n) {
        if (!items[i].frame) {
            out.push_back(items[i++]);
            continue;
        }
        std::size_t best_period = 0, best_repeats = 0;
        for (std::size_t p = 1; p <= 4 && i + 2 * p <= n; ++p) {
            if (!block_equal(i, i + p, p)) continue;
            std::size_t k = 2;
            while (i + (k + 1) * p <= n && block_equal(i, i + k * p, p)) ++k;
            if (k * p > best_repeats * best_period) {
                best_period = p;
                best_repeats = k;
            }
        }
        if (best_repeats >= 2) {
            for (std::size_t k = 0; k < best_period; ++k) out.push_back(items[i + k]);
            Item marker;
            marker.text = best_period == 1
                              ? "  [previous frame repeated " +
                                    std::to_string(best_repeats - 1) + " more times]"
                              : "  [previous " + std::to_string(best_period) +
                                    " frames repeated " + std::to_string(best_repeats - 1) +
                                    " more times]";
            out.push_back(std::move(marker));
            collapsed = true;
            i += best_period * best_repeats;
        } else {
            out.push_back(items[i++]);
        }
    }
    return out;
}

std::string join_items(const std::vector<Item>& items) {
    std::string out;
    for (const auto& item : items) {
        if (!out.empty()) out += '\n';
        out += item.text;
    }
    return out;
}

// Keep the head and tail of the text within `limit` bytes, cutting at line
// boundaries where possible.
std::string elide_middle(const std::string& text, std::size_t limit) {
    static const std::string marker = "\n... [traceback elided] ...\n";
    if (limit <= marker.size() + 2) return text.substr(0, limit);
    std::size_t budget = limit - marker.size();
    std::size_t head = budget * 3 / 5;
    std::size_t tail = budget - head;
    std::size_t head_cut = text.rfind('\n', head);
    if (head_cut != std::string::npos && head_cut > head / 2) head = head_cut;
    std::size_t tail_start = text.size() - tail;
    std::size_t tail_cut = text.find('\n', tail_start);
    if (tail_cut != std::string::npos && tail_cut < text.size() - 1) tail_start = tail_cut + 1;
    return text.substr(0, head) + marker + text.substr(tail_start);
}

} // namespace

std::string to_string(ErrorCategory category) {
    for (const auto& [cat, name] : kCategoryNames)
        if (cat == category) return name;
    return "other";
}

ErrorCategory error_category_from_string(const std::string& name) {
    for (const auto& [cat, cat_name] : kCategoryNames)
        if (name == cat_name) return cat;
    throw Error("unknown error category: " + name);
}

std::string RefinedError::text() const {
    if (filtered_traceback.empty()) return guidance;
    if (guidance.empty()) return filtered_traceback;
    return filtered_traceback + "\n" + guidance;
}

GuidanceTable default_guidance() {
    return {
        {ErrorCategory::assertion,
         "Your generated solution failed a test case. Please improve the logic of your "
         "solution."},
        {ErrorCategory::syntax,
         "Your code contains a syntax error. Rewrite the affected lines so the file parses."},
        {ErrorCategory::name,
         "Your code references a name that is not defined. Define it or correct the spelling."},
        {ErrorCategory::type,
         "An operation received a value of an unsupported type. Check the argument and return "
         "types."},
        {ErrorCategory::value,
         "An operation received an invalid value. Check edge cases in your logic."},
        {ErrorCategory::index_key,
         "An index or key lookup failed. Check sequence bounds and dictionary keys."},
        {ErrorCategory::import_missing,
         "A required module could not be imported. List the package in the '### Requirements' "
         "section or remove the import."},
        {ErrorCategory::recursion,
         "Your solution exceeded the maximum recursion depth. Add a correct base case or use an "
         "iterative approach."},
        {ErrorCategory::timeout,
         "Your solution exceeded the {timeout}-second time limit; check for infinite loops or "
         "inefficiency."},
        {ErrorCategory::setup,
         "The execution environment could not be installed from your '### Requirements' "
         "section. List only valid, available packages."},
        {ErrorCategory::other,
         "Your solution raised an unexpected error. Review the message and revise your code."},
    };
}

GuidanceTable load_guidance(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open guidance table: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error("invalid guidance table: " + std::string(e.what()));
    }
    GuidanceTable table = default_guidance();
    for (auto it = j.begin(); it != j.end(); ++it)
        table[error_category_from_string(it.key())] = it.value().get<std::string>();
    return table;
}

ErrorHandler::ErrorHandler(ErrorHandlerConfig config, GuidanceTable table)
    : config_(std::move(config)), table_(std::move(table)) {
    if (config_.budget < 256) config_.budget = 256;
}

ErrorCategory ErrorHandler::classify(const ExecutionResult& result) const {
    if (result.status == ExecStatus::timeout) return ErrorCategory::timeout;
    if (result.status == ExecStatus::setup_error) return ErrorCategory::setup;

    std::string name = final_exception_name(result.stderr_text);
    if (name == "AssertionError") return ErrorCategory::assertion;
    if (name == "SyntaxError" || name == "IndentationError" || name == "TabError")
        return ErrorCategory::syntax;
    if (name == "NameError" || name == "UnboundLocalError") return ErrorCategory::name;
    if (name == "TypeError") return ErrorCategory::type;
    if (name == "ValueError") return ErrorCategory::value;
    if (name == "IndexError" || name == "KeyError") return ErrorCategory::index_key;
    if (name == "ImportError" || name == "ModuleNotFoundError")
        return ErrorCategory::import_missing;
    if (name == "RecursionError") return ErrorCategory::recursion;
    return ErrorCategory::other;
}

RefinedError ErrorHandler::refine(const ExecutionResult& result) const {
    RefinedError refined;
    refined.category = classify(result);
    refined.original_length = result.stderr_text.size();

    std::string guidance;
    if (auto it = table_.find(refined.category); it != table_.end()) guidance = it->second;
    if (std::size_t pos = guidance.find("{timeout}"); pos != std::string::npos)
        guidance.replace(pos, 9, format_seconds(config_.timeout_s));
    refined.guidance = guidance;

    auto lines = split_lines(result.stderr_text);
    std::vector<Item> items = parse_items(lines);

    // relevance filtering: frames outside the main file are noise
    std::vector<Item> kept;
    for (auto& item : items) {
        if (item.frame && path_basename(item.path) != config_.main_file_name) continue;
        kept.push_back(std::move(item));
    }
    bool collapsed = false;
    kept = collapse_cycles(kept, collapsed);
    std::string traceback = join_items(kept);

    if (traceback.empty() && result.status == ExecStatus::failed)
        traceback = "Process exited with code " + std::to_string(result.exit_code) +
                    " and produced no error output.";

    std::size_t limit =
        config_.budget > guidance.size() + 1 ? config_.budget - guidance.size() - 1 : 0;
    if (traceback.size() > limit) {
        traceback = elide_middle(traceback, limit);
        refined.truncated = true;
    }
    refined.filtered_traceback = std::move(traceback);
    return refined;
}

} // namespace capsule
