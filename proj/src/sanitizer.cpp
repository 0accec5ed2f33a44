#include "capsule/sanitizer.hpp"

#include <cctype>

#include "capsule/pysrc.hpp"

namespace capsule {

namespace {

using pysrc::LogicalLine;
using pysrc::trim;

bool starts_with(std::string_view s, std::string_view prefix) {
    return s.substr(0, prefix.size()) == prefix;
}

// keyword followed by a non-identifier character
bool starts_with_word(std::string_view s, std::string_view word) {
    if (!starts_with(s, word)) return false;
    if (s.size() == word.size()) return true;
    char c = s[word.size()];
    return !(std::isalnum(static_cast<unsigned char>(c)) || c == '_');
}

std::string_view leading_identifier(std::string_view s) {
    std::size_t n = 0;
    while (n < s.size() && (std::isalnum(static_cast<unsigned char>(s[n])) || s[n] == '_')) ++n;
    if (n == 0 || std::isdigit(static_cast<unsigned char>(s[0]))) return {};
    return s.substr(0, n);
}

// Identifier bound by a top-level def/async def/class statement.
std::string def_name(std::string_view text) {
    std::string_view t = trim(text);
    if (starts_with_word(t, "async")) t = trim(t.substr(5));
    std::string_view keyword;
    if (starts_with_word(t, "def"))
        keyword = "def";
    else if (starts_with_word(t, "class"))
        keyword = "class";
    else
        return {};
    t = trim(t.substr(keyword.size()));
    std::string_view name = leading_identifier(t);
    return std::string(name);
}

const std::string_view kStatementKeywords[] = {
    "def",   "class", "if",     "elif",  "else",   "for",   "while", "try",    "except",
    "finally", "with", "import", "from",  "return", "yield", "raise", "pass",   "break",
    "continue", "global", "nonlocal", "del", "async", "lambda", "assert", "match"};

bool is_keyword_statement(std::string_view t) {
    for (auto k : kStatementKeywords)
        if (starts_with_word(t, k)) return true;
    return false;
}

// A top-level '=' that is not ==, !=, <=, >=, :=, or an augmented assignment
// marks an assignment statement.
bool has_top_level_assignment(std::string_view t) {
    std::size_t from = 0;
    while (true) {
        std::size_t pos = pysrc::find_top_level(t.substr(from), "=");
        if (pos == std::string_view::npos) return false;
        pos += from;
        char before = pos > 0 ? t[pos - 1] : '\0';
        char after = pos + 1 < t.size() ? t[pos + 1] : '\0';
        bool comparison = after == '=' || before == '=' || before == '!' || before == '<' ||
                          before == '>' || before == ':';
        bool augmented = before == '+' || before == '-' || before == '*' || before == '/' ||
                         before == '%' || before == '&' || before == '|' || before == '^' ||
                         before == '@';
        if (!comparison && !augmented) return true;
        from = pos + (after == '=' ? 2 : 1);
        if (from >= t.size()) return false;
    }
}

// Does the statement text contain `name(` for any defined name, outside
// strings/comments, at any depth?
bool calls_defined_name(std::string_view text, const std::set<std::string>& defined) {
    for (const auto& name : defined) {
        std::string needle = name + "(";
        std::size_t from = 0;
        while (from < text.size()) {
            // string-aware search is only available at top level; fall back to
            // a plain scan with a boundary check, which is good enough for a
            // heuristic log and for the strict top-level cases handled below
            std::size_t pos = text.find(needle, from);
            if (pos == std::string_view::npos) break;
            char before = pos > 0 ? text[pos - 1] : '\0';
            if (!(std::isalnum(static_cast<unsigned char>(before)) || before == '_')) return true;
            from = pos + 1;
        }
    }
    return false;
}

// Expression statement whose outermost expression calls a defined name,
// directly or wrapped in print().
bool is_example_call(std::string_view t, const std::set<std::string>& defined) {
    std::string_view callee = leading_identifier(t);
    if (callee.empty()) return false;
    std::string_view rest = trim(t.substr(callee.size()));
    if (rest.empty() || rest.front() != '(') return false;
    if (!pysrc::balanced(t)) return false;
    // the statement must be nothing but the call (allow a trailing comment)
    std::size_t close = 0;
    {
        int depth = 0;
        bool in_string = false;
        char quote = 0;
        bool escape = false;
        for (std::size_t i = 0; i < t.size(); ++i) {
            char c = t[i];
            if (in_string) {
                if (escape)
                    escape = false;
                else if (c == '\\')
                    escape = true;
                else if (c == quote)
                    in_string = false;
                continue;
            }
            if (c == '\'' || c == '"') {
                in_string = true;
                quote = c;
                continue;
            }
            if (c == '(' || c == '[' || c == '{') ++depth;
            if (c == ')' || c == ']' || c == '}') {
                --depth;
                if (depth == 0) {
                    close = i;
                    break;
                }
            }
        }
    }
    if (close == 0) return false;
    std::string_view tail = trim(t.substr(close + 1));
    if (!tail.empty() && tail.front() != '#') return false;

    if (defined.count(std::string(callee))) return true;
    if (callee == "print") {
        std::string_view inner = t.substr(t.find('(') + 1, close - t.find('(') - 1);
        for (auto& piece : pysrc::split_top_level(inner, ',')) {
            std::string_view arg = trim(piece);
            std::string_view arg_callee = leading_identifier(arg);
            if (!arg_callee.empty() && arg.size() > arg_callee.size() &&
                trim(arg.substr(arg_callee.size())).front() == '(' &&
                defined.count(std::string(arg_callee)))
                return true;
        }
    }
    return false;
}

bool is_main_guard(std::string_view t) {
    if (!starts_with_word(t, "if")) return false;
    return t.find("__name__") != std::string_view::npos &&
           t.find("__main__") != std::string_view::npos;
}

} // namespace

std::set<std::string> scan_definitions(std::string_view code) {
    std::set<std::string> names;
    auto scan = pysrc::logical_lines(code);
    for (const auto& line : scan.lines) {
        if (line.indent != 0 || line.blank) continue;
        std::string name = def_name(line.text);
        if (!name.empty()) names.insert(std::move(name));
    }
    return names;
}

SanitizedCode strip_example_calls(std::string_view code) {
    SanitizedCode result;
    auto scan = pysrc::logical_lines(code);
    if (!scan.clean) {
        result.code = std::string(code);
        result.defined_names = scan_definitions(code);
        result.warned = true;
        return result;
    }
    result.defined_names = scan_definitions(code);

    // Physical lines, reassembled after dropping removed spans.
    std::vector<std::string_view> phys;
    {
        std::size_t pos = 0;
        while (pos <= code.size()) {
            std::size_t nl = code.find('\n', pos);
            if (nl == std::string_view::npos) {
                phys.push_back(code.substr(pos));
                break;
            }
            phys.push_back(code.substr(pos, nl - pos));
            pos = nl + 1;
        }
        if (!code.empty() && code.back() == '\n' && !phys.empty() && phys.back().empty())
            phys.pop_back();
    }
    std::vector<bool> drop(phys.size(), false);

    const auto& lines = scan.lines;
    for (std::size_t k = 0; k < lines.size(); ++k) {
        const LogicalLine& line = lines[k];
        if (line.indent != 0 || line.blank) continue;
        std::string_view t = trim(line.text);

        if (is_main_guard(t)) {
            // remove the guard and its whole block: the main file is executed
            // directly, so the guard body would run
            std::size_t end = k;
            while (end + 1 < lines.size() && (lines[end + 1].blank || lines[end + 1].indent > 0))
                ++end;
            while (end > k && lines[end].blank) --end; // keep trailing separators
            for (std::size_t j = lines[k].first_line; j <= lines[end].last_line; ++j)
                drop[j] = true;
            std::string block;
            for (std::size_t j = k; j <= end; ++j) {
                if (j > k) block += '\n';
                block += lines[j].text;
            }
            result.removed.push_back(
                {lines[k].first_line, lines[end].last_line, std::move(block)});
            k = end;
            continue;
        }

        if (is_keyword_statement(t)) continue;
        if (has_top_level_assignment(t)) {
            if (calls_defined_name(line.text, result.defined_names))
                result.suspicious.push_back(line.text);
            continue;
        }
        if (is_example_call(t, result.defined_names)) {
            for (std::size_t j = line.first_line; j <= line.last_line; ++j) drop[j] = true;
            result.removed.push_back({line.first_line, line.last_line, line.text});
        }
    }

    std::string out;
    out.reserve(code.size());
    for (std::size_t i = 0; i < phys.size(); ++i) {
        if (drop[i]) continue;
        out.append(phys[i]);
        out.push_back('\n');
    }
    // match the original's final-newline convention
    if (!out.empty() && (code.empty() || code.back() != '\n')) out.pop_back();
    result.code = std::move(out);
    return result;
}

} // namespace capsule
