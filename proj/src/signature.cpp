#include "capsule/signature.hpp"

#include <array>
#include <cctype>
#include <map>

#include "capsule/errors.hpp"
#include "capsule/pysrc.hpp"

namespace capsule {

namespace {

using pysrc::trim;

const std::array<std::string_view, 8> kKeywords = {"not", "and", "or",     "if",
                                                   "else", "lambda", "await", "assert"};

bool is_keyword(std::string_view token) {
    for (auto k : kKeywords)
        if (token == k) return true;
    return false;
}

bool is_digit_run(std::string_view s) {
    bool any = false;
    for (char c : s) {
        if (std::isdigit(static_cast<unsigned char>(c))) {
            any = true;
        } else if (c != '_') {
            return false;
        }
    }
    return any;
}

bool is_string_literal(std::string_view s) {
    std::size_t i = 0;
    while (i < s.size() && i < 2 && std::isalpha(static_cast<unsigned char>(s[i]))) {
        char c = static_cast<char>(std::tolower(static_cast<unsigned char>(s[i])));
        if (c != 'r' && c != 'b' && c != 'u' && c != 'f') return false;
        ++i;
    }
    return i < s.size() && (s[i] == '\'' || s[i] == '"');
}

bool is_float_literal(std::string_view s) {
    if (!s.empty() && (s[0] == '+' || s[0] == '-')) s.remove_prefix(1);
    bool digits = false, dot = false, exponent = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '_') {
            digits = digits || std::isdigit(static_cast<unsigned char>(c));
        } else if (c == '.' && !dot && !exponent) {
            dot = true;
        } else if ((c == 'e' || c == 'E') && digits && !exponent) {
            exponent = true;
            if (i + 1 < s.size() && (s[i + 1] == '+' || s[i + 1] == '-')) ++i;
        } else {
            return false;
        }
    }
    return digits && (dot || exponent);
}

LiteralKind classify_literal(std::string_view text) {
    std::string_view s = trim(text);
    if (s.empty()) return LiteralKind::other;
    if (s == "None") return LiteralKind::none;
    if (s == "True" || s == "False") return LiteralKind::bool_;
    if (is_string_literal(s)) return LiteralKind::str_;
    if (s.front() == '[') return LiteralKind::list;
    if (s.front() == '(') return LiteralKind::tuple;
    if (s.front() == '{') {
        // dict when empty or a top-level colon exists inside the braces
        if (s == "{}") return LiteralKind::dict;
        std::string_view inner = s.substr(1, s.size() >= 2 ? s.size() - 2 : 0);
        return pysrc::find_top_level(inner, ":") != std::string_view::npos ? LiteralKind::dict
                                                                           : LiteralKind::set;
    }
    std::string_view num = s;
    if (!num.empty() && (num[0] == '+' || num[0] == '-')) num.remove_prefix(1);
    if (is_digit_run(num)) return LiteralKind::int_;
    if (is_float_literal(s)) return LiteralKind::float_;
    return LiteralKind::other;
}

// Comparison operators that may separate call and expected output, longest
// first so <= is not read as <.
const std::array<std::string_view, 6> kComparisons = {"==", "!=", "<=", ">=", "<", ">"};

std::size_t find_comparison(std::string_view s) {
    std::size_t best = std::string_view::npos;
    for (auto op : kComparisons) {
        std::size_t pos = pysrc::find_top_level(s, op);
        if (pos == std::string_view::npos) continue;
        // skip matches that are the tail of a longer operator
        if ((op == "<" || op == ">") && pos + 1 < s.size() && s[pos + 1] == '=') continue;
        if (best == std::string_view::npos || pos < best) best = pos;
    }
    for (std::string_view word : {std::string_view(" is "), std::string_view(" in ")}) {
        std::size_t pos = pysrc::find_top_level(s, word);
        if (pos != std::string_view::npos && (best == std::string_view::npos || pos < best))
            best = pos;
    }
    return best;
}

struct Callee {
    std::string name;
    std::size_t open_paren = 0;
};

// The outermost call: among every `identifier(` occurrence, pick the one at
// the smallest bracket depth (earliest wins within a depth). This sees
// through grouping parentheses and unary operators.
std::optional<Callee> find_call(std::string_view s) {
    struct Candidate {
        std::size_t pos;
        int depth;
        std::string name;
    };
    std::optional<Candidate> best;
    int depth = 0;
    bool in_string = false;
    char quote = 0;
    bool escape = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
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
        if (c == '(') {
            std::size_t end = i;
            while (end > 0) {
                char prev = s[end - 1];
                if (prev == ' ' || prev == '\t')
                    --end;
                else
                    break;
            }
            std::size_t start = end;
            while (start > 0 &&
                   (std::isalnum(static_cast<unsigned char>(s[start - 1])) || s[start - 1] == '_'))
                --start;
            std::string_view token = s.substr(start, end - start);
            if (pysrc::is_identifier(token) && !is_keyword(token)) {
                if (!best || depth < best->depth)
                    best = Candidate{i, depth, std::string(token)};
            }
            ++depth;
            continue;
        }
        if (c == ')' || c == ']' || c == '}') {
            if (depth > 0) --depth;
            continue;
        }
        if (c == '[' || c == '{') {
            ++depth;
            continue;
        }
    }
    if (!best) return std::nullopt;
    return Callee{best->name, best->pos};
}

std::string_view call_arguments(std::string_view s, std::size_t open_paren) {
    int depth = 0;
    bool in_string = false;
    char quote = 0;
    bool escape = false;
    for (std::size_t i = open_paren; i < s.size(); ++i) {
        char c = s[i];
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
        if (c == '(' || c == '[' || c == '{') {
            ++depth;
        } else if (c == ')' || c == ']' || c == '}') {
            --depth;
            if (depth == 0) return s.substr(open_paren + 1, i - open_paren - 1);
        }
    }
    throw AssertParseError("unbalanced brackets in assert statement");
}

} // namespace

std::string to_string(LiteralKind kind) {
    switch (kind) {
    case LiteralKind::int_: return "int";
    case LiteralKind::float_: return "float";
    case LiteralKind::str_: return "str";
    case LiteralKind::bool_: return "bool";
    case LiteralKind::list: return "list";
    case LiteralKind::dict: return "dict";
    case LiteralKind::tuple: return "tuple";
    case LiteralKind::set: return "set";
    case LiteralKind::none: return "none";
    case LiteralKind::other: return "other";
    }
    return "other";
}

std::string annotation_for(LiteralKind kind) {
    switch (kind) {
    case LiteralKind::none: return "None";
    case LiteralKind::other: return "Any";
    default: return to_string(kind);
    }
}

CallShape parse_assert(std::string_view test_text) {
    std::string_view s = trim(test_text);
    if (s.substr(0, 6) != "assert" ||
        (s.size() > 6 && (std::isalnum(static_cast<unsigned char>(s[6])) || s[6] == '_')))
        throw AssertParseError("statement does not begin with assert");
    std::string_view expr = trim(s.substr(6));
    if (expr.empty()) throw AssertParseError("assert statement has no expression");
    if (!pysrc::balanced(expr)) throw AssertParseError("unbalanced brackets in assert statement");

    // assert <condition>, <message>
    std::size_t msg_comma = pysrc::find_top_level(expr, ",");
    if (msg_comma != std::string_view::npos) expr = trim(expr.substr(0, msg_comma));

    std::size_t cmp = find_comparison(expr);
    std::string_view lhs = cmp == std::string_view::npos ? expr : trim(expr.substr(0, cmp));
    if (lhs.empty()) throw AssertParseError("assert statement has an empty left-hand side");

    auto callee = find_call(lhs);
    if (!callee) throw AssertParseError("no call expression found in assert statement");

    CallShape shape;
    shape.function_name = callee->name;
    std::string_view inner = trim(call_arguments(lhs, callee->open_paren));
    if (!inner.empty()) {
        for (auto& piece : pysrc::split_top_level(inner, ',')) {
            std::string_view arg = trim(piece);
            if (arg.empty()) continue; // trailing comma
            shape.args.push_back({std::string(arg), classify_literal(arg)});
        }
    }
    return shape;
}

SignatureHint infer_signature(const Problem& problem) {
    if (problem.tests.empty()) throw AssertParseError("problem has no tests");
    CallShape shape = parse_assert(problem.tests.front());

    std::map<LiteralKind, int> totals;
    for (const auto& arg : shape.args) ++totals[arg.kind];

    SignatureHint hint;
    hint.function_name = shape.function_name;

    std::map<LiteralKind, int> seen;
    std::string params;
    std::string call_args;
    for (const auto& arg : shape.args) {
        if (!params.empty()) {
            params += ", ";
            call_args += ", ";
        }
        std::string name = "arg_" + to_string(arg.kind);
        if (totals[arg.kind] > 1) name += std::to_string(++seen[arg.kind]);
        params += name + ": " + annotation_for(arg.kind);
        call_args += arg.text;
    }
    hint.signature_text = hint.function_name + "(" + params + ")";
    hint.example_call = hint.function_name + "(" + call_args + ")";
    hint.rendered_hint = render_hint(hint);
    return hint;
}

std::string render_hint(const SignatureHint& hint) {
    return "### Required function name for your reference '" + hint.function_name + "()'\n" +
           "### Function signature for your reference - " + hint.signature_text + "\n" +
           "### An example function call from private test cases - " + hint.example_call;
}

} // namespace capsule
