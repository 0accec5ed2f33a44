#include "capsule/pysrc.hpp"

#include <cctype>

namespace capsule::pysrc {

namespace {

// Quote/bracket state shared by all scans. Raw-string prefixes need no
// special casing: a backslash before a closing quote keeps the string open
// in raw literals too, so uniform escape handling finds the same end.
struct ScanState {
    int depth = 0;
    int string_len = 0; // 0 = not in a string, else 1 or 3
    char quote = 0;
    bool escape = false;
    bool in_comment = false;
    bool underflow = false;

    bool in_string() const { return string_len > 0; }
    bool top_level() const { return depth == 0 && !in_string() && !in_comment; }
};

bool is_open(char c) { return c == '(' || c == '[' || c == '{'; }
bool is_close(char c) { return c == ')' || c == ']' || c == '}'; }

// Advance the state through s. visit(i) is called for every byte processed
// in normal (non-string, non-comment) state, before brackets are counted, so
// an opening bracket is itself visible at its enclosing depth.
template <typename Visit>
void scan(std::string_view s, ScanState& st, Visit&& visit) {
    for (std::size_t i = 0; i < s.size(); ++i) {
        const char c = s[i];
        if (st.in_comment) {
            if (c == '\n') st.in_comment = false;
            continue;
        }
        if (st.in_string()) {
            if (st.escape) {
                st.escape = false;
                continue;
            }
            if (c == '\\') {
                st.escape = true;
                continue;
            }
            if (c == st.quote) {
                if (st.string_len == 1) {
                    st.string_len = 0;
                } else if (i + 2 < s.size() && s[i + 1] == st.quote && s[i + 2] == st.quote) {
                    st.string_len = 0;
                    i += 2;
                } else if (i + 2 == s.size() && s[i + 1] == st.quote) {
                    // closing pair at end of chunk; treat as closed
                    st.string_len = 0;
                    i += 1;
                }
            } else if (c == '\n' && st.string_len == 1) {
                // unterminated single-quoted string: recover at end of line
                st.string_len = 0;
            }
            continue;
        }
        if (c == '#') {
            st.in_comment = true;
            continue;
        }
        if (c == '\'' || c == '"') {
            visit(i);
            st.quote = c;
            if (i + 2 < s.size() && s[i + 1] == c && s[i + 2] == c) {
                st.string_len = 3;
                i += 2;
            } else {
                st.string_len = 1;
            }
            continue;
        }
        if (is_open(c)) {
            visit(i);
            ++st.depth;
            continue;
        }
        if (is_close(c)) {
            --st.depth;
            if (st.depth < 0) {
                st.depth = 0;
                st.underflow = true;
            }
            visit(i);
            continue;
        }
        visit(i);
    }
}

} // namespace

std::vector<std::string> split_top_level(std::string_view s, char delim) {
    std::vector<std::string> parts;
    ScanState st;
    std::size_t start = 0;
    scan(s, st, [&](std::size_t i) {
        if (s[i] == delim && st.depth == 0) {
            parts.emplace_back(s.substr(start, i - start));
            start = i + 1;
        }
    });
    parts.emplace_back(s.substr(start));
    return parts;
}

std::size_t find_top_level(std::string_view s, std::string_view needle) {
    if (needle.empty()) return std::string_view::npos;
    std::size_t found = std::string_view::npos;
    ScanState st;
    scan(s, st, [&](std::size_t i) {
        if (found != std::string_view::npos) return;
        if (st.depth == 0 && s.compare(i, needle.size(), needle) == 0) found = i;
    });
    return found;
}

bool balanced(std::string_view s) {
    ScanState st;
    scan(s, st, [](std::size_t) {});
    return st.depth == 0 && !st.in_string() && !st.underflow;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

bool is_identifier(std::string_view s) {
    if (s.empty()) return false;
    if (!(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
    for (char c : s)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
    return true;
}

ScanResult logical_lines(std::string_view code) {
    // Slice into physical lines first (newline excluded).
    std::vector<std::string_view> phys;
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
    // A file ending in '\n' yields a final empty slice; drop it so line
    // counts match the visible lines.
    if (!code.empty() && code.back() == '\n' && !phys.empty() && phys.back().empty())
        phys.pop_back();

    ScanResult result;
    ScanState st;
    std::size_t li = 0;
    while (li < phys.size()) {
        LogicalLine line;
        line.first_line = li;
        bool more = true;
        while (more && li < phys.size()) {
            std::string_view p = phys[li];
            bool backslash_cont = false;
            scan(p, st, [&](std::size_t i) {
                backslash_cont = (p[i] == '\\' && i + 1 == p.size());
                if (p[i] != '\\') backslash_cont = false;
            });
            // scan() leaves single-quote strings closed at line end; comments
            // do not continue either
            st.in_comment = false;
            if (!line.text.empty()) line.text += '\n';
            line.text.append(p);
            more = st.depth > 0 || st.string_len == 3 || backslash_cont;
            ++li;
        }
        line.last_line = li - 1;
        std::string_view first = phys[line.first_line];
        int indent = 0;
        for (char c : first) {
            if (c == ' ' || c == '\t')
                ++indent;
            else
                break;
        }
        line.indent = indent;
        std::string_view t = trim(line.text);
        line.blank = t.empty() || t.front() == '#';
        result.lines.push_back(std::move(line));
    }
    if (st.depth != 0 || st.in_string() || st.underflow) result.clean = false;
    return result;
}

} // namespace capsule::pysrc
