#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

// Lightweight scanning utilities for the generated source text. These track
// bracket depth, string quoting (single, double, triple, raw/byte/format
// prefixes) and escapes, but implement no grammar beyond that: inputs are
// model output and single assert statements, so top-level structure is all
// that matters and the scanner must never crash on malformed text.

namespace capsule::pysrc {

/// Split `s` at top-level occurrences of `delim` (outside any bracket or
/// string). The delimiter itself is dropped; pieces are not trimmed.
std::vector<std::string> split_top_level(std::string_view s, char delim);

/// Byte offset of the first top-level occurrence of `needle`, or npos.
std::size_t find_top_level(std::string_view s, std::string_view needle);

/// True when all brackets close and no string is left open.
bool balanced(std::string_view s);

/// Strip ASCII whitespace from both ends.
std::string_view trim(std::string_view s);

/// True for [A-Za-z_][A-Za-z0-9_]*.
bool is_identifier(std::string_view s);

/// One logical statement: physical lines joined while brackets stay open, a
/// backslash continuation is pending, or a triple-quoted string is unclosed.
struct LogicalLine {
    std::size_t first_line = 0; // 0-based physical line index
    std::size_t last_line = 0;  // inclusive
    std::string text;           // raw bytes, embedded newlines preserved, no trailing newline
    int indent = 0;             // leading whitespace characters of the first physical line
    bool blank = false;         // whitespace-only or comment-only
};

struct ScanResult {
    std::vector<LogicalLine> lines;
    bool clean = true; // false when input ends inside a string or bracket
};

ScanResult logical_lines(std::string_view code);

} // namespace capsule::pysrc
