#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "capsule/problem.hpp"

namespace capsule {

enum class LiteralKind { int_, float_, str_, bool_, list, dict, tuple, set, none, other };

std::string to_string(LiteralKind kind);

/// Annotation used in the rendered signature for each literal kind.
std::string annotation_for(LiteralKind kind);

struct CallArg {
    std::string text; // the literal exactly as written in the test
    LiteralKind kind = LiteralKind::other;
};

/// The callee and argument literals of the first call in an assert statement.
struct CallShape {
    std::string function_name;
    std::vector<CallArg> args;
};

/// Function-name / signature / example-call block inferred from the first
/// test case. `rendered_hint` never contains the comparison operator or the
/// right-hand side of the source assert.
struct SignatureHint {
    std::string function_name;
    std::string signature_text;
    std::string example_call;
    std::string rendered_hint;
};

/// Extract the outermost call on the left side of the top-level comparison
/// (or of a bare `assert f(...)`). Argument literals are split at top-level
/// commas with bracket and string awareness and classified by surface syntax.
/// Throws AssertParseError when no call expression is found or brackets are
/// unbalanced.
CallShape parse_assert(std::string_view test_text);

/// Infer a hint from the problem's first test. Parameters are named
/// arg_<kind>; when a kind occurs more than once every occurrence gets a
/// 1-based positional suffix. Return types are omitted.
SignatureHint infer_signature(const Problem& problem);

/// The three-line hint text:
///   ### Required function name for your reference '<name>()'
///   ### Function signature for your reference - <signature_text>
///   ### An example function call from private test cases - <example_call>
std::string render_hint(const SignatureHint& hint);

} // namespace capsule
