#include <doctest.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <string>

#include "capsule/errors.hpp"
#include "capsule/signature.hpp"

#include "support.hpp"

using namespace capsule;

namespace {

Problem make_problem(const std::string& test) {
    Problem p;
    p.id = "t/0";
    p.description = "desc";
    p.tests = {test};
    p.source_format = SourceFormat::custom;
    return p;
}

} // namespace

TEST_CASE("parse_assert extracts callee and literal kinds") {
    CallShape shape = parse_assert("assert foo(4) == 16");
    CHECK(shape.function_name == "foo");
    REQUIRE(shape.args.size() == 1);
    CHECK(shape.args[0].text == "4");
    CHECK(shape.args[0].kind == LiteralKind::int_);
}

TEST_CASE("parse_assert zero-argument call") {
    CallShape shape = parse_assert("assert bar() == None");
    CHECK(shape.function_name == "bar");
    CHECK(shape.args.empty());
}

TEST_CASE("parse_assert nested literals and strings") {
    CallShape shape = parse_assert("assert f(\"ab\", [1, 2]) == 3");
    CHECK(shape.function_name == "f");
    REQUIRE(shape.args.size() == 2);
    CHECK(shape.args[0].text == "\"ab\"");
    CHECK(shape.args[0].kind == LiteralKind::str_);
    CHECK(shape.args[1].text == "[1, 2]");
    CHECK(shape.args[1].kind == LiteralKind::list);
}

TEST_CASE("parse_assert bare call without comparison") {
    CallShape shape = parse_assert("assert is_valid('x')");
    CHECK(shape.function_name == "is_valid");
    REQUIRE(shape.args.size() == 1);
    CHECK(shape.args[0].kind == LiteralKind::str_);
}

TEST_CASE("parse_assert with assertion message") {
    CallShape shape = parse_assert("assert eq(1, 2) == 3, 'broken'");
    CHECK(shape.function_name == "eq");
    CHECK(shape.args.size() == 2);
}

TEST_CASE("parse_assert sees through grouping parentheses") {
    CallShape shape = parse_assert("assert (foo(4)) == 16");
    CHECK(shape.function_name == "foo");
    REQUIRE(shape.args.size() == 1);
}

TEST_CASE("parse_assert picks the outermost call") {
    CallShape shape = parse_assert("assert abs(f(2) - 1.5) < 1e-6");
    CHECK(shape.function_name == "abs");
    REQUIRE(shape.args.size() == 1);
    CHECK(shape.args[0].kind == LiteralKind::other);
}

TEST_CASE("parse_assert errors") {
    CHECK_THROWS_AS(parse_assert("x == 1"), AssertParseError);
    CHECK_THROWS_AS(parse_assert("assert x == 1"), AssertParseError);
    CHECK_THROWS_AS(parse_assert("assert foo(1 == 2"), AssertParseError);
    CHECK_THROWS_AS(parse_assert("assert"), AssertParseError);
    CHECK_THROWS_AS(parse_assert("assertx(1) == 2"), AssertParseError);
}

TEST_CASE("literal kind classification is total") {
    auto kind_of = [](const std::string& literal) {
        CallShape shape = parse_assert("assert f(" + literal + ") == 0");
        REQUIRE(shape.args.size() == 1);
        return shape.args[0].kind;
    };
    CHECK(kind_of("7") == LiteralKind::int_);
    CHECK(kind_of("-7") == LiteralKind::int_);
    CHECK(kind_of("2.5") == LiteralKind::float_);
    CHECK(kind_of("1e-3") == LiteralKind::float_);
    CHECK(kind_of(".5") == LiteralKind::float_);
    CHECK(kind_of("'s'") == LiteralKind::str_);
    CHECK(kind_of("r'raw'") == LiteralKind::str_);
    CHECK(kind_of("True") == LiteralKind::bool_);
    CHECK(kind_of("False") == LiteralKind::bool_);
    CHECK(kind_of("[1]") == LiteralKind::list);
    CHECK(kind_of("{}") == LiteralKind::dict);
    CHECK(kind_of("{1: 2}") == LiteralKind::dict);
    CHECK(kind_of("{1, 2}") == LiteralKind::set);
    CHECK(kind_of("(1, 2)") == LiteralKind::tuple);
    CHECK(kind_of("None") == LiteralKind::none);
    CHECK(kind_of("x + 1") == LiteralKind::other);
    CHECK(kind_of("g(1)") == LiteralKind::other);
}

TEST_CASE("infer_signature renders the documented hint block") {
    SignatureHint hint = infer_signature(make_problem("assert foo(4) == 16"));
    CHECK(hint.function_name == "foo");
    CHECK(hint.signature_text == "foo(arg_int: int)");
    CHECK(hint.example_call == "foo(4)");
    CHECK(hint.rendered_hint ==
          "### Required function name for your reference 'foo()'\n"
          "### Function signature for your reference - foo(arg_int: int)\n"
          "### An example function call from private test cases - foo(4)");
}

TEST_CASE("duplicate kinds get positional suffixes") {
    SignatureHint hint = infer_signature(make_problem("assert add(1, 2) == 3"));
    CHECK(hint.signature_text == "add(arg_int1: int, arg_int2: int)");
    CHECK(hint.example_call == "add(1, 2)");
}

TEST_CASE("single occurrences keep unsuffixed names") {
    SignatureHint hint = infer_signature(make_problem("assert mix(1, 'a', 2) == 0"));
    CHECK(hint.signature_text == "mix(arg_int1: int, arg_str: str, arg_int2: int)");
}

TEST_CASE("none literal maps to a None annotation") {
    SignatureHint hint = infer_signature(make_problem("assert g(None) == 0"));
    CHECK(hint.signature_text == "g(arg_none: None)");
}

TEST_CASE("zero-argument hint renders an empty signature") {
    SignatureHint hint = infer_signature(make_problem("assert bar() == None"));
    CHECK(hint.signature_text == "bar()");
    CHECK(hint.example_call == "bar()");
}

TEST_CASE("hint never leaks the expected output") {
    struct Fixture {
        const char* test;
        const char* rhs;
    };
    const Fixture fixtures[] = {
        {"assert foo(4) == 16", "16"},
        {"assert add(1, 2) == 37", "37"},
        {"assert name('x') == 'expected'", "'expected'"},
        {"assert pack([unique0]) == [unique1]", "[unique1]"},
        {"assert depth({'k': 9}) == 81", "81"},
    };
    for (const auto& f : fixtures) {
        SignatureHint hint = infer_signature(make_problem(f.test));
        CAPTURE(f.test);
        CHECK(hint.rendered_hint.find(f.rhs) == std::string::npos);
        CHECK(hint.rendered_hint.find("==") == std::string::npos);
    }
}

TEST_CASE("parse of the example call round-trips name and arity") {
    const char* tests[] = {
        "assert foo(4) == 16",
        "assert add(1, 2) == 3",
        "assert f(\"ab\", [1, 2]) == 3",
        "assert merge({'a': 1}, {'b': 2}) == {}",
        "assert bar() == None",
    };
    for (const char* t : tests) {
        SignatureHint hint = infer_signature(make_problem(t));
        CallShape original = parse_assert(t);
        CallShape reparsed = parse_assert("assert " + hint.example_call);
        CAPTURE(t);
        CHECK(reparsed.function_name == original.function_name);
        CHECK(reparsed.args.size() == original.args.size());
    }
}

// Property: for generated call shapes over every literal kind, parsing the
// rendered assert recovers the callee, the arity, and each argument's kind.
TEST_CASE("random call shapes round-trip through parse_assert") {
    std::mt19937 rng(99);
    const std::pair<const char*, LiteralKind> pool[] = {
        {"7", LiteralKind::int_},
        {"-12", LiteralKind::int_},
        {"3.25", LiteralKind::float_},
        {"1e-3", LiteralKind::float_},
        {"'text'", LiteralKind::str_},
        {"\"a,b\"", LiteralKind::str_},
        {"'it\\'s'", LiteralKind::str_},
        {"True", LiteralKind::bool_},
        {"None", LiteralKind::none},
        {"[1, [2, 3]]", LiteralKind::list},
        {"{'k': [1, 2]}", LiteralKind::dict},
        {"{1, 2}", LiteralKind::set},
        {"(4, 'x')", LiteralKind::tuple},
        {"len('ab')", LiteralKind::other},
    };
    for (int trial = 0; trial < 200; ++trial) {
        std::string name = "fn_" + std::to_string(trial % 17);
        std::size_t arity = rng() % 5;
        std::vector<LiteralKind> kinds;
        std::string call = name + "(";
        for (std::size_t i = 0; i < arity; ++i) {
            const auto& [text, kind] = pool[rng() % std::size(pool)];
            if (i) call += ", ";
            call += text;
            kinds.push_back(kind);
        }
        call += ")";
        std::string statement = "assert " + call;
        if (rng() % 2) statement += " == [99, 'expected']";
        if (rng() % 3 == 0) statement += ", 'message'";
        CAPTURE(statement);
        CallShape shape = parse_assert(statement);
        CHECK(shape.function_name == name);
        REQUIRE(shape.args.size() == arity);
        for (std::size_t i = 0; i < arity; ++i) CHECK(shape.args[i].kind == kinds[i]);
    }
}

// Cross-check name and arity against the reference parser of the subject
// language, which stays independent of the scanner under test.
TEST_CASE("parse_assert agrees with the ast oracle") {
    const char* oracle_script = R"PY(
import ast, sys

def call_of(expr):
    if isinstance(expr, ast.Call):
        return expr
    for node in ast.walk(expr):
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name):
            return node
    return None

for line in sys.stdin.read().splitlines():
    if not line.strip():
        continue
    tree = ast.parse(line.strip())
    test = tree.body[0].test
    target = test.left if isinstance(test, ast.Compare) else test
    call = call_of(target)
    print(f"{call.func.id} {len(call.args)}")
)PY";

    const char* corpus[] = {
        "assert foo(4) == 16",
        "assert bar() == None",
        "assert f(\"ab\", [1, 2]) == 3",
        "assert count_chars('a,b,c') == 5",
        "assert merge({'a': 1}, {'b': 2}) == {'a': 1, 'b': 2}",
        "assert union({1, 2}, {3}) == {1, 2, 3}",
        "assert swap((1, 2)) == (2, 1)",
        "assert area(2.5) == 6.25",
        "assert toggle(True) == False",
        "assert g(None) == 0",
        "assert pick([1, 2], 1, 'k') == 2",
        "assert is_valid('x')",
    };

    testutil::TempDir dir;
    auto script = dir.write("oracle.py", oracle_script);
    std::string input;
    for (const char* t : corpus) input += std::string(t) + "\n";
    auto input_file = dir.write("corpus.txt", input);
    std::string command =
        "python3 " + script.string() + " < " + input_file.string() + " 2>/dev/null";
    FILE* pipe = popen(command.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::string output;
    char buf[256];
    while (fgets(buf, sizeof buf, pipe)) output += buf;
    int rc = pclose(pipe);
    if (rc != 0) {
        MESSAGE("oracle interpreter unavailable; skipping cross-check");
        return;
    }

    std::size_t pos = 0;
    for (const char* t : corpus) {
        std::size_t nl = output.find('\n', pos);
        REQUIRE(nl != std::string::npos);
        std::string expected = output.substr(pos, nl - pos);
        pos = nl + 1;
        CallShape shape = parse_assert(t);
        std::string actual = shape.function_name + " " + std::to_string(shape.args.size());
        CAPTURE(t);
        CHECK(actual == expected);
    }
}
