#include <doctest.h>

#include "capsule/pysrc.hpp"

using namespace capsule;

TEST_CASE("split_top_level respects brackets and strings") {
    auto parts = pysrc::split_top_level("1, [2, 3], \"a,b\", {4: 5}", ',');
    REQUIRE(parts.size() == 4);
    CHECK(pysrc::trim(parts[0]) == "1");
    CHECK(pysrc::trim(parts[1]) == "[2, 3]");
    CHECK(pysrc::trim(parts[2]) == "\"a,b\"");
    CHECK(pysrc::trim(parts[3]) == "{4: 5}");
}

TEST_CASE("split_top_level handles escaped quotes") {
    auto parts = pysrc::split_top_level("'it\\'s, fine', 2", ',');
    REQUIRE(parts.size() == 2);
    CHECK(pysrc::trim(parts[0]) == "'it\\'s, fine'");
}

TEST_CASE("find_top_level skips nested occurrences") {
    CHECK(pysrc::find_top_level("f(a == b) == c", "==") == 10);
    CHECK(pysrc::find_top_level("'=='", "==") == std::string_view::npos);
    CHECK(pysrc::find_top_level("x # ==", "==") == std::string_view::npos);
}

TEST_CASE("balanced") {
    CHECK(pysrc::balanced("f([1, {2: (3,)}])"));
    CHECK_FALSE(pysrc::balanced("f([1, 2"));
    CHECK_FALSE(pysrc::balanced("f(1))"));
    CHECK(pysrc::balanced("'(unclosed paren in string'"));
}

TEST_CASE("logical lines join bracket continuations") {
    auto scan = pysrc::logical_lines("x = [1,\n     2]\ny = 3\n");
    REQUIRE(scan.lines.size() == 2);
    CHECK(scan.lines[0].first_line == 0);
    CHECK(scan.lines[0].last_line == 1);
    CHECK(scan.lines[1].text == "y = 3");
    CHECK(scan.clean);
}

TEST_CASE("logical lines track triple-quoted strings") {
    auto scan = pysrc::logical_lines("s = \"\"\"\ndef ghost():\n    pass\n\"\"\"\nz = 1\n");
    REQUIRE(scan.lines.size() == 2);
    CHECK(scan.lines[0].last_line == 3);
    CHECK(scan.lines[1].text == "z = 1");
}

TEST_CASE("logical lines honor backslash continuation") {
    auto scan = pysrc::logical_lines("x = 1 + \\\n    2\n");
    REQUIRE(scan.lines.size() == 1);
    CHECK(scan.lines[0].last_line == 1);
}

TEST_CASE("unterminated triple quote flags unclean") {
    auto scan = pysrc::logical_lines("s = \"\"\"open\nmore\n");
    CHECK_FALSE(scan.clean);
}

TEST_CASE("blank and comment lines are marked blank") {
    auto scan = pysrc::logical_lines("# header\n\nx = 1\n");
    REQUIRE(scan.lines.size() == 3);
    CHECK(scan.lines[0].blank);
    CHECK(scan.lines[1].blank);
    CHECK_FALSE(scan.lines[2].blank);
}

TEST_CASE("indent counts leading whitespace") {
    auto scan = pysrc::logical_lines("def f():\n    return 1\n");
    REQUIRE(scan.lines.size() == 2);
    CHECK(scan.lines[0].indent == 0);
    CHECK(scan.lines[1].indent == 4);
}

TEST_CASE("is_identifier") {
    CHECK(pysrc::is_identifier("foo"));
    CHECK(pysrc::is_identifier("_x1"));
    CHECK_FALSE(pysrc::is_identifier("1x"));
    CHECK_FALSE(pysrc::is_identifier(""));
    CHECK_FALSE(pysrc::is_identifier("a-b"));
}
