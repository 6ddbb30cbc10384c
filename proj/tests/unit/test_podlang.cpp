#include <doctest.h>

#include "podhive/podlang.hpp"

using namespace podhive;
using namespace podhive::podlang;

namespace {

std::string syntax_error(std::string_view code) {
  try {
    parse(code);
  } catch (const Error& e) {
    return e.code() + " " + e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("let then bare expression") {
  Program p = parse("let x = 1; x + 1");
  REQUIRE(p.items.size() == 2);
  CHECK(std::holds_alternative<LetStmt>(p.items[0]));
  CHECK(std::holds_alternative<BareExpr>(p.items[1]));
  CHECK(to_source(p) == "let x = 1;\n(x + 1)");
}

TEST_CASE("function definition") {
  Program p = parse("fn f(a,b) = a*b;");
  REQUIRE(p.items.size() == 1);
  const auto& fn = std::get<FnStmt>(p.items[0]);
  CHECK(fn.name == "f");
  CHECK(fn.params == std::vector<std::string>{"a", "b"});
  CHECK(to_source(*fn.body) == "(a * b)");
}

TEST_CASE("bare expression must be final") {
  CHECK(syntax_error("1+2; let x=3;").rfind("SyntaxError 1:1", 0) == 0);
}

TEST_CASE("syntax errors carry line and column") {
  CHECK(syntax_error("let x = ;").rfind("SyntaxError 1:9", 0) == 0);
  CHECK(syntax_error("let x = 1;\nlet = 2;").rfind("SyntaxError 2:5", 0) == 0);
  CHECK(syntax_error("\"open").rfind("SyntaxError", 0) == 0);
  CHECK(syntax_error("let print = 1;").rfind("SyntaxError", 0) == 0);
  CHECK(syntax_error("fn f(a, a) = a;").rfind("SyntaxError", 0) == 0);
  CHECK(syntax_error("99999999999999999999").rfind("SyntaxError", 0) == 0);
  CHECK(syntax_error("1 $ 2").rfind("SyntaxError 1:3", 0) == 0);
}

TEST_CASE("nesting limit") {
  std::string deep(kMaxNesting + 5, '(');
  deep += "1";
  deep += std::string(kMaxNesting + 5, ')');
  CHECK(syntax_error(deep).rfind("SyntaxError", 0) == 0);
}

TEST_CASE("precedence and unary minus") {
  CHECK(to_source(*parse_expression("1 + 2 * 3")) == "(1 + (2 * 3))");
  CHECK(to_source(*parse_expression("1 < 2 == 1")) == "((1 < 2) == 1)");
  CHECK(to_source(*parse_expression("-x - 1")) == "((0 - x) - 1)");
  CHECK(to_source(*parse_expression("if a then b else c + 1")) ==
        "(if a then b else (c + 1))");
}

TEST_CASE("comments, strings and imports") {
  Program p = parse("# header\nimport \"../D\" d, e; # trailing\n\"a\\n\\\"b\"");
  REQUIRE(p.items.size() == 2);
  const auto& imp = std::get<ImportStmt>(p.items[0]);
  CHECK(imp.path == "../D");
  CHECK(imp.names == std::vector<std::string>{"d", "e"});
  CHECK(to_source(p.items[1]) == "\"a\\n\\\"b\"");
}

TEST_CASE("code2parts splits the trailing expression") {
  auto parts = code2parts(parse("let a = 1; a"));
  CHECK(parts.statements.size() == 1);
  CHECK(parts.expr.has_value());
  parts = code2parts(parse("let a = 1; let b = 2;"));
  CHECK(parts.statements.size() == 2);
  CHECK_FALSE(parts.expr.has_value());
  parts = code2parts(parse("3"));
  CHECK(parts.statements.empty());
  CHECK(parts.expr.has_value());
}

TEST_CASE("defined names") {
  CHECK(defined_names(parse("fn inc(n) = n + 1;")) == std::vector<std::string>{"inc"});
  CHECK(defined_names(parse("let x = 1; let y = 2; x + y")) ==
        std::vector<std::string>{"x", "y"});
  CHECK(defined_names(parse("1 + 2")).empty());
  CHECK(defined_names(parse("let x = 1; let x = 2;")) == std::vector<std::string>{"x"});
}

TEST_CASE("printing round trips") {
  const char* programs[] = {
      "let x = 1;\nfn f(a, b) = (if (a < b) then a else (b - 1));\nf(x, \"s\")",
      "import \"/A/B\" q;\nprint(q(1))",
  };
  for (const char* src : programs) {
    Program p = parse(src);
    CHECK(to_source(parse(to_source(p))) == to_source(p));
  }
}

TEST_CASE("identifiers") {
  CHECK(is_identifier("a_1"));
  CHECK_FALSE(is_identifier("1a"));
  CHECK_FALSE(is_identifier("let"));
  CHECK_FALSE(is_identifier(""));
}
