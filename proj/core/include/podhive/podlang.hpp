#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "podhive/error.hpp"

/// podlang: the small deterministic language of the embedded kernel.
///
///   program := item*
///   item    := "let" IDENT "=" expr ";"
///            | "fn" IDENT "(" [IDENT ("," IDENT)*] ")" "=" expr ";"
///            | "import" STRING IDENT ("," IDENT)* ";"
///            | expr [";"]                      -- only as the final item
///   expr    := "if" expr "then" expr "else" expr | equality
///   equality:= compare ("==" compare)*
///   compare := additive ("<" additive)*
///   additive:= term (("+" | "-") term)*
///   term    := unary (("*" | "/") unary)*
///   unary   := "-" unary | primary
///   primary := INT | STRING | IDENT | IDENT "(" [expr ("," expr)*] ")"
///            | "(" expr ")"
///
/// `#` starts a comment that runs to the end of the line. `print` is a
/// reserved builtin.
namespace podhive::podlang {

struct SourcePos {
  std::size_t line = 1;
  std::size_t column = 1;
};

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

enum class BinOpKind { Add, Sub, Mul, Div, Less, Equal };

struct IntLit {
  std::int64_t value = 0;
};
struct StrLit {
  std::string value;
};
struct VarRef {
  std::string name;
};
struct BinOp {
  BinOpKind op;
  ExprPtr lhs;
  ExprPtr rhs;
};
struct Call {
  std::string callee;
  std::vector<ExprPtr> args;
};
struct If {
  ExprPtr cond;
  ExprPtr then_branch;
  ExprPtr else_branch;
};

struct Expr {
  std::variant<IntLit, StrLit, VarRef, BinOp, Call, If> node;
  SourcePos pos;
};

struct LetStmt {
  std::string name;
  ExprPtr value;
};
struct FnStmt {
  std::string name;
  std::vector<std::string> params;
  ExprPtr body;
};
/// Binds names taken from another namespace by tree path. The engine issues
/// the import; inside the kernel the statement asserts the names are bound.
struct ImportStmt {
  std::string path;
  std::vector<std::string> names;
};
struct BareExpr {
  ExprPtr expr;
};

using Item = std::variant<LetStmt, FnStmt, ImportStmt, BareExpr>;

struct Program {
  std::vector<Item> items;
};

/// Statements executed for effect plus the optional trailing expression.
struct CodeParts {
  std::vector<Item> statements;
  std::optional<ExprPtr> expr;
};

inline constexpr std::string_view kPrintBuiltin = "print";
inline constexpr std::size_t kMaxNesting = 200;

/// Throws Error("SyntaxError") with "line:column: message".
Program parse(std::string_view code);
ExprPtr parse_expression(std::string_view code);

CodeParts code2parts(const Program& program);

/// let/fn names in definition order, without duplicates.
std::vector<std::string> defined_names(const Program& program);

bool is_identifier(std::string_view text);

std::string to_source(const Program& program);
std::string to_source(const Item& item);
std::string to_source(const Expr& expr);

/// Builders used by the parser and by code that synthesizes programs.
ExprPtr make_expr(decltype(Expr::node) node, SourcePos pos = {});

}  // namespace podhive::podlang
