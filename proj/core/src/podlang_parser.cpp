#include <cctype>
#include <charconv>
#include <set>
#include <sstream>

#include "podhive/podlang.hpp"

namespace podhive::podlang {

namespace {

enum class Tok {
  Int,
  Str,
  Ident,
  Let,
  Fn,
  Import,
  If,
  Then,
  Else,
  LParen,
  RParen,
  Comma,
  Semi,
  Assign,
  EqEq,
  Less,
  Plus,
  Minus,
  Star,
  Slash,
  End,
};

struct Token {
  Tok kind;
  std::string text;
  std::int64_t int_value = 0;
  SourcePos pos;
};

[[noreturn]] void syntax_error(SourcePos pos, const std::string& msg) {
  throw Error("SyntaxError", std::to_string(pos.line) + ":" +
                                 std::to_string(pos.column) + ": " + msg);
}

const char* describe(Tok t) {
  switch (t) {
    case Tok::Int: return "integer";
    case Tok::Str: return "string";
    case Tok::Ident: return "identifier";
    case Tok::Let: return "'let'";
    case Tok::Fn: return "'fn'";
    case Tok::Import: return "'import'";
    case Tok::If: return "'if'";
    case Tok::Then: return "'then'";
    case Tok::Else: return "'else'";
    case Tok::LParen: return "'('";
    case Tok::RParen: return "')'";
    case Tok::Comma: return "','";
    case Tok::Semi: return "';'";
    case Tok::Assign: return "'='";
    case Tok::EqEq: return "'=='";
    case Tok::Less: return "'<'";
    case Tok::Plus: return "'+'";
    case Tok::Minus: return "'-'";
    case Tok::Star: return "'*'";
    case Tok::Slash: return "'/'";
    case Tok::End: return "end of input";
  }
  return "token";
}

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    for (;;) {
      skip_space();
      SourcePos pos = pos_;
      if (i_ >= src_.size()) {
        out.push_back({Tok::End, "", 0, pos});
        return out;
      }
      char c = src_[i_];
      if (std::isdigit(static_cast<unsigned char>(c))) {
        out.push_back(number(pos));
      } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        out.push_back(word(pos));
      } else if (c == '"') {
        out.push_back(string(pos));
      } else {
        out.push_back(punct(pos));
      }
    }
  }

 private:
  char peek(std::size_t ahead = 0) const {
    return i_ + ahead < src_.size() ? src_[i_ + ahead] : '\0';
  }

  void advance() {
    if (src_[i_] == '\n') {
      ++pos_.line;
      pos_.column = 1;
    } else {
      ++pos_.column;
    }
    ++i_;
  }

  void skip_space() {
    while (i_ < src_.size()) {
      char c = src_[i_];
      if (c == '#') {
        while (i_ < src_.size() && src_[i_] != '\n') advance();
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else {
        break;
      }
    }
  }

  Token number(SourcePos pos) {
    std::size_t start = i_;
    while (std::isdigit(static_cast<unsigned char>(peek()))) advance();
    std::string_view digits = src_.substr(start, i_ - start);
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
    if (ec != std::errc()) syntax_error(pos, "integer literal out of range");
    if (std::isalpha(static_cast<unsigned char>(peek())) || peek() == '_') {
      syntax_error(pos_, "unexpected character after number");
    }
    return {Tok::Int, std::string(digits), v, pos};
  }

  Token word(SourcePos pos) {
    std::size_t start = i_;
    while (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_') {
      advance();
    }
    std::string text(src_.substr(start, i_ - start));
    static const std::pair<const char*, Tok> keywords[] = {
        {"let", Tok::Let},   {"fn", Tok::Fn},     {"import", Tok::Import},
        {"if", Tok::If},     {"then", Tok::Then}, {"else", Tok::Else},
    };
    for (const auto& [kw, tok] : keywords) {
      if (text == kw) return {tok, text, 0, pos};
    }
    return {Tok::Ident, text, 0, pos};
  }

  Token string(SourcePos pos) {
    advance();  // opening quote
    std::string value;
    for (;;) {
      if (i_ >= src_.size()) syntax_error(pos, "unterminated string literal");
      char c = src_[i_];
      if (c == '"') {
        advance();
        break;
      }
      if (c == '\n') syntax_error(pos, "newline in string literal");
      if (c == '\\') {
        advance();
        if (i_ >= src_.size()) syntax_error(pos, "unterminated string literal");
        char e = src_[i_];
        switch (e) {
          case 'n': value += '\n'; break;
          case 't': value += '\t'; break;
          case '"': value += '"'; break;
          case '\\': value += '\\'; break;
          default: syntax_error(pos_, std::string("unknown escape \\") + e);
        }
        advance();
        continue;
      }
      value += c;
      advance();
    }
    return {Tok::Str, value, 0, pos};
  }

  Token punct(SourcePos pos) {
    char c = peek();
    auto one = [&](Tok t) {
      advance();
      return Token{t, std::string(1, c), 0, pos};
    };
    switch (c) {
      case '(': return one(Tok::LParen);
      case ')': return one(Tok::RParen);
      case ',': return one(Tok::Comma);
      case ';': return one(Tok::Semi);
      case '<': return one(Tok::Less);
      case '+': return one(Tok::Plus);
      case '-': return one(Tok::Minus);
      case '*': return one(Tok::Star);
      case '/': return one(Tok::Slash);
      case '=':
        if (peek(1) == '=') {
          advance();
          advance();
          return {Tok::EqEq, "==", 0, pos};
        }
        return one(Tok::Assign);
      default:
        syntax_error(pos, std::string("unexpected character '") + c + "'");
    }
  }

  std::string_view src_;
  std::size_t i_ = 0;
  SourcePos pos_;
};

class Parser {
 public:
  explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

  Program program() {
    Program prog;
    while (cur().kind != Tok::End) {
      SourcePos pos = cur().pos;
      Item item = this->item();
      bool bare = std::holds_alternative<BareExpr>(item);
      prog.items.push_back(std::move(item));
      if (bare && cur().kind != Tok::End) {
        syntax_error(pos, "a bare expression may only appear as the final item");
      }
    }
    return prog;
  }

  ExprPtr lone_expression() {
    ExprPtr e = expr();
    accept(Tok::Semi);
    expect(Tok::End);
    return e;
  }

 private:
  const Token& cur() const { return toks_[i_]; }

  Token take() { return toks_[i_++]; }

  bool accept(Tok t) {
    if (cur().kind != t) return false;
    ++i_;
    return true;
  }

  Token expect(Tok t) {
    if (cur().kind != t) {
      syntax_error(cur().pos, std::string("expected ") + describe(t) +
                                  ", found " + describe(cur().kind));
    }
    return take();
  }

  std::string binder() {
    Token t = expect(Tok::Ident);
    if (t.text == kPrintBuiltin) {
      syntax_error(t.pos, "'print' is a reserved builtin");
    }
    return t.text;
  }

  Item item() {
    if (accept(Tok::Let)) {
      std::string name = binder();
      expect(Tok::Assign);
      ExprPtr value = expr();
      expect(Tok::Semi);
      return LetStmt{std::move(name), std::move(value)};
    }
    if (accept(Tok::Fn)) {
      std::string name = binder();
      expect(Tok::LParen);
      std::vector<std::string> params;
      std::set<std::string> seen;
      if (cur().kind != Tok::RParen) {
        do {
          SourcePos p = cur().pos;
          std::string param = binder();
          if (!seen.insert(param).second) {
            syntax_error(p, "duplicate parameter '" + param + "'");
          }
          params.push_back(std::move(param));
        } while (accept(Tok::Comma));
      }
      expect(Tok::RParen);
      expect(Tok::Assign);
      ExprPtr body = expr();
      expect(Tok::Semi);
      return FnStmt{std::move(name), std::move(params), std::move(body)};
    }
    if (accept(Tok::Import)) {
      Token path = expect(Tok::Str);
      std::vector<std::string> names;
      do {
        names.push_back(binder());
      } while (accept(Tok::Comma));
      expect(Tok::Semi);
      return ImportStmt{path.text, std::move(names)};
    }
    ExprPtr e = expr();
    accept(Tok::Semi);
    return BareExpr{std::move(e)};
  }

  struct DepthGuard {
    DepthGuard(std::size_t& d, SourcePos pos) : depth(d) {
      if (++depth > kMaxNesting) syntax_error(pos, "expression nested too deeply");
    }
    ~DepthGuard() { --depth; }
    std::size_t& depth;
  };

  ExprPtr expr() {
    DepthGuard guard(depth_, cur().pos);
    if (cur().kind == Tok::If) {
      SourcePos pos = take().pos;
      ExprPtr c = expr();
      expect(Tok::Then);
      ExprPtr t = expr();
      expect(Tok::Else);
      ExprPtr e = expr();
      return make_expr(If{std::move(c), std::move(t), std::move(e)}, pos);
    }
    return equality();
  }

  ExprPtr binary(ExprPtr lhs, BinOpKind op, ExprPtr rhs, SourcePos pos) {
    return make_expr(BinOp{op, std::move(lhs), std::move(rhs)}, pos);
  }

  ExprPtr equality() {
    ExprPtr lhs = compare();
    while (cur().kind == Tok::EqEq) {
      SourcePos pos = take().pos;
      lhs = binary(std::move(lhs), BinOpKind::Equal, compare(), pos);
    }
    return lhs;
  }

  ExprPtr compare() {
    ExprPtr lhs = additive();
    while (cur().kind == Tok::Less) {
      SourcePos pos = take().pos;
      lhs = binary(std::move(lhs), BinOpKind::Less, additive(), pos);
    }
    return lhs;
  }

  ExprPtr additive() {
    ExprPtr lhs = term();
    while (cur().kind == Tok::Plus || cur().kind == Tok::Minus) {
      Token op = take();
      BinOpKind k = op.kind == Tok::Plus ? BinOpKind::Add : BinOpKind::Sub;
      lhs = binary(std::move(lhs), k, term(), op.pos);
    }
    return lhs;
  }

  ExprPtr term() {
    ExprPtr lhs = unary();
    while (cur().kind == Tok::Star || cur().kind == Tok::Slash) {
      Token op = take();
      BinOpKind k = op.kind == Tok::Star ? BinOpKind::Mul : BinOpKind::Div;
      lhs = binary(std::move(lhs), k, unary(), op.pos);
    }
    return lhs;
  }

  ExprPtr unary() {
    if (cur().kind == Tok::Minus) {
      SourcePos pos = take().pos;
      DepthGuard guard(depth_, pos);
      ExprPtr operand = unary();
      return binary(make_expr(IntLit{0}, pos), BinOpKind::Sub, std::move(operand),
                    pos);
    }
    return primary();
  }

  ExprPtr primary() {
    const Token& t = cur();
    SourcePos pos = t.pos;
    switch (t.kind) {
      case Tok::Int: {
        std::int64_t v = take().int_value;
        return make_expr(IntLit{v}, pos);
      }
      case Tok::Str:
        return make_expr(StrLit{take().text}, pos);
      case Tok::Ident: {
        std::string name = take().text;
        if (accept(Tok::LParen)) {
          std::vector<ExprPtr> args;
          if (cur().kind != Tok::RParen) {
            do {
              args.push_back(expr());
            } while (accept(Tok::Comma));
          }
          expect(Tok::RParen);
          return make_expr(Call{std::move(name), std::move(args)}, pos);
        }
        return make_expr(VarRef{std::move(name)}, pos);
      }
      case Tok::LParen: {
        take();
        ExprPtr e = expr();
        expect(Tok::RParen);
        return e;
      }
      case Tok::If:
        return expr();
      default:
        syntax_error(pos, std::string("expected an expression, found ") +
                              describe(t.kind));
    }
  }

  std::vector<Token> toks_;
  std::size_t i_ = 0;
  std::size_t depth_ = 0;
};

const char* op_text(BinOpKind op) {
  switch (op) {
    case BinOpKind::Add: return "+";
    case BinOpKind::Sub: return "-";
    case BinOpKind::Mul: return "*";
    case BinOpKind::Div: return "/";
    case BinOpKind::Less: return "<";
    case BinOpKind::Equal: return "==";
  }
  return "?";
}

void quote(std::string& out, std::string_view s) {
  out += '"';
  for (char c : s) {
    switch (c) {
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      default: out += c;
    }
  }
  out += '"';
}

void print_expr(std::string& out, const Expr& e) {
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, IntLit>) {
          if (n.value < 0) {
            // Negative literals only arise from folding; keep them reparseable.
            out += "(0 - " + std::to_string(-(n.value + 1)) + " - 1)";
          } else {
            out += std::to_string(n.value);
          }
        } else if constexpr (std::is_same_v<T, StrLit>) {
          quote(out, n.value);
        } else if constexpr (std::is_same_v<T, VarRef>) {
          out += n.name;
        } else if constexpr (std::is_same_v<T, BinOp>) {
          out += '(';
          print_expr(out, *n.lhs);
          out += ' ';
          out += op_text(n.op);
          out += ' ';
          print_expr(out, *n.rhs);
          out += ')';
        } else if constexpr (std::is_same_v<T, Call>) {
          out += n.callee;
          out += '(';
          for (std::size_t i = 0; i < n.args.size(); ++i) {
            if (i) out += ", ";
            print_expr(out, *n.args[i]);
          }
          out += ')';
        } else {
          out += "(if ";
          print_expr(out, *n.cond);
          out += " then ";
          print_expr(out, *n.then_branch);
          out += " else ";
          print_expr(out, *n.else_branch);
          out += ')';
        }
      },
      e.node);
}

}  // namespace

ExprPtr make_expr(decltype(Expr::node) node, SourcePos pos) {
  return std::make_shared<const Expr>(Expr{std::move(node), pos});
}

Program parse(std::string_view code) {
  return Parser(Lexer(code).run()).program();
}

ExprPtr parse_expression(std::string_view code) {
  return Parser(Lexer(code).run()).lone_expression();
}

CodeParts code2parts(const Program& program) {
  CodeParts parts;
  for (const Item& item : program.items) {
    if (const auto* bare = std::get_if<BareExpr>(&item)) {
      parts.expr = bare->expr;
    } else {
      parts.statements.push_back(item);
    }
  }
  return parts;
}

std::vector<std::string> defined_names(const Program& program) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const Item& item : program.items) {
    const std::string* name = nullptr;
    if (const auto* let = std::get_if<LetStmt>(&item)) name = &let->name;
    if (const auto* fn = std::get_if<FnStmt>(&item)) name = &fn->name;
    if (name && seen.insert(*name).second) out.push_back(*name);
  }
  return out;
}

bool is_identifier(std::string_view text) {
  if (text.empty()) return false;
  if (!(std::isalpha(static_cast<unsigned char>(text[0])) || text[0] == '_')) {
    return false;
  }
  for (char c : text) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
  }
  static const std::set<std::string_view> keywords{"let", "fn",   "import",
                                                   "if",  "then", "else"};
  return keywords.count(text) == 0;
}

std::string to_source(const Expr& expr) {
  std::string out;
  print_expr(out, expr);
  return out;
}

std::string to_source(const Item& item) {
  std::string out;
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, LetStmt>) {
          out += "let " + n.name + " = ";
          print_expr(out, *n.value);
          out += ';';
        } else if constexpr (std::is_same_v<T, FnStmt>) {
          out += "fn " + n.name + "(";
          for (std::size_t i = 0; i < n.params.size(); ++i) {
            if (i) out += ", ";
            out += n.params[i];
          }
          out += ") = ";
          print_expr(out, *n.body);
          out += ';';
        } else if constexpr (std::is_same_v<T, ImportStmt>) {
          out += "import ";
          quote(out, n.path);
          out += ' ';
          for (std::size_t i = 0; i < n.names.size(); ++i) {
            if (i) out += ", ";
            out += n.names[i];
          }
          out += ';';
        } else {
          print_expr(out, *n.expr);
        }
      },
      item);
  return out;
}

std::string to_source(const Program& program) {
  std::string out;
  for (std::size_t i = 0; i < program.items.size(); ++i) {
    if (i) out += '\n';
    out += to_source(program.items[i]);
  }
  return out;
}

}  // namespace podhive::podlang
