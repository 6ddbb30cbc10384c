#include "support/flat_oracle.hpp"

#include <algorithm>
#include <regex>

namespace podhive::testing {

using namespace podlang;

namespace {
constexpr const char* kFlatNs = "/flat";
}

std::string strip_mangling(const std::string& display) {
  static const std::regex fn_re(R"(<fn m\d+_)");
  return std::regex_replace(display, fn_re, "<fn ");
}

Outcome outcome_of(const Value* value) {
  if (!value) return "none";
  return "ok:" + strip_mangling(display(*value));
}

Outcome outcome_of_error(const std::string& ename) { return "error:" + ename; }

FlatOracle::FlatOracle(const Tree& tree)
    : tree_(tree), resolver_(tree, extractor_) {
  walk(tree_.root());
}

std::string FlatOracle::tag(const Namespace& ns) {
  auto it = tags_.find(ns);
  if (it == tags_.end()) {
    it = tags_.emplace(ns, "m" + std::to_string(tags_.size()) + "_").first;
  }
  return it->second;
}

std::string FlatOracle::target(const std::string& name, const NodeId& scope) {
  auto r = resolver_.try_resolve(name, scope);
  return tag(r ? r->source_ns : tree_.namespace_of(scope)) + name;
}

ExprPtr FlatOracle::rename(const ExprPtr& e, const NodeId& scope,
                           const std::vector<std::string>& params) {
  auto is_param = [&](const std::string& n) {
    return std::find(params.begin(), params.end(), n) != params.end();
  };
  return std::visit(
      [&](const auto& n) -> ExprPtr {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, VarRef>) {
          if (is_param(n.name)) return e;
          return make_expr(VarRef{target(n.name, scope)}, e->pos);
        } else if constexpr (std::is_same_v<T, BinOp>) {
          return make_expr(BinOp{n.op, rename(n.lhs, scope, params),
                                 rename(n.rhs, scope, params)},
                           e->pos);
        } else if constexpr (std::is_same_v<T, If>) {
          return make_expr(If{rename(n.cond, scope, params),
                              rename(n.then_branch, scope, params),
                              rename(n.else_branch, scope, params)},
                           e->pos);
        } else if constexpr (std::is_same_v<T, Call>) {
          std::vector<ExprPtr> args;
          for (const ExprPtr& a : n.args) args.push_back(rename(a, scope, params));
          std::string callee = n.callee;
          if (!is_param(callee) && callee != kPrintBuiltin) {
            callee = target(callee, scope);
          }
          return make_expr(Call{callee, std::move(args)}, e->pos);
        } else {
          return e;
        }
      },
      e->node);
}

Program FlatOracle::rename_program(const Program& p, const NodeId& scope) {
  Program out;
  std::string own = tag(tree_.namespace_of(scope));
  for (const Item& item : p.items) {
    if (const auto* let = std::get_if<LetStmt>(&item)) {
      out.items.push_back(LetStmt{own + let->name, rename(let->value, scope, {})});
    } else if (const auto* fn = std::get_if<FnStmt>(&item)) {
      out.items.push_back(
          FnStmt{own + fn->name, fn->params, rename(fn->body, scope, fn->params)});
    } else if (const auto* imp = std::get_if<ImportStmt>(&item)) {
      ImportStmt renamed{imp->path, {}};
      for (const std::string& n : imp->names) renamed.names.push_back(target(n, scope));
      out.items.push_back(std::move(renamed));
    } else if (const auto* bare = std::get_if<BareExpr>(&item)) {
      out.items.push_back(BareExpr{rename(bare->expr, scope, {})});
    }
  }
  return out;
}

void FlatOracle::walk(const NodeId& deck) {
  const Node& d = tree_.node(deck);
  for (const NodeId& c : d.children) {
    if (tree_.node(c).is_deck()) walk(c);
  }
  for (const NodeId& c : d.children) {
    if (tree_.node(c).is_pod()) run_pod(c);
  }
}

void FlatOracle::run_pod(const NodeId& pod) {
  NodeId scope = tree_.scope_of(pod);
  Outcome outcome;
  try {
    Program renamed = rename_program(parse(tree_.node(pod).code), scope);
    mangled_[pod] = to_source(renamed);
    auto value = kernel_.eval_program(kFlatNs, renamed);
    outcome = value ? outcome_of(&*value) : outcome_of(nullptr);
  } catch (const Error& e) {
    outcome = outcome_of_error(e.code());
  }
  outcomes_.emplace_back(pod, outcome);
}

Outcome FlatOracle::probe(const NodeId& scope, const std::string& expr) {
  try {
    ExprPtr renamed = rename(parse_expression(expr), tree_.scope_of(scope), {});
    Value v = kernel_.eval_program(kFlatNs, Program{{BareExpr{renamed}}}).value();
    return outcome_of(&v);
  } catch (const Error& e) {
    return outcome_of_error(e.code());
  }
}

std::string FlatOracle::mangled_code(const NodeId& pod) const {
  auto it = mangled_.find(pod);
  return it == mangled_.end() ? std::string() : it->second;
}

}  // namespace podhive::testing
