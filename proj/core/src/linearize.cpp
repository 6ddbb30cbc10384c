#include <algorithm>
#include <functional>
#include <map>

#include "podhive/names.hpp"
#include "podhive/podlang.hpp"
#include "podhive/repo_store.hpp"

namespace podhive::store {

using namespace podlang;

namespace {

class Linearizer {
 public:
  explicit Linearizer(const Tree& tree) : tree_(tree), resolver_(tree, extractor_) {
    for (const NodeId& id : tree.preorder()) {
      if (tree.owns_namespace(id)) {
        tags_.emplace(tree.namespace_of(id), "m" + std::to_string(tags_.size()) + "_");
      }
    }
  }

  std::string run() {
    walk(tree_.root());
    return out_;
  }

 private:
  void walk(const NodeId& deck) {
    const Node& d = tree_.node(deck);
    for (const NodeId& c : d.children) {
      if (tree_.node(c).is_deck()) walk(c);
    }
    for (const NodeId& c : d.children) {
      if (tree_.node(c).is_pod()) emit(c);
    }
  }

  std::string target(const std::string& name, const NodeId& scope) const {
    auto r = resolver_.try_resolve(name, scope);
    return tags_.at(r ? r->source_ns : tree_.namespace_of(scope)) + name;
  }

  ExprPtr rename(const ExprPtr& e, const NodeId& scope,
                 const std::vector<std::string>& params) const {
    auto local = [&](const std::string& n) {
      return std::find(params.begin(), params.end(), n) != params.end();
    };
    return std::visit(
        [&](const auto& n) -> ExprPtr {
          using T = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<T, VarRef>) {
            return local(n.name) ? e : make_expr(VarRef{target(n.name, scope)}, e->pos);
          } else if constexpr (std::is_same_v<T, BinOp>) {
            return make_expr(
                BinOp{n.op, rename(n.lhs, scope, params), rename(n.rhs, scope, params)},
                e->pos);
          } else if constexpr (std::is_same_v<T, If>) {
            return make_expr(If{rename(n.cond, scope, params), rename(n.then_branch, scope, params),
                                rename(n.else_branch, scope, params)},
                             e->pos);
          } else if constexpr (std::is_same_v<T, Call>) {
            std::vector<ExprPtr> args;
            for (const ExprPtr& a : n.args) args.push_back(rename(a, scope, params));
            std::string callee = n.callee;
            if (!local(callee) && callee != kPrintBuiltin) callee = target(callee, scope);
            return make_expr(Call{callee, std::move(args)}, e->pos);
          } else {
            return e;
          }
        },
        e->node);
  }

  void emit(const NodeId& pod) {
    std::size_t k = position_++;
    last_result_.clear();
    NodeId scope = tree_.scope_of(pod);
    out_ += "# pod " + pod.value + " in " + tree_.namespace_of(scope) + "\n";
    Program program;
    try {
      program = parse(tree_.node(pod).code);
    } catch (const Error&) {
      // Kept verbatim so a batch run fails on it the same way.
      out_ += tree_.node(pod).code + "\n";
      return;
    }
    const std::string own = tags_.at(tree_.namespace_of(scope));
    Program renamed;
    for (const Item& item : program.items) {
      if (const auto* let = std::get_if<LetStmt>(&item)) {
        renamed.items.push_back(LetStmt{own + let->name, rename(let->value, scope, {})});
      } else if (const auto* fn = std::get_if<FnStmt>(&item)) {
        renamed.items.push_back(
            FnStmt{own + fn->name, fn->params, rename(fn->body, scope, fn->params)});
      } else if (const auto* imp = std::get_if<ImportStmt>(&item)) {
        ImportStmt copy{imp->path, {}};
        for (const std::string& n : imp->names) copy.names.push_back(target(n, scope));
        renamed.items.push_back(std::move(copy));
      } else if (const auto* bare = std::get_if<BareExpr>(&item)) {
        std::string result = "p" + std::to_string(k) + "_result";
        renamed.items.push_back(LetStmt{result, rename(bare->expr, scope, {})});
        last_result_ = result;
      }
    }
    if (!renamed.items.empty()) out_ += to_source(renamed) + "\n";
  }

 public:
  const std::string& last_result() const { return last_result_; }

 private:
  const Tree& tree_;
  rules::PodlangExtractor extractor_;
  rules::Resolver resolver_;
  std::map<Namespace, std::string> tags_;
  std::string out_;
  std::string last_result_;
  std::size_t position_ = 0;
};

}  // namespace

std::string export_linearized(const Tree& tree, const std::string& kernel_language) {
  if (kernel_language != "podlang") {
    throw Error("UnsupportedKernel",
                "single-file export needs podlang, not '" + kernel_language + "'");
  }
  Linearizer lin(tree);
  std::string program = lin.run();
  if (!lin.last_result().empty()) program += lin.last_result() + "\n";
  return program;
}

std::vector<std::pair<Namespace, std::string>> export_per_namespace(const Tree& tree) {
  std::vector<std::pair<Namespace, std::string>> out;
  std::map<Namespace, std::size_t> slot;
  std::function<void(const NodeId&)> walk = [&](const NodeId& deck) {
    const Node& d = tree.node(deck);
    for (const NodeId& c : d.children) {
      if (tree.node(c).is_deck()) walk(c);
    }
    for (const NodeId& c : d.children) {
      if (!tree.node(c).is_pod()) continue;
      Namespace ns = tree.namespace_of(c);
      auto [it, fresh] = slot.emplace(ns, out.size());
      if (fresh) out.emplace_back(ns, "");
      std::string& text = out[it->second].second;
      text += tree.node(c).code;
      if (!text.empty() && text.back() != '\n') text += '\n';
    }
  };
  walk(tree.root());
  return out;
}

}  // namespace podhive::store
