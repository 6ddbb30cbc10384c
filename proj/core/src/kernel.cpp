#include "podhive/kernel.hpp"

#include <limits>
#include <unordered_map>

namespace podhive::podlang {

namespace {

[[noreturn]] void fail(const char* ename, const std::string& msg) {
  throw KernelError(ename, msg);
}

[[noreturn]] void undefined(const std::string& name, const std::string& ns) {
  fail("UndefinedName", "name '" + name + "' is not defined in " + ns);
}

const char* type_name(const Value& v) {
  if (v.is_int()) return "int";
  if (v.is_str()) return "str";
  return "function";
}

std::int64_t checked(std::int64_t a, std::int64_t b, BinOpKind op) {
  std::int64_t r = 0;
  bool overflow = false;
  switch (op) {
    case BinOpKind::Add: overflow = __builtin_add_overflow(a, b, &r); break;
    case BinOpKind::Sub: overflow = __builtin_sub_overflow(a, b, &r); break;
    case BinOpKind::Mul: overflow = __builtin_mul_overflow(a, b, &r); break;
    case BinOpKind::Div:
      if (b == 0) fail("DivideByZero", "integer division by zero");
      if (a == std::numeric_limits<std::int64_t>::min() && b == -1) {
        overflow = true;
      } else {
        r = a / b;
      }
      break;
    default: break;
  }
  if (overflow) fail("OverflowError", "integer overflow");
  return r;
}

using Locals = std::unordered_map<std::string, Value>;

class Evaluator {
 public:
  Evaluator(std::size_t limit, const StdoutSink& out) : limit_(limit), out_(out) {}

  Value eval(const Expr& e, const ModuleEnv& mod, const Locals* locals) {
    return std::visit([&](const auto& n) { return eval_node(n, mod, locals); },
                      e.node);
  }

 private:
  Value eval_node(const IntLit& n, const ModuleEnv&, const Locals*) {
    return Value::integer(n.value);
  }

  Value eval_node(const StrLit& n, const ModuleEnv&, const Locals*) {
    return Value::string(n.value);
  }

  const Value& lookup(const std::string& name, const ModuleEnv& mod,
                      const Locals* locals) {
    if (locals) {
      auto it = locals->find(name);
      if (it != locals->end()) return it->second;
    }
    if (const Value* v = mod.lookup(name)) return *v;
    undefined(name, mod.ns());
  }

  Value eval_node(const VarRef& n, const ModuleEnv& mod, const Locals* locals) {
    return lookup(n.name, mod, locals);
  }

  Value eval_node(const BinOp& n, const ModuleEnv& mod, const Locals* locals) {
    Value a = eval(*n.lhs, mod, locals);
    Value b = eval(*n.rhs, mod, locals);
    switch (n.op) {
      case BinOpKind::Equal:
        if (a.is_fn() || b.is_fn()) fail("TypeError", "cannot compare functions");
        return Value::integer(a.v == b.v ? 1 : 0);
      case BinOpKind::Less:
        if (a.is_int() && b.is_int()) return Value::integer(a.as_int() < b.as_int());
        if (a.is_str() && b.is_str()) return Value::integer(a.as_str() < b.as_str());
        break;
      case BinOpKind::Add:
        if (a.is_str() && b.is_str()) return Value::string(a.as_str() + b.as_str());
        [[fallthrough]];
      default:
        if (a.is_int() && b.is_int()) {
          return Value::integer(checked(a.as_int(), b.as_int(), n.op));
        }
    }
    fail("TypeError", std::string("unsupported operand types ") + type_name(a) +
                          " and " + type_name(b));
  }

  Value eval_node(const If& n, const ModuleEnv& mod, const Locals* locals) {
    Value c = eval(*n.cond, mod, locals);
    if (!c.is_int()) fail("TypeError", "condition must be an int");
    return eval(c.as_int() != 0 ? *n.then_branch : *n.else_branch, mod, locals);
  }

  Value eval_node(const Call& n, const ModuleEnv& mod, const Locals* locals) {
    const Value* callee = nullptr;
    if (locals) {
      auto it = locals->find(n.callee);
      if (it != locals->end()) callee = &it->second;
    }
    if (!callee) callee = mod.lookup(n.callee);
    if (!callee) {
      if (n.callee == kPrintBuiltin) return print(n, mod, locals);
      undefined(n.callee, mod.ns());
    }
    if (!callee->is_fn()) fail("NotCallable", "'" + n.callee + "' is not a function");
    // Hold the function alive in case evaluating the arguments rebinds it.
    auto fn = std::get<std::shared_ptr<const Function>>(callee->v);
    if (n.args.size() != fn->params.size()) {
      fail("ArityMismatch", fn->name + "() takes " +
                                std::to_string(fn->params.size()) +
                                " arguments, got " + std::to_string(n.args.size()));
    }
    Locals frame;
    for (std::size_t i = 0; i < n.args.size(); ++i) {
      frame.insert_or_assign(fn->params[i], eval(*n.args[i], mod, locals));
    }
    if (depth_ >= limit_) fail("RecursionLimit", "maximum call depth exceeded");
    ++depth_;
    struct Pop {
      std::size_t& d;
      ~Pop() { --d; }
    } pop{depth_};
    return eval(*fn->body, *fn->module, &frame);
  }

  Value print(const Call& n, const ModuleEnv& mod, const Locals* locals) {
    if (n.args.size() != 1) {
      fail("ArityMismatch",
           "print() takes 1 argument, got " + std::to_string(n.args.size()));
    }
    Value v = eval(*n.args[0], mod, locals);
    if (out_) out_((v.is_str() ? v.as_str() : display(v)) + "\n");
    return v;
  }

  std::size_t limit_;
  const StdoutSink& out_;
  std::size_t depth_ = 0;
};

}  // namespace

std::string display(const Value& value) {
  if (value.is_int()) return std::to_string(value.as_int());
  if (value.is_str()) {
    return to_source(Expr{StrLit{value.as_str()}, {}});
  }
  const Function& f = value.as_fn();
  return "<fn " + f.name + "/" + std::to_string(f.params.size()) + ">";
}

const Value* ModuleEnv::lookup(const std::string& name) const {
  auto it = bindings_.find(name);
  return it == bindings_.end() ? nullptr : &it->second;
}

void ModuleEnv::bind(const std::string& name, Value value) {
  bindings_.insert_or_assign(name, std::move(value));
}

bool ModuleEnv::unbind(const std::string& name) { return bindings_.erase(name) > 0; }

Kernel::Kernel(std::size_t recursion_limit) : recursion_limit_(recursion_limit) {}

ModuleEnv& Kernel::get_module(const std::string& ns) {
  auto it = nsmap_.find(ns);
  if (it == nsmap_.end()) {
    it = nsmap_.emplace(ns, std::make_unique<ModuleEnv>(ns)).first;
  }
  return *it->second;
}

bool Kernel::has_module(const std::string& ns) const { return nsmap_.count(ns) > 0; }

std::optional<Value> Kernel::eval_in_ns(const std::string& ns, std::string_view code,
                                        const StdoutSink& out) {
  Program program;
  try {
    program = parse(code);
  } catch (const KernelError&) {
    throw;
  } catch (const Error& e) {
    throw KernelError(e.code(), e.what());
  }
  return eval_program(ns, program, out);
}

std::optional<Value> Kernel::eval_program(const std::string& ns,
                                          const Program& program,
                                          const StdoutSink& out) {
  ModuleEnv& mod = get_module(ns);
  Evaluator ev(recursion_limit_, out);
  CodeParts parts = code2parts(program);
  for (const Item& item : parts.statements) {
    if (const auto* let = std::get_if<LetStmt>(&item)) {
      mod.bind(let->name, ev.eval(*let->value, mod, nullptr));
    } else if (const auto* fn = std::get_if<FnStmt>(&item)) {
      auto f = std::make_shared<const Function>(
          Function{fn->name, fn->params, fn->body, &mod});
      mod.bind(fn->name, Value{std::move(f)});
    } else if (const auto* imp = std::get_if<ImportStmt>(&item)) {
      for (const std::string& name : imp->names) {
        if (!mod.lookup(name)) {
          fail("UndefinedName", "name '" + name + "' imported from \"" + imp->path +
                                    "\" is not bound in " + ns);
        }
      }
    }
  }
  if (parts.expr) return ev.eval(**parts.expr, mod, nullptr);
  return std::nullopt;
}

void Kernel::add_import(const std::string& from, const std::string& to,
                        const std::string& name) {
  const Value* v = get_module(from).lookup(name);
  if (!v) undefined(name, from);
  Value copy = *v;
  get_module(to).bind(name, std::move(copy));
}

void Kernel::delete_import(const std::string& ns, const std::string& name) {
  if (!get_module(ns).unbind(name)) undefined(name, ns);
}

void Kernel::delete_names(const std::string& ns, const std::vector<std::string>& names) {
  ModuleEnv& mod = get_module(ns);
  for (const std::string& name : names) mod.unbind(name);
}

std::vector<std::string> Kernel::namespaces() const {
  std::vector<std::string> out;
  for (const auto& [ns, _] : nsmap_) out.push_back(ns);
  return out;
}

}  // namespace podhive::podlang
