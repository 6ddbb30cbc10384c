#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "podhive/error.hpp"
#include "podhive/podlang.hpp"

namespace podhive {

/// Failure raised by a kernel while evaluating user code. `ename()` is the
/// error class (SyntaxError, UndefinedName, ...), `evalue()` the message.
class KernelError : public Error {
 public:
  KernelError(std::string ename, const std::string& evalue)
      : Error(std::move(ename), evalue) {}

  const std::string& ename() const noexcept { return code(); }
  std::string evalue() const { return what(); }
};

}  // namespace podhive

namespace podhive::podlang {

class ModuleEnv;

struct Function {
  std::string name;
  std::vector<std::string> params;
  ExprPtr body;
  const ModuleEnv* module = nullptr;  // defining module, looked up at call time
};

struct Value {
  std::variant<std::int64_t, std::string, std::shared_ptr<const Function>> v;

  static Value integer(std::int64_t i) { return Value{i}; }
  static Value string(std::string s) { return Value{std::move(s)}; }

  bool is_int() const { return std::holds_alternative<std::int64_t>(v); }
  bool is_str() const { return std::holds_alternative<std::string>(v); }
  bool is_fn() const {
    return std::holds_alternative<std::shared_ptr<const Function>>(v);
  }
  std::int64_t as_int() const { return std::get<std::int64_t>(v); }
  const std::string& as_str() const { return std::get<std::string>(v); }
  const Function& as_fn() const {
    return *std::get<std::shared_ptr<const Function>>(v);
  }
};

/// Display form used for results: ints in decimal, strings quoted,
/// functions as "<fn name/arity>".
std::string display(const Value& value);

class ModuleEnv {
 public:
  explicit ModuleEnv(std::string ns) : ns_(std::move(ns)) {}
  ModuleEnv(const ModuleEnv&) = delete;
  ModuleEnv& operator=(const ModuleEnv&) = delete;

  const std::string& ns() const noexcept { return ns_; }
  const Value* lookup(const std::string& name) const;
  void bind(const std::string& name, Value value);
  bool unbind(const std::string& name);
  const std::map<std::string, Value>& bindings() const noexcept {
    return bindings_;
  }

 private:
  std::string ns_;
  std::map<std::string, Value> bindings_;
};

using StdoutSink = std::function<void(std::string_view)>;

/// The embedded reference kernel: one ModuleEnv per namespace, created on
/// first use and kept for the kernel's lifetime.
class Kernel {
 public:
  static constexpr std::size_t kDefaultRecursionLimit = 512;

  explicit Kernel(std::size_t recursion_limit = kDefaultRecursionLimit);
  Kernel(const Kernel&) = delete;
  Kernel& operator=(const Kernel&) = delete;

  ModuleEnv& get_module(const std::string& ns);
  bool has_module(const std::string& ns) const;

  /// Runs the statements for effect, then returns the trailing expression's
  /// value if the program ends in one. Throws KernelError.
  std::optional<Value> eval_in_ns(const std::string& ns, std::string_view code,
                                  const StdoutSink& out = {});
  std::optional<Value> eval_program(const std::string& ns, const Program& program,
                                    const StdoutSink& out = {});

  /// to[name] := from[name]. Throws KernelError("UndefinedName").
  void add_import(const std::string& from, const std::string& to,
                  const std::string& name);
  /// Throws KernelError("UndefinedName") if the name is not bound.
  void delete_import(const std::string& ns, const std::string& name);
  /// Removes whichever of the names are bound; missing names are ignored.
  void delete_names(const std::string& ns, const std::vector<std::string>& names);

  std::vector<std::string> namespaces() const;

 private:
  std::map<std::string, std::unique_ptr<ModuleEnv>, std::less<>> nsmap_;
  std::size_t recursion_limit_;
};

}  // namespace podhive::podlang
