#pragma once

#include <map>
#include <string>
#include <vector>

#include "podhive/kernel.hpp"
#include "podhive/names.hpp"
#include "podhive/tree.hpp"

namespace podhive::testing {

/// Outcome of one evaluation in comparable form: "ok:<display>",
/// "none" or "error:<ename>". Function displays drop namespace mangling.
using Outcome = std::string;

/// Brute-force reference: evaluates the whole tree in ONE namespace after
/// renaming every identifier to "<namespace tag>_<name>" of the namespace
/// that defines it, as decided by the static name resolver. Walks the tree
/// children-first like a deck run, continuing after errors.
class FlatOracle {
 public:
  explicit FlatOracle(const Tree& tree);

  /// Outcome per pod, in execution order.
  const std::vector<std::pair<NodeId, Outcome>>& pod_outcomes() const {
    return outcomes_;
  }
  Outcome probe(const NodeId& scope, const std::string& expr);

  /// The renamed program for a pod (for debugging failures).
  std::string mangled_code(const NodeId& pod) const;

 private:
  void walk(const NodeId& deck);
  void run_pod(const NodeId& pod);
  std::string tag(const Namespace& ns);
  podlang::ExprPtr rename(const podlang::ExprPtr& e, const NodeId& scope,
                          const std::vector<std::string>& params);
  std::string target(const std::string& name, const NodeId& scope);
  podlang::Program rename_program(const podlang::Program& p, const NodeId& scope);

  const Tree& tree_;
  rules::PodlangExtractor extractor_;
  rules::Resolver resolver_;
  podlang::Kernel kernel_;
  std::map<Namespace, std::string> tags_;
  std::map<NodeId, std::string> mangled_;
  std::vector<std::pair<NodeId, Outcome>> outcomes_;
};

/// Replaces "<fn m<digits>_name/" with "<fn name/" in a display string.
std::string strip_mangling(const std::string& display);

Outcome outcome_of(const podlang::Value* value);
Outcome outcome_of_error(const std::string& ename);

}  // namespace podhive::testing
