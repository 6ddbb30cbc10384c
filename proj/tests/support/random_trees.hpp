#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "podhive/tree.hpp"

namespace podhive::testing {

struct RandomTreeOptions {
  std::size_t max_depth = 4;   // deck nesting below the root
  std::size_t max_decks = 6;
  std::size_t max_pods = 12;
  std::size_t max_defs = 3;    // definitions per pod
  bool literal_lets = false;   // lets bind literals only
  bool unary_functions = false;
  bool explicit_imports = true;
  bool unique_names = false;   // each name defined by at most one pod
  double utility_rate = 0.15;
  double test_rate = 0.12;
  double public_rate = 0.5;
};

/// Random podlang tree. Every structural feature of the namespace rules
/// appears with some probability: public/utility/test pods and decks,
/// reexports, explicit path imports, print calls, shadowing.
Tree random_podlang_tree(std::mt19937_64& rng, const RandomTreeOptions& options = {});

/// Random deck/pod tree with arbitrary (non-podlang) payload, used for
/// persistence and ordering properties.
Tree random_shape_tree(std::mt19937_64& rng, std::size_t max_nodes = 24);

/// Namespace-owning nodes of a tree with one probe expression per name
/// that could plausibly be bound there.
struct Probe {
  NodeId scope;
  std::string expr;
};
std::vector<Probe> probes_for(const Tree& tree);

/// Pool of identifiers the generators draw from.
const std::vector<std::string>& name_pool();

/// Code for a pod defining `names` with literal lets and unary functions
/// (the convergence generator's restricted form).
std::string restricted_pod_code(std::mt19937_64& rng, const std::vector<std::string>& names,
                                const std::vector<std::string>& callable);

}  // namespace podhive::testing
