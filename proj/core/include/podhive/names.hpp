#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "podhive/tree.hpp"

namespace podhive::rules {

/// Top-level names a pod defines, plus names it pulls in by explicit path.
struct PodNames {
  struct Import {
    std::string path;
    std::string name;

    bool operator==(const Import&) const = default;
  };

  std::vector<std::string> defined;
  std::vector<Import> imports;

  bool operator==(const PodNames&) const = default;
};

/// Computes PodNames from pod code. Implementations throw
/// Error("ParseFailure") when the code cannot be read.
class NameExtractor {
 public:
  virtual ~NameExtractor() = default;
  virtual PodNames extract(const Node& pod) const = 0;
};

/// Exact extractor for podlang pods.
class PodlangExtractor final : public NameExtractor {
 public:
  PodNames extract(const Node& pod) const override;
};

/// Line-pattern extractor for Python-like code: top-level `def f`,
/// `class C`, `name = ...` and `from "<path>" import a, b`.
class PatternExtractor final : public NameExtractor {
 public:
  PodNames extract(const Node& pod) const override;
};

/// Names supplied up front, keyed by pod id (used for imported call graphs
/// whose code is not parsed).
class FixedNameExtractor final : public NameExtractor {
 public:
  explicit FixedNameExtractor(std::unordered_map<NodeId, PodNames> names = {});
  void set(const NodeId& pod, PodNames names);
  PodNames extract(const Node& pod) const override;

 private:
  std::unordered_map<NodeId, PodNames> names_;
};

std::unique_ptr<NameExtractor> extractor_for_language(const std::string& language);

enum class Rule { SameNamespace, PublicChild, Utility, TestParentAccess, ExplicitPath };

const char* to_string(Rule rule);

/// Why a name is visible somewhere. `source_ns` is where the name was
/// originally defined; `via_ns` is the namespace the binding is copied from.
struct Resolution {
  std::string name;
  Namespace source_ns;
  Namespace via_ns;
  Rule rule = Rule::SameNamespace;

  bool operator==(const Resolution&) const = default;
};

struct Collision {
  std::string name;
  std::vector<Resolution> candidates;  // precedence order; the first wins
};

struct NameSet {
  std::vector<Resolution> entries;  // discovery order, one per name
  std::vector<Collision> collisions;

  const Resolution* find(const std::string& name) const;
  bool contains(const std::string& name) const { return find(name) != nullptr; }
  std::vector<std::string> names() const;
  /// Throws Error("NameCollision") naming every colliding source.
  void require_unambiguous() const;
};

enum class ImportOrigin { PublicChild, Utility, Test, ExplicitPath };

const char* to_string(ImportOrigin origin);
ImportOrigin parse_import_origin(const std::string& text);

struct ImportEntry {
  Namespace from;
  Namespace to;
  std::string name;
  ImportOrigin origin = ImportOrigin::PublicChild;

  auto operator<=>(const ImportEntry&) const = default;
};

/// Static evaluation of the namespace rules over one tree snapshot. The
/// snapshot and extractor must outlive the resolver. Pod names are
/// extracted once at construction; all queries are const and pure.
class Resolver {
 public:
  Resolver(const Tree& tree, const NameExtractor& extractor);

  const Tree& tree() const noexcept { return tree_; }

  /// Throws Error("ParseFailure") if the pod's code could not be read.
  const PodNames& pod_names(const NodeId& pod) const;
  std::vector<std::string> defined_names(const NodeId& pod) const;
  /// Names whose extraction failed, with the parser message.
  const std::map<NodeId, std::string>& diagnostics() const noexcept {
    return diagnostics_;
  }

  /// Throws Error("NotADeck") and Error("ReexportNotFound").
  NameSet export_set(const NodeId& deck) const;
  NameSet visible_set(const NodeId& node) const;

  /// Throws Error("NotVisible").
  Resolution resolve(const std::string& name, const NodeId& from) const;
  std::optional<Resolution> try_resolve(const std::string& name,
                                        const NodeId& from) const;

  /// Every import needed for the snapshot, in DFS postorder of the
  /// namespaces, each namespace's names in discovery order.
  std::vector<ImportEntry> import_plan() const;
  /// Imports whose destination is the namespace owned by `scope`.
  std::vector<ImportEntry> imports_into(const NodeId& scope) const;

  /// Namespace-owning nodes in DFS postorder, siblings in index order.
  std::vector<NodeId> scopes_postorder() const;
  /// Regular pods evaluated in the namespace owned by `scope`.
  std::vector<NodeId> pods_in_scope(const NodeId& scope) const;

 private:
  using Guard = std::set<std::pair<std::string, std::string>>;

  void candidates(const NodeId& scope, const std::string& name, bool first_only,
                  Guard& guard, std::vector<Resolution>& out) const;
  std::optional<Resolution> first(const NodeId& scope, const std::string& name,
                                  Guard& guard) const;
  std::vector<std::string> candidate_names(const NodeId& scope) const;
  std::optional<NodeId> import_target(const NodeId& pod, const std::string& path) const;
  const std::vector<std::string>& export_names(const NodeId& deck) const;
  std::vector<std::string> utility_names(const NodeId& node) const;
  std::vector<std::string> own_defined(const NodeId& scope) const;
  NameSet build_set(const NodeId& scope, const std::vector<std::string>& names) const;
  /// True when following `name` hop by hop from `via` comes back to
  /// `scope` before reaching a definition.
  bool via_cycles(const NodeId& scope, const std::string& name, const Namespace& via) const;

  const Tree& tree_;
  std::unordered_map<NodeId, PodNames> pod_names_;
  std::map<NodeId, std::string> diagnostics_;
  std::unordered_map<NodeId, std::vector<std::string>> export_names_;
  std::unordered_map<NodeId, std::vector<std::string>> missing_reexports_;
  std::unordered_map<Namespace, NodeId> scope_of_ns_;
};

}  // namespace podhive::rules
