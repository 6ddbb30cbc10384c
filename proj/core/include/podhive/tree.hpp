#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "podhive/error.hpp"

namespace podhive {

/// Opaque node identifier (UUID formatted when generated).
struct NodeId {
  std::string value;

  auto operator<=>(const NodeId&) const = default;
  bool empty() const noexcept { return value.empty(); }
};

/// Slash-delimited namespace path, e.g. "/ROOT/A/B".
using Namespace = std::string;

inline constexpr std::string_view kRootNamespace = "/ROOT";

enum class NodeKind { Deck, Pod };

struct NodeFlags {
  bool is_public = false;
  bool utility = false;
  bool test = false;

  bool operator==(const NodeFlags&) const = default;
};

struct Node {
  NodeId id;
  NodeKind kind = NodeKind::Pod;
  std::optional<NodeId> parent;
  std::size_t index = 0;
  std::string name;  // decks only
  NodeFlags flags;
  std::string code;  // pods only
  bool folded = false;
  std::vector<std::string> reexports;  // decks only
  std::vector<NodeId> children;

  bool is_deck() const noexcept { return kind == NodeKind::Deck; }
  bool is_pod() const noexcept { return kind == NodeKind::Pod; }
  bool is_regular() const noexcept { return !flags.utility && !flags.test; }

  bool operator==(const Node&) const = default;
};

/// A path through the tree. Absolute paths start at the root deck
/// ("/A/B/C"); relative paths start at an origin deck ("../D").
struct TreePath {
  enum class Kind { Absolute, Relative };

  Kind kind = Kind::Relative;
  std::vector<std::string> segments;

  static TreePath parse(std::string_view text);
  std::string str() const;
};

/// Produces fresh node ids. The default instance draws from
/// std::random_device; tests seed it for reproducible trees.
class IdGenerator {
 public:
  IdGenerator();
  explicit IdGenerator(std::uint64_t seed);

  NodeId next();

 private:
  std::mt19937_64 rng_;
};

/// The deck/pod tree. Value type: copying a Tree yields an immutable
/// snapshot for concurrent readers while a single writer mutates the
/// original.
class Tree {
 public:
  Tree();
  explicit Tree(IdGenerator ids);
  /// Empty tree whose root deck carries a known id (document loading).
  static Tree with_root(NodeId root_id, IdGenerator ids = IdGenerator());

  const NodeId& root() const noexcept { return root_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  bool contains(const NodeId& id) const;
  const Node& node(const NodeId& id) const;
  const Node* find(const NodeId& id) const;

  NodeId create_node(const NodeId& parent, NodeKind kind, std::size_t index);
  /// Insert with a caller-chosen id (loading, importing).
  NodeId create_node(const NodeId& parent, NodeKind kind, std::size_t index,
                     NodeId id);
  void move_node(const NodeId& id, const NodeId& new_parent, std::size_t index);
  /// Removes the node and its whole subtree.
  void delete_node(const NodeId& id);

  void set_code(const NodeId& id, std::string code);
  void set_flags(const NodeId& id, NodeFlags flags);
  void rename(const NodeId& id, std::string name);
  void set_reexports(const NodeId& id, std::vector<std::string> names);
  void set_folded(const NodeId& id, bool folded);

  NodeId resolve_path(const NodeId& origin, const TreePath& path) const;
  Namespace namespace_of(const NodeId& id) const;

  /// Deck whose namespace owns the node: decks and utility/test pods own
  /// their namespace, regular pods live in their parent deck's.
  NodeId scope_of(const NodeId& id) const;
  /// Decks plus utility/test pods: the nodes that own a namespace.
  bool owns_namespace(const NodeId& id) const;

  /// Depth-first preorder, siblings in index order.
  std::vector<NodeId> preorder() const;
  std::vector<NodeId> preorder(const NodeId& from) const;
  bool is_ancestor(const NodeId& ancestor, const NodeId& node) const;
  std::size_t depth(const NodeId& id) const;
  std::vector<NodeId> child_decks(const NodeId& id) const;
  std::vector<NodeId> child_pods(const NodeId& id) const;

  /// Re-checks every structural invariant; throws Error("InvalidTree").
  void validate() const;

  /// Structural equality: same ids, parents, order, and payload.
  bool operator==(const Tree& other) const;

 private:
  Node& mutable_node(const NodeId& id);
  void reindex(Node& parent);
  void check_sibling_name(const Node& parent, std::string_view name,
                          const NodeId& self) const;

  std::unordered_map<std::string, Node> nodes_;
  NodeId root_;
  IdGenerator ids_;
};

bool is_valid_deck_name(std::string_view name);

}  // namespace podhive

template <>
struct std::hash<podhive::NodeId> {
  std::size_t operator()(const podhive::NodeId& id) const noexcept {
    return std::hash<std::string>{}(id.value);
  }
};
