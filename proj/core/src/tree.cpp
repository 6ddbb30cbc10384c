#include "podhive/tree.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <unordered_set>

namespace podhive {

namespace {

constexpr std::string_view kRootName = "ROOT";

std::string format_uuid(std::uint64_t hi, std::uint64_t lo) {
  // RFC 4122 version 4 layout.
  hi = (hi & 0xffffffffffff0fffULL) | 0x0000000000004000ULL;
  lo = (lo & 0x3fffffffffffffffULL) | 0x8000000000000000ULL;
  char buf[37];
  std::snprintf(buf, sizeof(buf), "%08x-%04x-%04x-%04x-%012llx",
                static_cast<unsigned>(hi >> 32),
                static_cast<unsigned>((hi >> 16) & 0xffff),
                static_cast<unsigned>(hi & 0xffff),
                static_cast<unsigned>(lo >> 48),
                static_cast<unsigned long long>(lo & 0xffffffffffffULL));
  return buf;
}

}  // namespace

TreePath TreePath::parse(std::string_view text) {
  TreePath path;
  if (!text.empty() && text.front() == '/') {
    path.kind = Kind::Absolute;
  }
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t next = text.find('/', pos);
    if (next == std::string_view::npos) next = text.size();
    std::string_view seg = text.substr(pos, next - pos);
    if (!seg.empty() && seg != ".") path.segments.emplace_back(seg);
    pos = next + 1;
  }
  return path;
}

std::string TreePath::str() const {
  std::string out = kind == Kind::Absolute ? "/" : "";
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (i) out += '/';
    out += segments[i];
  }
  if (out.empty()) out = ".";
  return out;
}

IdGenerator::IdGenerator() : rng_(std::random_device{}()) {}
IdGenerator::IdGenerator(std::uint64_t seed) : rng_(seed) {}

NodeId IdGenerator::next() {
  std::uint64_t hi = rng_();
  std::uint64_t lo = rng_();
  return NodeId{format_uuid(hi, lo)};
}

bool is_valid_deck_name(std::string_view name) {
  if (name.empty() || name == "." || name == "..") return false;
  return std::none_of(name.begin(), name.end(), [](char c) {
    return c == '/' || c == '\n' || c == '\0';
  });
}

Tree::Tree() : Tree(IdGenerator()) {}

Tree::Tree(IdGenerator ids) : ids_(std::move(ids)) {
  root_ = ids_.next();
  Node root;
  root.id = root_;
  root.kind = NodeKind::Deck;
  root.name = std::string(kRootName);
  nodes_.emplace(root_.value, std::move(root));
}

Tree Tree::with_root(NodeId root_id, IdGenerator ids) {
  Tree tree(std::move(ids));
  Node root = std::move(tree.nodes_.begin()->second);
  tree.nodes_.clear();
  root.id = root_id;
  tree.root_ = root_id;
  tree.nodes_.emplace(root_id.value, std::move(root));
  return tree;
}

bool Tree::contains(const NodeId& id) const {
  return nodes_.count(id.value) != 0;
}

const Node* Tree::find(const NodeId& id) const {
  auto it = nodes_.find(id.value);
  return it == nodes_.end() ? nullptr : &it->second;
}

const Node& Tree::node(const NodeId& id) const {
  if (const Node* n = find(id)) return *n;
  throw Error("UnknownNode", "unknown node " + id.value);
}

Node& Tree::mutable_node(const NodeId& id) {
  auto it = nodes_.find(id.value);
  if (it == nodes_.end()) {
    throw Error("UnknownNode", "unknown node " + id.value);
  }
  return it->second;
}

void Tree::reindex(Node& parent) {
  for (std::size_t i = 0; i < parent.children.size(); ++i) {
    mutable_node(parent.children[i]).index = i;
  }
}

void Tree::check_sibling_name(const Node& parent, std::string_view name,
                              const NodeId& self) const {
  for (const NodeId& sibling_id : parent.children) {
    if (sibling_id == self) continue;
    const Node& sibling = node(sibling_id);
    bool clash = sibling.is_deck() ? sibling.name == name
                                   : sibling.id.value == name;
    if (clash) {
      throw Error("DuplicateSiblingName",
                  "name '" + std::string(name) + "' already used under " +
                      parent.id.value);
    }
  }
}

NodeId Tree::create_node(const NodeId& parent, NodeKind kind,
                         std::size_t index) {
  NodeId id = ids_.next();
  while (contains(id)) id = ids_.next();
  return create_node(parent, kind, index, std::move(id));
}

NodeId Tree::create_node(const NodeId& parent, NodeKind kind, std::size_t index,
                         NodeId id) {
  auto it = nodes_.find(parent.value);
  if (it == nodes_.end()) {
    throw Error("UnknownParent", "unknown parent " + parent.value);
  }
  Node& p = it->second;
  if (!p.is_deck()) {
    throw Error("ParentIsPod", "pods cannot have children: " + parent.value);
  }
  if (index > p.children.size()) {
    throw Error("IndexOutOfRange",
                "index " + std::to_string(index) + " exceeds child count " +
                    std::to_string(p.children.size()));
  }
  if (id.empty() || contains(id)) {
    throw Error("DuplicateNodeId", "node id already in use: " + id.value);
  }
  Node n;
  n.id = id;
  n.kind = kind;
  n.parent = parent;
  if (kind == NodeKind::Deck) {
    n.name = id.value;
    check_sibling_name(p, n.name, id);
  }
  p.children.insert(p.children.begin() + static_cast<std::ptrdiff_t>(index),
                    id);
  nodes_.emplace(id.value, std::move(n));
  reindex(mutable_node(parent));
  return id;
}

void Tree::move_node(const NodeId& id, const NodeId& new_parent,
                     std::size_t index) {
  Node& n = mutable_node(id);
  if (!n.parent) throw Error("RootImmutable", "the root deck cannot be moved");
  auto pit = nodes_.find(new_parent.value);
  if (pit == nodes_.end()) {
    throw Error("UnknownNode", "unknown node " + new_parent.value);
  }
  Node& target = pit->second;
  if (!target.is_deck()) {
    throw Error("ParentIsPod", "pods cannot have children: " + new_parent.value);
  }
  if (id == new_parent || is_ancestor(id, new_parent)) {
    throw Error("WouldCreateCycle",
                "cannot move " + id.value + " into its own subtree");
  }
  Node& old_parent = mutable_node(*n.parent);
  bool same_parent = old_parent.id == new_parent;
  std::size_t limit = target.children.size() - (same_parent ? 1 : 0);
  if (index > limit) {
    throw Error("IndexOutOfRange",
                "index " + std::to_string(index) + " exceeds child count " +
                    std::to_string(limit));
  }
  if (!same_parent) {
    check_sibling_name(target, n.is_deck() ? n.name : n.id.value, id);
  }
  auto& siblings = old_parent.children;
  siblings.erase(std::find(siblings.begin(), siblings.end(), id));
  reindex(old_parent);
  target.children.insert(
      target.children.begin() + static_cast<std::ptrdiff_t>(index), id);
  n.parent = new_parent;
  reindex(target);
}

void Tree::delete_node(const NodeId& id) {
  Node& n = mutable_node(id);
  if (!n.parent) throw Error("RootImmutable", "the root deck cannot be deleted");
  std::vector<NodeId> doomed = preorder(id);
  Node& parent = mutable_node(*n.parent);
  parent.children.erase(
      std::find(parent.children.begin(), parent.children.end(), id));
  reindex(parent);
  for (const NodeId& d : doomed) nodes_.erase(d.value);
}

void Tree::set_code(const NodeId& id, std::string code) {
  Node& n = mutable_node(id);
  if (!n.is_pod()) throw Error("NotAPod", "decks carry no code: " + id.value);
  n.code = std::move(code);
}

void Tree::set_flags(const NodeId& id, NodeFlags flags) {
  Node& n = mutable_node(id);
  if (flags.utility && flags.test) {
    throw Error("ConflictingFlags", "a node cannot be both utility and test");
  }
  if (n.is_deck()) {
    if (!n.parent && (flags.utility || flags.test)) {
      throw Error("RootImmutable", "the root deck cannot be utility or test");
    }
    flags.is_public = false;  // decks export through reexports
  }
  n.flags = flags;
}

void Tree::rename(const NodeId& id, std::string name) {
  Node& n = mutable_node(id);
  if (!n.is_deck()) throw Error("NotADeck", "only decks are named: " + id.value);
  if (!n.parent) throw Error("RootImmutable", "the root deck cannot be renamed");
  if (!is_valid_deck_name(name)) {
    throw Error("InvalidName", "invalid deck name '" + name + "'");
  }
  check_sibling_name(node(*n.parent), name, id);
  n.name = std::move(name);
}

void Tree::set_reexports(const NodeId& id, std::vector<std::string> names) {
  Node& n = mutable_node(id);
  if (!n.is_deck()) {
    throw Error("NotADeck", "only decks re-export names: " + id.value);
  }
  n.reexports = std::move(names);
}

void Tree::set_folded(const NodeId& id, bool folded) {
  mutable_node(id).folded = folded;
}

NodeId Tree::resolve_path(const NodeId& origin, const TreePath& path) const {
  NodeId cur = path.kind == TreePath::Kind::Absolute ? root_ : node(origin).id;
  for (std::size_t i = 0; i < path.segments.size(); ++i) {
    const std::string& seg = path.segments[i];
    const Node& here = node(cur);
    if (seg == "..") {
      if (!here.parent) {
        throw Error("EscapesRoot", "path '" + path.str() + "' escapes the root");
      }
      cur = *here.parent;
      continue;
    }
    bool last = i + 1 == path.segments.size();
    const NodeId* hit = nullptr;
    for (const NodeId& child_id : here.children) {
      const Node& child = node(child_id);
      if (child.is_deck() && child.name == seg) {
        hit = &child.id;
        break;
      }
      if (last && child.is_pod() && child.id.value == seg) {
        hit = &child.id;
        break;
      }
    }
    if (!hit) {
      throw Error("NoSuchSegment", "no child '" + seg + "' under " +
                                       namespace_of(cur) + " (path '" +
                                       path.str() + "')");
    }
    cur = *hit;
  }
  return cur;
}

Namespace Tree::namespace_of(const NodeId& id) const {
  const Node& n = node(id);
  if (!n.parent) return Namespace(kRootNamespace);
  if (n.is_deck()) return namespace_of(*n.parent) + "/" + n.name;
  if (n.flags.utility || n.flags.test) {
    return namespace_of(*n.parent) + "/" + n.id.value;
  }
  return namespace_of(*n.parent);
}

bool Tree::owns_namespace(const NodeId& id) const {
  const Node& n = node(id);
  return n.is_deck() || !n.is_regular();
}

NodeId Tree::scope_of(const NodeId& id) const {
  const Node& n = node(id);
  if (n.is_deck() || !n.is_regular()) return n.id;
  return *n.parent;
}

std::vector<NodeId> Tree::preorder() const { return preorder(root_); }

std::vector<NodeId> Tree::preorder(const NodeId& from) const {
  std::vector<NodeId> out;
  std::vector<NodeId> stack{node(from).id};
  while (!stack.empty()) {
    NodeId cur = std::move(stack.back());
    stack.pop_back();
    const Node& n = node(cur);
    out.push_back(cur);
    for (auto it = n.children.rbegin(); it != n.children.rend(); ++it) {
      stack.push_back(*it);
    }
  }
  return out;
}

bool Tree::is_ancestor(const NodeId& ancestor, const NodeId& id) const {
  const Node* n = &node(id);
  while (n->parent) {
    if (*n->parent == ancestor) return true;
    n = &node(*n->parent);
  }
  return false;
}

std::size_t Tree::depth(const NodeId& id) const {
  std::size_t d = 0;
  const Node* n = &node(id);
  while (n->parent) {
    ++d;
    n = &node(*n->parent);
  }
  return d;
}

std::vector<NodeId> Tree::child_decks(const NodeId& id) const {
  std::vector<NodeId> out;
  for (const NodeId& c : node(id).children) {
    if (node(c).is_deck()) out.push_back(c);
  }
  return out;
}

std::vector<NodeId> Tree::child_pods(const NodeId& id) const {
  std::vector<NodeId> out;
  for (const NodeId& c : node(id).children) {
    if (node(c).is_pod()) out.push_back(c);
  }
  return out;
}

void Tree::validate() const {
  auto fail = [](const std::string& what) { throw Error("InvalidTree", what); };

  std::size_t roots = 0;
  for (const auto& [key, n] : nodes_) {
    if (key != n.id.value) fail("node key mismatch for " + n.id.value);
    if (n.flags.utility && n.flags.test) {
      fail("node " + key + " is both utility and test");
    }
    if (!n.parent) {
      ++roots;
      if (!n.is_deck()) fail("root " + key + " is not a deck");
      if (n.id != root_) fail("parentless node " + key + " is not the root");
      continue;
    }
    const Node* p = find(*n.parent);
    if (!p) fail("node " + key + " has unknown parent " + n.parent->value);
    if (!p->is_deck()) fail("node " + key + " has a pod parent");
    if (n.index >= p->children.size() || p->children[n.index] != n.id) {
      fail("node " + key + " has index " + std::to_string(n.index) +
           " inconsistent with its parent's child list");
    }
    if (n.is_deck() && !is_valid_deck_name(n.name)) {
      fail("deck " + key + " has invalid name '" + n.name + "'");
    }
    if (n.is_pod() && !n.children.empty()) fail("pod " + key + " has children");
  }
  if (roots != 1) fail("expected exactly one root, found " + std::to_string(roots));

  // Every node reachable exactly once from the root => acyclic + connected.
  std::unordered_set<std::string> seen;
  std::vector<NodeId> stack{root_};
  while (!stack.empty()) {
    NodeId cur = stack.back();
    stack.pop_back();
    if (!seen.insert(cur.value).second) fail("node " + cur.value + " reached twice");
    const Node& n = node(cur);
    std::set<std::string> names;
    for (std::size_t i = 0; i < n.children.size(); ++i) {
      const Node* c = find(n.children[i]);
      if (!c) fail("missing child " + n.children[i].value);
      if (!c->parent || *c->parent != cur) {
        fail("child " + c->id.value + " does not point back to " + cur.value);
      }
      if (c->index != i) fail("child " + c->id.value + " has a gap in indices");
      const std::string& label = c->is_deck() ? c->name : c->id.value;
      if (!names.insert(label).second) {
        fail("duplicate sibling name '" + label + "' under " + cur.value);
      }
      stack.push_back(c->id);
    }
  }
  if (seen.size() != nodes_.size()) {
    fail(std::to_string(nodes_.size() - seen.size()) +
         " nodes are not reachable from the root");
  }
}

bool Tree::operator==(const Tree& other) const {
  return root_ == other.root_ && nodes_ == other.nodes_;
}

}  // namespace podhive
