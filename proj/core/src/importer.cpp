#include <algorithm>
#include <deque>
#include <functional>
#include <limits>
#include <set>
#include <unordered_map>

#include "podhive/importer.hpp"

namespace podhive::importer {

namespace {

constexpr std::size_t kRootDeck = std::numeric_limits<std::size_t>::max();

struct Adjacency {
  std::unordered_map<std::string, std::size_t> index;
  std::vector<std::vector<std::size_t>> callers;  // distinct, no self
  std::vector<std::vector<std::size_t>> callees;  // distinct, no self
};

Adjacency adjacency(const CallGraph& g) {
  Adjacency a;
  auto& idx = a.index;
  for (std::size_t i = 0; i < g.functions.size(); ++i) idx.emplace(g.functions[i].id, i);
  a.callers.resize(g.functions.size());
  a.callees.resize(g.functions.size());
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& [from, to] : g.edges) {
    std::size_t u = idx.at(from), v = idx.at(to);
    if (u == v || !seen.emplace(u, v).second) continue;
    a.callees[u].push_back(v);
    a.callers[v].push_back(u);
  }
  return a;
}

std::string deck_name(const std::string& id) {
  std::string out;
  for (char c : id) out += (c == '/' || c == '\n' || c == '\0') ? '_' : c;
  if (out.empty() || out == "." || out == "..") out = "_" + out;
  return out;
}

/// Abstract placement: every non-test function owns a deck whose parent is
/// another function's deck or the root; tests sit in a host deck.
class Layout {
 public:
  Layout(const CallGraph& g, const Leveling& lv, const Adjacency& adj,
         std::vector<FunctionClass> classes, const std::set<std::size_t>& pinned)
      : g_(g), lv_(lv), adj_(adj), cls_(std::move(classes)), pinned_(pinned),
        parent_(g.functions.size(), kRootDeck), host_(g.functions.size(), kRootDeck) {
    place_regular();
    place_tests();
    place_utilities();
  }

  EmitResult build() const {
    EmitResult r;
    r.placed_as = cls_;
    const std::size_t n = g_.functions.size();
    std::map<std::size_t, std::vector<std::size_t>> child_decks, tests;
    for (std::size_t i = 0; i < n; ++i) {
      if (cls_[i] == FunctionClass::Test) {
        tests[host_[i]].push_back(i);
      } else {
        child_decks[parent_[i]].push_back(i);
      }
    }
    std::vector<std::vector<std::string>> reexports(n);
    add_reexports(reexports);

    Tree& t = r.tree;
    std::function<void(std::size_t, const NodeId&)> fill = [&](std::size_t key,
                                                                const NodeId& deck) {
      std::size_t index = 0;
      auto make_pod = [&](std::size_t f, NodeFlags flags) {
        NodeId pod = t.create_node(deck, NodeKind::Pod, index++);
        t.set_code(pod, g_.functions[f].code.value_or(""));
        t.set_flags(pod, flags);
        r.pod_of.emplace(g_.functions[f].id, pod);
        r.names[pod].defined.push_back(g_.functions[f].id);
      };
      if (key != kRootDeck) {
        NodeFlags flags;
        flags.is_public = !adj_.callers[key].empty();
        make_pod(key, flags);
      }
      if (auto it = tests.find(key); it != tests.end()) {
        for (std::size_t f : it->second) make_pod(f, NodeFlags{false, false, true});
      }
      if (auto it = child_decks.find(key); it != child_decks.end()) {
        std::set<std::string> used;
        for (std::size_t f : it->second) {
          NodeId d = t.create_node(deck, NodeKind::Deck, index++);
          std::string name = deck_name(g_.functions[f].id);
          for (int k = 2; !used.insert(name).second; ++k) {
            name = deck_name(g_.functions[f].id) + "~" + std::to_string(k);
          }
          t.rename(d, name);
          if (cls_[f] == FunctionClass::Utility) t.set_flags(d, NodeFlags{false, true, false});
          if (!reexports[f].empty()) t.set_reexports(d, reexports[f]);
          r.deck_of.emplace(g_.functions[f].id, d);
          fill(f, d);
        }
      }
    };
    fill(kRootDeck, t.root());
    return r;
  }

 private:
  bool within(std::size_t x, std::size_t anc) const {
    for (; x != kRootDeck; x = parent_[x]) {
      if (x == anc) return true;
    }
    return anc == kRootDeck;
  }

  std::size_t lca(std::size_t a, std::size_t b) const {
    std::set<std::size_t> up;
    for (std::size_t x = a; x != kRootDeck; x = parent_[x]) up.insert(x);
    for (std::size_t x = b; x != kRootDeck; x = parent_[x]) {
      if (up.count(x)) return x;
    }
    return kRootDeck;
  }

  std::size_t scope(std::size_t f) const {
    return cls_[f] == FunctionClass::Test ? host_[f] : f;
  }

  void place_regular() {
    const std::size_t n = g_.functions.size();
    // Vertex 0 is the virtual root, function i is vertex i + 1.
    std::map<std::pair<std::size_t, std::size_t>, std::int64_t> weight;
    for (const auto& [from, to] : g_.edges) {
      std::size_t u = adj_.index.at(from), v = adj_.index.at(to);
      if (u == v || cls_[u] == FunctionClass::Test || cls_[v] != FunctionClass::Regular) continue;
      ++weight[{u + 1, v + 1}];
    }
    std::vector<WeightedEdge> edges;
    // Zero-weight root arcs keep every vertex reachable; tests and
    // utilities only ever hang off the root here.
    for (std::size_t i = 0; i < n; ++i) edges.push_back({0, i + 1, 0});
    for (const auto& [uv, w] : weight) edges.push_back({uv.first, uv.second, w});
    auto parents = max_arborescence(n + 1, 0, edges);
    for (std::size_t i = 0; i < n; ++i) {
      if (cls_[i] != FunctionClass::Regular) continue;
      std::size_t p = *parents[i + 1];
      parent_[i] = p == 0 ? kRootDeck : p - 1;
    }
  }

  void place_tests() {
    for (std::size_t i = 0; i < g_.functions.size(); ++i) {
      if (cls_[i] != FunctionClass::Test) continue;
      std::size_t best = kRootDeck;
      for (std::size_t c : adj_.callees[i]) {
        if (cls_[c] == FunctionClass::Test) continue;
        if (best == kRootDeck || lv_.level[c] < lv_.level[best] ||
            (lv_.level[c] == lv_.level[best] && c < best)) {
          best = c;
        }
      }
      host_[i] = best;
    }
  }

  void place_utilities() {
    const std::size_t n = g_.functions.size();
    // Start every utility under the root, then sink each one to the
    // lowest deck that still contains all of its callers.
    for (std::size_t pass = 0; pass < 2 * n + 2; ++pass) {
      bool changed = false;
      for (std::size_t u = 0; u < n; ++u) {
        if (cls_[u] != FunctionClass::Utility || pinned_.count(u)) continue;
        const auto& callers = adj_.callers[u];
        if (callers.empty()) continue;
        std::size_t target = scope(callers[0]);
        for (std::size_t k = 1; k < callers.size(); ++k) target = lca(target, scope(callers[k]));
        if (within(target, u) || target == parent_[u]) continue;
        parent_[u] = target;
        changed = true;
      }
      if (!changed) break;
    }
  }

  /// Marks intermediate decks so a caller sees a callee nested more than
  /// one deck below it.
  void add_reexports(std::vector<std::vector<std::string>>& reexports) const {
    for (const auto& [from, to] : g_.edges) {
      std::size_t u = adj_.index.at(from), v = adj_.index.at(to);
      if (u == v || cls_[v] == FunctionClass::Test) continue;
      std::size_t s = scope(u);
      std::vector<std::size_t> path;  // deck(v) up to, excluding, s
      std::size_t x = v;
      for (; x != kRootDeck && x != s; x = parent_[x]) path.push_back(x);
      if (x != s || path.size() < 2) continue;
      bool regular = true;
      for (std::size_t k = 0; k + 1 < path.size(); ++k) {
        regular = regular && cls_[path[k]] == FunctionClass::Regular;
      }
      if (!regular) continue;
      const std::string& name = g_.functions[v].id;
      for (std::size_t k = 1; k < path.size(); ++k) {
        auto& list = reexports[path[k]];
        if (std::find(list.begin(), list.end(), name) == list.end()) list.push_back(name);
      }
    }
  }

  const CallGraph& g_;
  const Leveling& lv_;
  const Adjacency& adj_;
  std::vector<FunctionClass> cls_;
  const std::set<std::size_t>& pinned_;
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> host_;
};

}  // namespace

const char* to_string(FunctionClass c) {
  switch (c) {
    case FunctionClass::Regular: return "Regular";
    case FunctionClass::Utility: return "Utility";
    case FunctionClass::Test: return "Test";
  }
  return "?";
}

Leveling mark_level(const CallGraph& g) {
  const std::size_t n = g.functions.size();
  Adjacency adj = adjacency(g);
  constexpr std::size_t kUnset = std::numeric_limits<std::size_t>::max();
  Leveling lv;
  lv.level.assign(n, kUnset);
  std::deque<std::size_t> queue;
  for (std::size_t i = 0; i < n; ++i) {
    if (adj.callers[i].empty()) {
      lv.level[i] = 1;
      queue.push_back(i);
    }
  }
  std::size_t deepest = 0;
  while (!queue.empty()) {
    std::size_t v = queue.front();
    queue.pop_front();
    deepest = std::max(deepest, lv.level[v]);
    for (std::size_t w : adj.callees[v]) {
      if (lv.level[w] == kUnset) {
        lv.level[w] = lv.level[v] + 1;
        queue.push_back(w);
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (lv.level[i] != kUnset) continue;
    lv.level[i] = deepest + 1;
    lv.cyclic.push_back(g.functions[i].id);
  }
  return lv;
}

std::vector<FunctionClass> classify_nodes(const CallGraph& g, const Leveling& lv) {
  Adjacency adj = adjacency(g);
  std::set<std::string> entries;
  if (g.entries) entries.insert(g.entries->begin(), g.entries->end());
  std::vector<FunctionClass> out(g.functions.size(), FunctionClass::Regular);
  for (std::size_t i = 0; i < g.functions.size(); ++i) {
    const auto& callers = adj.callers[i];
    if (callers.empty()) {
      if (g.entries && !entries.count(g.functions[i].id)) out[i] = FunctionClass::Test;
      continue;
    }
    std::set<std::size_t> levels;
    for (std::size_t c : callers) levels.insert(lv.level[c]);
    if (levels.size() > 1) out[i] = FunctionClass::Utility;
  }
  return out;
}

std::vector<CallEdge> unresolved_edges(const CallGraph& g, const EmitResult& r) {
  rules::FixedNameExtractor extractor(r.names);
  rules::Resolver resolver(r.tree, extractor);
  std::vector<CallEdge> out;
  std::set<CallEdge> checked;
  for (const CallEdge& e : g.edges) {
    if (e.first == e.second || !checked.insert(e).second) continue;
    NodeId scope = r.tree.scope_of(r.pod_of.at(e.first));
    auto res = resolver.try_resolve(e.second, scope);
    if (!res || res->source_ns != r.tree.namespace_of(r.tree.scope_of(r.pod_of.at(e.second)))) {
      out.push_back(e);
    }
  }
  return out;
}

EmitResult emit_tree(const CallGraph& g, const Leveling& lv,
                     const std::vector<FunctionClass>& classes) {
  if (classes.size() != g.functions.size() || lv.level.size() != g.functions.size()) {
    throw Error("EmissionInvariantViolation", "classes do not match the graph");
  }
  Adjacency adj = adjacency(g);
  std::vector<FunctionClass> cls = classes;
  std::set<std::size_t> pinned;
  std::vector<std::string> promoted;
  for (std::size_t round = 0;; ++round) {
    EmitResult r = Layout(g, lv, adj, cls, pinned).build();
    std::vector<CallEdge> bad = unresolved_edges(g, r);
    if (bad.empty()) {
      r.promoted = promoted;
      for (std::size_t p : pinned) r.pinned.push_back(g.functions[p].id);
      return r;
    }
    bool progress = false;
    for (const CallEdge& e : bad) {
      std::size_t v = adj.index.at(e.second);
      if (cls[v] == FunctionClass::Regular) {
        cls[v] = FunctionClass::Utility;
        promoted.push_back(e.second);
        progress = true;
      } else if (cls[v] == FunctionClass::Utility && pinned.insert(v).second) {
        progress = true;
      }
    }
    if (!progress || round > 2 * g.functions.size() + 2) {
      std::string list;
      for (const CallEdge& e : bad) list += " " + e.first + "->" + e.second;
      throw Error("EmissionInvariantViolation", "unresolved call edges:" + list);
    }
  }
}

ImportResult import_callgraph(const CallGraph& g) {
  ImportResult r;
  r.leveling = mark_level(g);
  r.classes = classify_nodes(g, r.leveling);
  r.emitted = emit_tree(g, r.leveling, r.classes);
  return r;
}

}  // namespace podhive::importer
