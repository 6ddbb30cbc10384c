#include <limits>

#include "podhive/importer.hpp"

namespace podhive::importer {

namespace {

constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

struct Arc {
  std::size_t from;
  std::size_t to;
  std::int64_t weight;
  std::size_t origin;  // index of the arc one level up
};

/// Chosen incoming arc (index into `arcs`) per vertex; kNone for the root.
/// Every non-root vertex must have an incoming arc.
std::vector<std::size_t> solve(std::size_t n, std::size_t root, const std::vector<Arc>& arcs) {
  std::vector<std::size_t> best(n, kNone);
  for (std::size_t i = 0; i < arcs.size(); ++i) {
    const Arc& a = arcs[i];
    if (a.from == a.to || a.to == root) continue;
    if (best[a.to] == kNone || a.weight > arcs[best[a.to]].weight) best[a.to] = i;
  }

  // Cycles among the best arcs, each labelled with a fresh component id.
  std::vector<std::size_t> comp(n, kNone);
  std::vector<std::size_t> stamp(n, kNone);
  std::vector<bool> in_cycle(n, false);
  std::size_t next = 0;
  for (std::size_t v = 0; v < n; ++v) {
    std::size_t x = v;
    while (x != root && stamp[x] == kNone) {
      stamp[x] = v;
      x = arcs[best[x]].from;
    }
    if (x == root || stamp[x] != v || in_cycle[x]) continue;
    std::size_t y = x;
    do {
      in_cycle[y] = true;
      comp[y] = next;
      y = arcs[best[y]].from;
    } while (y != x);
    ++next;
  }
  if (next == 0) return best;

  for (std::size_t v = 0; v < n; ++v) {
    if (comp[v] == kNone) comp[v] = next++;
  }
  std::vector<Arc> contracted;
  for (std::size_t i = 0; i < arcs.size(); ++i) {
    const Arc& a = arcs[i];
    if (comp[a.from] == comp[a.to]) continue;
    std::int64_t w = a.weight - (in_cycle[a.to] ? arcs[best[a.to]].weight : 0);
    contracted.push_back({comp[a.from], comp[a.to], w, i});
  }
  std::vector<std::size_t> sub = solve(next, comp[root], contracted);

  std::vector<std::size_t> chosen(n, kNone);
  for (std::size_t v = 0; v < n; ++v) {
    if (in_cycle[v]) chosen[v] = best[v];
  }
  // The arc entering a contracted cycle replaces that vertex's cycle arc.
  for (std::size_t c = 0; c < next; ++c) {
    if (c == comp[root]) continue;
    std::size_t i = contracted[sub[c]].origin;
    chosen[arcs[i].to] = i;
  }
  return chosen;
}

}  // namespace

std::vector<std::optional<std::size_t>> max_arborescence(
    std::size_t vertex_count, std::size_t root, const std::vector<WeightedEdge>& edges) {
  if (root >= vertex_count) throw Error("Unreachable", "root is not a vertex");
  std::vector<std::vector<std::size_t>> out(vertex_count);
  std::vector<Arc> arcs;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const WeightedEdge& e = edges[i];
    if (e.from >= vertex_count || e.to >= vertex_count) {
      throw Error("Unreachable", "edge endpoint out of range");
    }
    if (e.from == e.to) continue;
    out[e.from].push_back(e.to);
    arcs.push_back({e.from, e.to, e.weight, i});
  }

  std::vector<bool> seen(vertex_count, false);
  std::vector<std::size_t> stack{root};
  seen[root] = true;
  while (!stack.empty()) {
    std::size_t v = stack.back();
    stack.pop_back();
    for (std::size_t w : out[v]) {
      if (!seen[w]) {
        seen[w] = true;
        stack.push_back(w);
      }
    }
  }
  std::string cut;
  for (std::size_t v = 0; v < vertex_count; ++v) {
    if (!seen[v]) cut += (cut.empty() ? "" : ", ") + std::to_string(v);
  }
  if (!cut.empty()) throw Error("Unreachable", "not reachable from the root: " + cut);

  std::vector<std::size_t> chosen = solve(vertex_count, root, arcs);
  std::vector<std::optional<std::size_t>> parent(vertex_count);
  for (std::size_t v = 0; v < vertex_count; ++v) {
    if (v != root) parent[v] = arcs[chosen[v]].from;
  }
  return parent;
}

}  // namespace podhive::importer
