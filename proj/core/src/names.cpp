#include "podhive/names.hpp"

#include <algorithm>
#include <regex>
#include <sstream>

#include "podhive/podlang.hpp"

namespace podhive::rules {

namespace {

void append_unique(std::vector<std::string>& out, const std::string& name) {
  if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
}

ImportOrigin origin_of(Rule rule) {
  switch (rule) {
    case Rule::PublicChild: return ImportOrigin::PublicChild;
    case Rule::Utility: return ImportOrigin::Utility;
    case Rule::TestParentAccess: return ImportOrigin::Test;
    case Rule::ExplicitPath: return ImportOrigin::ExplicitPath;
    case Rule::SameNamespace: break;
  }
  throw Error("InvalidArgument", "same-namespace names need no import");
}

}  // namespace

PodNames PodlangExtractor::extract(const Node& pod) const {
  PodNames out;
  podlang::Program program;
  try {
    program = podlang::parse(pod.code);
  } catch (const Error& e) {
    throw Error("ParseFailure", e.what());
  }
  out.defined = podlang::defined_names(program);
  for (const podlang::Item& item : program.items) {
    if (const auto* imp = std::get_if<podlang::ImportStmt>(&item)) {
      for (const std::string& name : imp->names) {
        out.imports.push_back({imp->path, name});
      }
    }
  }
  return out;
}

PodNames PatternExtractor::extract(const Node& pod) const {
  static const std::regex def_re(R"(^(?:async\s+)?def\s+([A-Za-z_]\w*)\s*\()");
  static const std::regex class_re(R"(^class\s+([A-Za-z_]\w*))");
  static const std::regex assign_re(R"(^([A-Za-z_]\w*)\s*(?::[^=]*)?=[^=])");
  static const std::regex import_re(R"re(^from\s+"([^"]*)"\s+import\s+(.+)$)re");
  PodNames out;
  std::istringstream in(pod.code);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::smatch m;
    if (std::regex_search(line, m, def_re) || std::regex_search(line, m, class_re) ||
        std::regex_search(line, m, assign_re)) {
      append_unique(out.defined, m[1].str());
    } else if (std::regex_search(line, m, import_re)) {
      std::string list = m[2].str();
      static const std::regex ident(R"([A-Za-z_]\w*)");
      for (auto it = std::sregex_iterator(list.begin(), list.end(), ident);
           it != std::sregex_iterator(); ++it) {
        out.imports.push_back({m[1].str(), it->str()});
      }
    }
  }
  return out;
}

FixedNameExtractor::FixedNameExtractor(std::unordered_map<NodeId, PodNames> names)
    : names_(std::move(names)) {}

void FixedNameExtractor::set(const NodeId& pod, PodNames names) {
  names_.insert_or_assign(pod, std::move(names));
}

PodNames FixedNameExtractor::extract(const Node& pod) const {
  auto it = names_.find(pod.id);
  return it == names_.end() ? PodNames{} : it->second;
}

std::unique_ptr<NameExtractor> extractor_for_language(const std::string& language) {
  if (language == "podlang") return std::make_unique<PodlangExtractor>();
  return std::make_unique<PatternExtractor>();
}

const char* to_string(Rule rule) {
  switch (rule) {
    case Rule::SameNamespace: return "SameNamespace";
    case Rule::PublicChild: return "PublicChild";
    case Rule::Utility: return "Utility";
    case Rule::TestParentAccess: return "TestParentAccess";
    case Rule::ExplicitPath: return "ExplicitPath";
  }
  return "?";
}

const char* to_string(ImportOrigin origin) {
  switch (origin) {
    case ImportOrigin::PublicChild: return "PublicChild";
    case ImportOrigin::Utility: return "Utility";
    case ImportOrigin::Test: return "Test";
    case ImportOrigin::ExplicitPath: return "ExplicitPath";
  }
  return "?";
}

ImportOrigin parse_import_origin(const std::string& text) {
  for (ImportOrigin o : {ImportOrigin::PublicChild, ImportOrigin::Utility,
                         ImportOrigin::Test, ImportOrigin::ExplicitPath}) {
    if (text == to_string(o)) return o;
  }
  throw Error("InvalidArgument", "unknown import origin '" + text + "'");
}

const Resolution* NameSet::find(const std::string& name) const {
  for (const Resolution& r : entries) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

std::vector<std::string> NameSet::names() const {
  std::vector<std::string> out;
  out.reserve(entries.size());
  for (const Resolution& r : entries) out.push_back(r.name);
  return out;
}

void NameSet::require_unambiguous() const {
  if (collisions.empty()) return;
  std::string msg;
  for (const Collision& c : collisions) {
    if (!msg.empty()) msg += "; ";
    msg += "'" + c.name + "' from";
    for (const Resolution& r : c.candidates) {
      msg += " " + r.source_ns + " (" + to_string(r.rule) + ")";
    }
  }
  throw Error("NameCollision", msg);
}

Resolver::Resolver(const Tree& tree, const NameExtractor& extractor) : tree_(tree) {
  for (const NodeId& id : tree_.preorder()) {
    const Node& n = tree_.node(id);
    if (!n.is_pod()) continue;
    try {
      pod_names_.emplace(id, extractor.extract(n));
    } catch (const Error& e) {
      pod_names_.emplace(id, PodNames{});
      diagnostics_.emplace(id, e.what());
    }
  }
  // Export names bottom-up so a deck's reexports can consult its children.
  std::vector<NodeId> order = tree_.preorder();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const Node& d = tree_.node(*it);
    if (!d.is_deck()) continue;
    std::vector<std::string> names;
    for (const NodeId& c : d.children) {
      const Node& child = tree_.node(c);
      if (!child.is_pod() || !child.is_regular() || !child.flags.is_public) continue;
      const PodNames& pn = pod_names_.at(c);
      for (const std::string& n : pn.defined) append_unique(names, n);
      for (const PodNames::Import& imp : pn.imports) append_unique(names, imp.name);
    }
    for (const std::string& r : d.reexports) {
      bool found = false;
      for (const NodeId& c : d.children) {
        const Node& child = tree_.node(c);
        if (!child.is_deck() || !child.is_regular()) continue;
        const auto& cn = export_names_.at(c);
        if (std::find(cn.begin(), cn.end(), r) != cn.end()) {
          found = true;
          break;
        }
      }
      if (found) {
        append_unique(names, r);
      } else {
        missing_reexports_[d.id].push_back(r);
      }
    }
    export_names_.emplace(d.id, std::move(names));
  }
  for (const NodeId& id : order) {
    if (tree_.owns_namespace(id)) scope_of_ns_.emplace(tree_.namespace_of(id), id);
  }
}

const PodNames& Resolver::pod_names(const NodeId& pod) const {
  auto it = pod_names_.find(pod);
  if (it == pod_names_.end()) {
    throw Error("NotAPod", "node " + pod.value + " is not a pod");
  }
  auto diag = diagnostics_.find(pod);
  if (diag != diagnostics_.end()) throw Error("ParseFailure", diag->second);
  return it->second;
}

std::vector<std::string> Resolver::defined_names(const NodeId& pod) const {
  return pod_names(pod).defined;
}

const std::vector<std::string>& Resolver::export_names(const NodeId& deck) const {
  return export_names_.at(deck);
}

std::vector<std::string> Resolver::utility_names(const NodeId& id) const {
  const Node& n = tree_.node(id);
  if (n.is_deck()) return export_names(id);
  std::vector<std::string> names;
  if (!n.flags.is_public) return names;
  const PodNames& pn = pod_names_.at(id);
  for (const std::string& s : pn.defined) append_unique(names, s);
  for (const PodNames::Import& imp : pn.imports) append_unique(names, imp.name);
  return names;
}

std::vector<NodeId> Resolver::pods_in_scope(const NodeId& scope) const {
  const Node& s = tree_.node(scope);
  if (s.is_pod()) return {s.id};
  std::vector<NodeId> out;
  for (const NodeId& c : s.children) {
    const Node& child = tree_.node(c);
    if (child.is_pod() && child.is_regular()) out.push_back(c);
  }
  return out;
}

std::vector<std::string> Resolver::own_defined(const NodeId& scope) const {
  std::vector<std::string> out;
  for (const NodeId& p : pods_in_scope(scope)) {
    for (const std::string& n : pod_names_.at(p).defined) append_unique(out, n);
  }
  return out;
}

std::optional<NodeId> Resolver::import_target(const NodeId& pod,
                                              const std::string& path) const {
  try {
    NodeId base = *tree_.node(pod).parent;
    return tree_.scope_of(tree_.resolve_path(base, TreePath::parse(path)));
  } catch (const Error&) {
    return std::nullopt;
  }
}

void Resolver::candidates(const NodeId& scope, const std::string& name,
                          bool first_only, Guard& guard,
                          std::vector<Resolution>& out) const {
  auto key = std::make_pair(scope.value, name);
  if (!guard.insert(key).second) return;
  struct Release {
    Guard& g;
    std::pair<std::string, std::string> k;
    ~Release() { g.erase(k); }
  } release{guard, key};

  const Node& s = tree_.node(scope);
  const Namespace ns = tree_.namespace_of(scope);
  auto done = [&] { return first_only && !out.empty(); };

  // Rule 1: defined by a pod evaluated in this namespace.
  for (const NodeId& p : pods_in_scope(scope)) {
    const auto& defined = pod_names_.at(p).defined;
    if (std::find(defined.begin(), defined.end(), name) != defined.end()) {
      out.push_back({name, ns, ns, Rule::SameNamespace});
      break;
    }
  }
  if (done()) return;

  // Rule 5: explicit imports by path.
  for (const NodeId& p : pods_in_scope(scope)) {
    for (const PodNames::Import& imp : pod_names_.at(p).imports) {
      if (imp.name != name) continue;
      auto target = import_target(p, imp.path);
      if (!target || *target == scope) continue;
      if (auto r = first(*target, name, guard)) {
        out.push_back({name, r->source_ns, tree_.namespace_of(*target),
                       Rule::ExplicitPath});
        if (done()) return;
      }
    }
  }

  if (s.is_deck()) {
    // Rule 2: exports of regular child decks.
    for (const NodeId& c : s.children) {
      const Node& child = tree_.node(c);
      if (!child.is_deck() || !child.is_regular()) continue;
      const auto& names = export_names(c);
      if (std::find(names.begin(), names.end(), name) == names.end()) continue;
      if (auto r = first(c, name, guard)) {
        out.push_back({name, r->source_ns, tree_.namespace_of(c), Rule::PublicChild});
        if (done()) return;
      }
    }
    // Rule 3: utility children of this deck and of every ancestor, nearest first.
    std::optional<NodeId> anc = scope;
    while (anc) {
      const Node& a = tree_.node(*anc);
      for (const NodeId& c : a.children) {
        const Node& u = tree_.node(c);
        if (!u.flags.utility || c == scope) continue;
        auto names = utility_names(c);
        if (std::find(names.begin(), names.end(), name) == names.end()) continue;
        if (auto r = first(c, name, guard)) {
          out.push_back({name, r->source_ns, tree_.namespace_of(c), Rule::Utility});
          if (done()) return;
        }
      }
      anc = a.parent;
    }
  }

  // Rule 4: test nodes read their parent deck.
  if (s.flags.test && s.parent) {
    if (auto r = first(*s.parent, name, guard)) {
      out.push_back({name, r->source_ns, tree_.namespace_of(*s.parent),
                     Rule::TestParentAccess});
    }
  }
}

std::optional<Resolution> Resolver::first(const NodeId& scope, const std::string& name,
                                          Guard& guard) const {
  std::vector<Resolution> out;
  candidates(scope, name, true, guard, out);
  if (out.empty()) return std::nullopt;
  return out.front();
}

std::vector<std::string> Resolver::candidate_names(const NodeId& scope) const {
  const Node& s = tree_.node(scope);
  std::vector<std::string> names = own_defined(scope);
  for (const NodeId& p : pods_in_scope(scope)) {
    for (const PodNames::Import& imp : pod_names_.at(p).imports) {
      append_unique(names, imp.name);
    }
  }
  if (s.is_deck()) {
    for (const NodeId& c : s.children) {
      const Node& child = tree_.node(c);
      if (!child.is_deck() || !child.is_regular()) continue;
      for (const std::string& n : export_names(c)) append_unique(names, n);
    }
    std::optional<NodeId> anc = scope;
    while (anc) {
      const Node& a = tree_.node(*anc);
      for (const NodeId& c : a.children) {
        if (!tree_.node(c).flags.utility || c == scope) continue;
        for (const std::string& n : utility_names(c)) append_unique(names, n);
      }
      anc = a.parent;
    }
  }
  if (s.flags.test && s.parent) {
    for (const std::string& n : candidate_names(*s.parent)) append_unique(names, n);
  }
  return names;
}

NameSet Resolver::build_set(const NodeId& scope,
                            const std::vector<std::string>& names) const {
  NameSet set;
  for (const std::string& name : names) {
    Guard guard;
    std::vector<Resolution> all;
    candidates(scope, name, false, guard, all);
    if (all.empty()) continue;
    set.entries.push_back(all.front());
    std::set<Namespace> sources;
    for (const Resolution& r : all) sources.insert(r.source_ns);
    if (sources.size() > 1) set.collisions.push_back({name, std::move(all)});
  }
  return set;
}

NameSet Resolver::export_set(const NodeId& deck) const {
  const Node& d = tree_.node(deck);
  if (!d.is_deck()) {
    throw Error("NotADeck", "node " + deck.value + " is not a deck");
  }
  auto missing = missing_reexports_.find(deck);
  if (missing != missing_reexports_.end()) {
    std::string list;
    for (const std::string& n : missing->second) list += (list.empty() ? "" : ", ") + n;
    throw Error("ReexportNotFound", "deck " + tree_.namespace_of(deck) +
                                        " reexports names no child deck exports: " +
                                        list);
  }
  NameSet set = build_set(deck, export_names(deck));
  set.collisions.clear();
  return set;
}

NameSet Resolver::visible_set(const NodeId& node) const {
  NodeId scope = tree_.scope_of(node);
  return build_set(scope, candidate_names(scope));
}

std::optional<Resolution> Resolver::try_resolve(const std::string& name,
                                                const NodeId& from) const {
  Guard guard;
  return first(tree_.scope_of(from), name, guard);
}

Resolution Resolver::resolve(const std::string& name, const NodeId& from) const {
  if (auto r = try_resolve(name, from)) return *r;
  throw Error("NotVisible", "'" + name + "' is not visible from " +
                                tree_.namespace_of(tree_.scope_of(from)));
}

std::vector<NodeId> Resolver::scopes_postorder() const {
  std::vector<NodeId> out;
  std::vector<std::pair<NodeId, bool>> stack{{tree_.root(), false}};
  while (!stack.empty()) {
    auto [id, expanded] = stack.back();
    stack.pop_back();
    if (expanded) {
      out.push_back(id);
      continue;
    }
    const Node& n = tree_.node(id);
    if (!tree_.owns_namespace(id)) continue;
    stack.push_back({id, true});
    for (auto it = n.children.rbegin(); it != n.children.rend(); ++it) {
      stack.push_back({*it, false});
    }
  }
  return out;
}

bool Resolver::via_cycles(const NodeId& scope, const std::string& name,
                          const Namespace& via) const {
  Namespace hop = via;
  for (std::size_t steps = 0; steps <= scope_of_ns_.size(); ++steps) {
    auto it = scope_of_ns_.find(hop);
    if (it == scope_of_ns_.end()) return false;
    if (it->second == scope) return true;
    Guard guard;
    auto r = first(it->second, name, guard);
    if (!r || r->rule == Rule::SameNamespace) return false;
    hop = r->via_ns;
  }
  return true;
}

std::vector<ImportEntry> Resolver::imports_into(const NodeId& scope) const {
  std::vector<ImportEntry> out;
  const Namespace to = tree_.namespace_of(scope);
  for (const std::string& name : candidate_names(scope)) {
    Guard guard;
    auto r = first(scope, name, guard);
    if (!r || r->rule == Rule::SameNamespace) continue;
    // Each hop resolves correctly on its own, but two namespaces can name
    // each other as the way in (a public pod re-exporting an explicit
    // import from its ancestor). Then neither copy would ever be bound, so
    // take the binding from where it is defined.
    Namespace from = via_cycles(scope, name, r->via_ns) ? r->source_ns : r->via_ns;
    out.push_back({from, to, name, origin_of(r->rule)});
  }
  return out;
}

std::vector<ImportEntry> Resolver::import_plan() const {
  std::vector<ImportEntry> plan;
  for (const NodeId& scope : scopes_postorder()) {
    auto entries = imports_into(scope);
    plan.insert(plan.end(), entries.begin(), entries.end());
  }
  return plan;
}

}  // namespace podhive::rules
