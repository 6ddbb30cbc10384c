#include "podhive/orchestrator.hpp"

#include <algorithm>
#include <deque>

namespace podhive::runtime {

using rules::ImportEntry;
using rules::ImportOrigin;

const char* to_string(PodState state) {
  switch (state) {
    case PodState::Unevaluated: return "Unevaluated";
    case PodState::Queued: return "Queued";
    case PodState::Running: return "Running";
    case PodState::Ok: return "Ok";
    case PodState::Error: return "Error";
    case PodState::Stale: return "Stale";
  }
  return "?";
}

const char* to_string(TraceStep::Kind kind) {
  switch (kind) {
    case TraceStep::Kind::Eval: return "Eval";
    case TraceStep::Kind::AddImport: return "AddImport";
    case TraceStep::Kind::DeleteImport: return "DeleteImport";
    case TraceStep::Kind::DeleteNames: return "DeleteNames";
  }
  return "?";
}

struct Orchestrator::Ctx {
  Ctx(const Tree& t, const rules::NameExtractor& extractor)
      : tree(t), resolver(t, extractor) {
    for (const ImportEntry& e : resolver.import_plan()) {
      if (plan_set.insert(e).second) plan.push_back(e);
    }
  }

  std::vector<std::string> names_of(const NodeId& pod) const {
    try {
      return resolver.defined_names(pod);
    } catch (const Error&) {
      return {};
    }
  }

  const Tree& tree;
  rules::Resolver resolver;
  std::vector<ImportEntry> plan;
  std::set<ImportEntry> plan_set;
};

Orchestrator::Orchestrator(KernelClient& kernel,
                           std::shared_ptr<const rules::NameExtractor> extractor)
    : kernel_(kernel), extractor_(std::move(extractor)) {}

void Orchestrator::record(TraceStep step) {
  step.seq = ++trace_seq_;
  trace_.push_back(step);
  if (observer_.on_trace) observer_.on_trace(trace_.back());
}

void Orchestrator::set_status(const NodeId& pod, PodStatus status) {
  auto& slot = statuses_[pod];
  slot = std::move(status);
  if (observer_.on_status) observer_.on_status(pod, slot);
}

PodStatus Orchestrator::status(const NodeId& pod) const {
  auto it = statuses_.find(pod);
  return it == statuses_.end() ? PodStatus{} : it->second;
}

void Orchestrator::code_changed(const NodeId& pod) {
  auto it = statuses_.find(pod);
  if (it == statuses_.end() || it->second.state != PodState::Ok) return;
  PodStatus s = it->second;
  s.state = PodState::Stale;
  set_status(pod, std::move(s));
}

void Orchestrator::forget(const NodeId& pod) {
  statuses_.erase(pod);
  defined_.erase(pod);
}

void Orchestrator::kernel_restarted() {
  ledger_.clear();
  defined_.clear();
  for (auto& [id, s] : statuses_) {
    if (s.state != PodState::Unevaluated) {
      s.state = PodState::Unevaluated;
      if (observer_.on_status) observer_.on_status(id, s);
    }
  }
}

bool Orchestrator::add_import(const ImportEntry& entry) {
  bool ok = true;
  try {
    kernel_.add_import(entry.from, entry.to, entry.name);
  } catch (const KernelError&) {
    // The source is not bound yet; replay delivers it once it is.
    ok = false;
  }
  TraceStep step;
  step.kind = TraceStep::Kind::AddImport;
  step.from = entry.from;
  step.ns = entry.to;
  step.names = {entry.name};
  step.ok = ok;
  record(std::move(step));
  return ok;
}

void Orchestrator::propagate(const Namespace& ns, const std::vector<std::string>& names) {
  std::deque<std::pair<Namespace, std::string>> queue;
  std::set<std::pair<Namespace, std::string>> seen;
  for (const std::string& n : names) {
    if (seen.insert({ns, n}).second) queue.emplace_back(ns, n);
  }
  while (!queue.empty()) {
    auto [from, name] = queue.front();
    queue.pop_front();
    for (const ImportEntry& e : ledger_) {
      if (e.from != from || e.name != name) continue;
      if (!seen.insert({e.to, name}).second) {
        warnings_.push_back("ReplayCycle: '" + name + "' reaches " + e.to + " twice");
        continue;
      }
      if (add_import(e)) queue.emplace_back(e.to, name);
    }
  }
}

void Orchestrator::cascade_delete(const Namespace& ns, const std::string& name) {
  std::deque<Namespace> queue{ns};
  std::set<Namespace> seen{ns};
  while (!queue.empty()) {
    Namespace from = queue.front();
    queue.pop_front();
    for (const ImportEntry& e : ledger_) {
      if (e.from != from || e.name != name || !seen.insert(e.to).second) continue;
      bool ok = true;
      try {
        kernel_.delete_import(e.to, name);
      } catch (const KernelError&) {
        ok = false;
      }
      TraceStep step;
      step.kind = TraceStep::Kind::DeleteImport;
      step.ns = e.to;
      step.names = {name};
      step.ok = ok;
      record(std::move(step));
      queue.push_back(e.to);
    }
  }
}

void Orchestrator::pull_into(const Namespace& ns, std::optional<ImportOrigin> origin) {
  std::vector<ImportEntry> entries;
  for (const ImportEntry& e : ledger_) {
    if (e.to == ns && (!origin || e.origin == *origin)) entries.push_back(e);
  }
  for (const ImportEntry& e : entries) {
    if (add_import(e)) propagate(e.to, {e.name});
  }
}

void Orchestrator::reconcile_remove(Ctx& ctx) {
  std::vector<ImportEntry> stale;
  for (const ImportEntry& e : ledger_) {
    if (!ctx.plan_set.count(e)) stale.push_back(e);
  }
  for (const ImportEntry& e : stale) ledger_.erase(e);
  for (const ImportEntry& e : stale) {
    bool ok = true;
    try {
      kernel_.delete_import(e.to, e.name);
    } catch (const KernelError&) {
      ok = false;
    }
    TraceStep step;
    step.kind = TraceStep::Kind::DeleteImport;
    step.ns = e.to;
    step.names = {e.name};
    step.ok = ok;
    record(std::move(step));
    cascade_delete(e.to, e.name);
  }
}

void Orchestrator::reconcile_add(Ctx& ctx) {
  for (const ImportEntry& e : ctx.plan) {
    if (!ledger_.insert(e).second) continue;
    if (add_import(e)) propagate(e.to, {e.name});
  }
}

void Orchestrator::retract_names(Ctx& ctx, const NodeId& pod) {
  auto it = defined_.find(pod);
  if (it == defined_.end()) return;
  const auto& [old_ns, old_names] = it->second;
  const Tree& tree = ctx.tree;
  NodeId scope = tree.scope_of(pod);
  Namespace ns = tree.namespace_of(scope);

  std::set<std::string> keep;
  if (old_ns == ns) {
    for (const NodeId& p : ctx.resolver.pods_in_scope(scope)) {
      for (const std::string& n : ctx.names_of(p)) keep.insert(n);
    }
  }
  std::vector<std::string> removed;
  for (const std::string& n : old_names) {
    if (!keep.count(n)) removed.push_back(n);
  }
  if (removed.empty()) return;
  bool ok = true;
  try {
    kernel_.delete_names(old_ns, removed);
  } catch (const KernelError&) {
    ok = false;
  }
  TraceStep step;
  step.kind = TraceStep::Kind::DeleteNames;
  step.ns = old_ns;
  step.names = removed;
  step.ok = ok;
  record(std::move(step));
  for (const std::string& n : removed) cascade_delete(old_ns, n);
}

PodStatus Orchestrator::execute(Ctx& ctx, const NodeId& pod) {
  const Tree& tree = ctx.tree;
  const Node& node = tree.node(pod);
  Namespace ns = tree.namespace_of(tree.scope_of(pod));
  std::vector<std::string> names = ctx.names_of(pod);

  bool explicit_imports = false;
  try {
    explicit_imports = !ctx.resolver.pod_names(pod).imports.empty();
  } catch (const Error&) {
  }
  if (explicit_imports) pull_into(ns, ImportOrigin::ExplicitPath);

  PodStatus status = statuses_[pod];
  status.state = PodState::Running;
  status.run_seq = ++run_seq_;
  status.stdout_text.clear();
  set_status(pod, status);

  TraceStep step;
  step.kind = TraceStep::Kind::Eval;
  step.pod = pod;
  step.ns = ns;
  step.names = names;
  try {
    EvalOutcome out = kernel_.eval_in_ns(
        ns, node.code, names, [&](const protocol::StreamChunk& chunk) {
          status.stdout_text += chunk.text;
          if (observer_.on_stream) observer_.on_stream(pod, chunk);
        });
    status.state = PodState::Ok;
    status.last_result = std::move(out.result);
    status.last_error.reset();
  } catch (const KernelError& e) {
    status.state = PodState::Error;
    status.last_result.reset();
    status.last_error = protocol::ErrorInfo{e.ename(), e.evalue()};
    step.ok = false;
  } catch (const Error& e) {
    status.state = PodState::Error;
    status.last_result.reset();
    status.last_error = protocol::ErrorInfo{e.code(), e.what()};
    set_status(pod, status);
    throw;
  }
  record(std::move(step));
  set_status(pod, status);
  defined_[pod] = {ns, names};
  propagate(ns, names);
  return status;
}

void Orchestrator::walk_test(Ctx& ctx, const NodeId& node, std::vector<RunEntry>& out) {
  const Tree& tree = ctx.tree;
  pull_into(tree.namespace_of(node), ImportOrigin::Test);
  if (tree.node(node).is_pod()) {
    out.push_back({node, execute(ctx, node)});
  } else {
    walk_deck(ctx, node, out);
  }
}

void Orchestrator::walk_utility(Ctx& ctx, const NodeId& node,
                                std::vector<RunEntry>& out) {
  const Tree& tree = ctx.tree;
  if (tree.node(node).is_pod()) {
    out.push_back({node, execute(ctx, node)});
  } else {
    walk_deck(ctx, node, out);
  }
  std::vector<std::string> names;
  for (const auto& r : ctx.resolver.visible_set(node).entries) {
    names.push_back(r.name);
  }
  propagate(tree.namespace_of(node), names);
}

void Orchestrator::walk_deck(Ctx& ctx, const NodeId& deck, std::vector<RunEntry>& out) {
  const Tree& tree = ctx.tree;
  const Node& d = tree.node(deck);
  for (const NodeId& c : d.children) {
    const Node& child = tree.node(c);
    if (!child.is_deck()) continue;
    if (child.flags.test) {
      walk_test(ctx, c, out);
    } else if (child.flags.utility) {
      walk_utility(ctx, c, out);
    } else {
      walk_deck(ctx, c, out);
      std::vector<std::string> names;
      try {
        for (const auto& r : ctx.resolver.export_set(c).entries) names.push_back(r.name);
      } catch (const Error& e) {
        warnings_.push_back(e.code() + ": " + e.what());
      }
      propagate(tree.namespace_of(c), names);
    }
  }
  for (const NodeId& c : d.children) {
    const Node& child = tree.node(c);
    if (!child.is_pod()) continue;
    if (child.flags.test) {
      walk_test(ctx, c, out);
    } else if (child.flags.utility) {
      walk_utility(ctx, c, out);
    } else {
      out.push_back({c, execute(ctx, c)});
    }
  }
}

PodStatus Orchestrator::single(const Tree& tree, const NodeId& pod) {
  const Node& n = tree.node(pod);
  if (!n.is_pod()) throw Error("NotAPod", "node " + pod.value + " is not a pod");
  PodStatus queued = status(pod);
  queued.state = PodState::Queued;
  set_status(pod, std::move(queued));
  Ctx ctx(tree, *extractor_);
  reconcile_remove(ctx);
  retract_names(ctx, pod);
  reconcile_add(ctx);
  std::vector<RunEntry> out;
  if (n.flags.test) {
    walk_test(ctx, pod, out);
  } else if (n.flags.utility) {
    walk_utility(ctx, pod, out);
  } else {
    out.push_back({pod, execute(ctx, pod)});
  }
  return out.back().status;
}

PodStatus Orchestrator::run_pod(const Tree& tree, const NodeId& pod) {
  return single(tree, pod);
}

PodStatus Orchestrator::reeval_pod(const Tree& tree, const NodeId& pod) {
  return single(tree, pod);
}

PodStatus Orchestrator::run_test(const Tree& tree, const NodeId& node) {
  if (!tree.node(node).flags.test) {
    throw Error("InvalidArgument", "node " + node.value + " is not a test node");
  }
  Ctx ctx(tree, *extractor_);
  reconcile_remove(ctx);
  reconcile_add(ctx);
  std::vector<RunEntry> out;
  walk_test(ctx, node, out);
  return out.empty() ? PodStatus{} : out.back().status;
}

PodStatus Orchestrator::run_utility(const Tree& tree, const NodeId& node) {
  if (!tree.node(node).flags.utility) {
    throw Error("InvalidArgument", "node " + node.value + " is not a utility node");
  }
  Ctx ctx(tree, *extractor_);
  reconcile_remove(ctx);
  reconcile_add(ctx);
  std::vector<RunEntry> out;
  walk_utility(ctx, node, out);
  return out.empty() ? PodStatus{} : out.back().status;
}

std::vector<RunEntry> Orchestrator::run_tree(const Tree& tree, const NodeId& deck) {
  if (!tree.node(deck).is_deck()) {
    throw Error("NotADeck", "node " + deck.value + " is not a deck");
  }
  Ctx ctx(tree, *extractor_);
  for (const NodeId& id : tree.preorder(deck)) {
    if (!tree.node(id).is_pod()) continue;
    PodStatus s = status(id);
    s.state = PodState::Queued;
    set_status(id, std::move(s));
  }
  reconcile_remove(ctx);
  reconcile_add(ctx);
  std::vector<RunEntry> out;
  const Node& d = tree.node(deck);
  if (d.flags.test) {
    walk_test(ctx, deck, out);
  } else if (d.flags.utility) {
    walk_utility(ctx, deck, out);
  } else {
    walk_deck(ctx, deck, out);
  }
  return out;
}

}  // namespace podhive::runtime
