#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "podhive/kernel_client.hpp"
#include "podhive/names.hpp"
#include "podhive/tree.hpp"

namespace podhive::runtime {

enum class PodState { Unevaluated, Queued, Running, Ok, Error, Stale };

const char* to_string(PodState state);

struct PodStatus {
  PodState state = PodState::Unevaluated;
  std::optional<protocol::ResultEnvelope> last_result;
  std::optional<protocol::ErrorInfo> last_error;
  std::uint64_t run_seq = 0;
  std::string stdout_text;

  bool operator==(const PodStatus&) const = default;
};

struct RunEntry {
  NodeId pod;
  PodStatus status;
};

struct TraceStep {
  enum class Kind { Eval, AddImport, DeleteImport, DeleteNames };

  std::uint64_t seq = 0;
  Kind kind = Kind::Eval;
  std::optional<NodeId> pod;  // Eval steps
  Namespace ns;               // Eval / DeleteImport / DeleteNames target
  Namespace from;             // AddImport source
  std::vector<std::string> names;
  bool ok = true;
};

const char* to_string(TraceStep::Kind kind);

/// Callbacks fired synchronously while runs progress.
struct Observer {
  std::function<void(const NodeId&, const PodStatus&)> on_status;
  std::function<void(const NodeId&, const protocol::StreamChunk&)> on_stream;
  std::function<void(const TraceStep&)> on_trace;
};

/// Drives a kernel through the tree: runs decks children-first, tracks pod
/// status, and keeps an import ledger whose entries are replayed whenever a
/// source binding changes, so copies in other namespaces stay current.
///
/// Every public operation takes the tree snapshot to act on. Not reentrant.
class Orchestrator {
 public:
  Orchestrator(KernelClient& kernel,
               std::shared_ptr<const rules::NameExtractor> extractor);

  void set_observer(Observer observer) { observer_ = std::move(observer); }

  /// Evaluates one pod, first bringing the ledger in line with the
  /// snapshot and retracting names the pod no longer defines.
  PodStatus run_pod(const Tree& tree, const NodeId& pod);
  /// Same as run_pod; kept separate for callers re-running after an edit.
  PodStatus reeval_pod(const Tree& tree, const NodeId& pod);
  /// Runs a test pod or test deck; returns the status of its last pod.
  PodStatus run_test(const Tree& tree, const NodeId& node);
  /// Runs a utility pod or deck, then pushes its names to its importers.
  PodStatus run_utility(const Tree& tree, const NodeId& node);
  /// Child decks first (depth-first, sibling order), then the deck's pods
  /// in index order. Continues past pod errors. Returns the execution trace.
  std::vector<RunEntry> run_tree(const Tree& tree, const NodeId& deck);

  /// Marks an Ok pod Stale after its code changed.
  void code_changed(const NodeId& pod);
  /// Forgets a deleted pod's status.
  void forget(const NodeId& pod);
  /// Clears ledger and bindings bookkeeping after the kernel restarted.
  void kernel_restarted();

  PodStatus status(const NodeId& pod) const;
  const std::unordered_map<NodeId, PodStatus>& statuses() const noexcept {
    return statuses_;
  }
  const std::set<rules::ImportEntry>& ledger() const noexcept { return ledger_; }
  const std::vector<TraceStep>& trace() const noexcept { return trace_; }
  void clear_trace() { trace_.clear(); }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }

 private:
  struct Ctx;

  void reconcile_remove(Ctx& ctx);
  void reconcile_add(Ctx& ctx);
  void retract_names(Ctx& ctx, const NodeId& pod);
  PodStatus single(const Tree& tree, const NodeId& pod);

  void walk_deck(Ctx& ctx, const NodeId& deck, std::vector<RunEntry>& out);
  void walk_test(Ctx& ctx, const NodeId& node, std::vector<RunEntry>& out);
  void walk_utility(Ctx& ctx, const NodeId& node, std::vector<RunEntry>& out);
  PodStatus execute(Ctx& ctx, const NodeId& pod);

  bool add_import(const rules::ImportEntry& entry);
  void pull_into(const Namespace& ns, std::optional<rules::ImportOrigin> origin);
  void propagate(const Namespace& ns, const std::vector<std::string>& names);
  void cascade_delete(const Namespace& ns, const std::string& name);

  void set_status(const NodeId& pod, PodStatus status);
  void record(TraceStep step);

  KernelClient& kernel_;
  std::shared_ptr<const rules::NameExtractor> extractor_;
  Observer observer_;
  std::set<rules::ImportEntry> ledger_;
  std::unordered_map<NodeId, PodStatus> statuses_;
  std::unordered_map<NodeId, std::pair<Namespace, std::vector<std::string>>> defined_;
  std::vector<TraceStep> trace_;
  std::vector<std::string> warnings_;
  std::uint64_t run_seq_ = 0;
  std::uint64_t trace_seq_ = 0;
};

}  // namespace podhive::runtime
