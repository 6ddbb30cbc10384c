#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "podhive/importer.hpp"
#include "podhive/kernel_client.hpp"
#include "podhive/orchestrator.hpp"
#include "podhive/repo_store.hpp"
#include "podhive/tree.hpp"

namespace podhive::api {

enum class EventKind { PodStatusChanged, TreeChanged, StreamOutput, RunTraceStep, Lagged };

const char* to_string(EventKind kind);

/// `body` is canonical JSON text.
struct ApiEvent {
  std::uint64_t seq = 0;
  EventKind kind = EventKind::TreeChanged;
  std::string body;

  bool operator==(const ApiEvent&) const = default;
};

/// One NDJSON frame: {"body":...,"kind":"...","seq":N} and a newline.
std::string encode_event(const ApiEvent& event);
/// Throws Error("MalformedFrame").
ApiEvent decode_event(std::string_view frame);

class EventBus;

/// A subscriber's queue. Once it overflows it is cleared, a Lagged event
/// is queued as its last entry, and nothing more is delivered.
class Subscription {
 public:
  /// Waits up to `timeout`; nullopt on timeout or when finished.
  std::optional<ApiEvent> next(std::chrono::milliseconds timeout);
  /// Closed and drained.
  bool finished() const;
  void close();

 private:
  friend class EventBus;
  explicit Subscription(std::size_t capacity) : capacity_(capacity) {}
  void push(const ApiEvent& event);

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<ApiEvent> queue_;
  std::size_t capacity_;
  bool closed_ = false;
};

/// Fan-out of events with a single global sequence. publish() never blocks
/// on a subscriber.
class EventBus {
 public:
  std::shared_ptr<Subscription> subscribe(std::size_t capacity = 4096);
  ApiEvent publish(EventKind kind, std::string body);
  std::uint64_t last_seq() const;
  std::size_t subscriber_count() const;
  /// Closes every subscription (shutdown).
  void close_all();

 private:
  mutable std::mutex mu_;
  std::uint64_t seq_ = 0;
  std::vector<std::weak_ptr<Subscription>> subs_;
};

struct Request {
  std::string method;
  std::string path;  // without the query string
  std::map<std::string, std::string> query;
  std::string body;
  std::string content_type = "application/json";
};

struct Response {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

/// HTTP status for an error code: 404 unknown node, 409 conflicts and the
/// repo lock, 503 kernel trouble, 400 for everything else.
int http_status_for(const std::string& error_code);

struct ServiceOptions {
  /// Directory holding repo.codepod.json. Empty: in-memory only.
  std::filesystem::path repo_dir;
  /// Export directory used by /diff and /commit. Defaults to
  /// <repo_dir>/export; required when repo_dir is empty.
  std::filesystem::path export_dir;
  /// Defaults to the embedded podlang kernel.
  std::unique_ptr<KernelClient> kernel;
  /// Seed for node ids (tests); random when unset.
  std::optional<std::uint64_t> id_seed;
};

/// The repo service behind the HTTP API. Every mutation and run goes
/// through one writer lock, so requests apply in a total order; reads are
/// served from the last committed snapshot. Each mutation bumps `version`
/// (echoed in responses and TreeChanged events) and is saved to disk.
class Service {
 public:
  /// Loads or creates the repo and takes its lock. Throws Error("LockHeld").
  explicit Service(ServiceOptions options);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  Response handle(const Request& request);

  EventBus& events() { return bus_; }
  std::shared_ptr<const Tree> snapshot() const;
  std::uint64_t version() const;
  runtime::PodStatus status(const NodeId& pod) const;

 private:
  Response dispatch(const Request& request);

  Response get_tree();
  Response create_node(const std::string& body);
  Response patch_node(const NodeId& id, const std::string& body);
  Response delete_node(const NodeId& id);
  Response run_pod(const NodeId& id);
  Response run_tree(const NodeId& id);
  Response restart_kernel();
  Response diff();
  Response commit(const std::string& body);
  Response import_callgraph(const std::string& body);
  Response callgraph_stats(const std::map<std::string, std::string>& query);
  Response export_files();

  /// Swaps in the mutated tree, saves it and announces the change.
  std::uint64_t commit_tree(Tree next, const std::string& op, const NodeId& node);
  void install_observer();
  void reset_runtime(const std::string& language);

  ServiceOptions options_;
  std::unique_ptr<store::RepoLock> lock_;
  std::string kernel_language_ = "podlang";
  EventBus bus_;

  std::mutex writer_mu_;          // serializes mutations and runs
  mutable std::mutex state_mu_;   // guards tree_, version_, statuses_
  std::shared_ptr<const Tree> tree_;
  std::uint64_t version_ = 0;
  std::unordered_map<NodeId, runtime::PodStatus> statuses_;

  std::unique_ptr<runtime::Orchestrator> orch_;
  std::optional<importer::CallGraph> callgraph_;
};

/// HTTP front end. GET /events streams NDJSON ApiEvent frames, starting
/// with a greeting line {"subscribed":true,"seq":N}.
class HttpServer {
 public:
  explicit HttpServer(Service& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds (port 0 picks a free one) and serves on a background thread.
  /// Returns the bound port. Throws Error("IoFailure").
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Blocks serving on the calling thread.
  void listen(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace podhive::api
