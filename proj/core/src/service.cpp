#include <sstream>

#include <nlohmann/json.hpp>

#include "podhive/server.hpp"

namespace podhive::api {

using nlohmann::json;
using runtime::PodState;
using runtime::PodStatus;

namespace {

json status_json(const PodStatus& s) {
  json j{{"state", runtime::to_string(s.state)},
         {"run_seq", s.run_seq},
         {"stdout", s.stdout_text},
         {"result", nullptr},
         {"error", nullptr}};
  if (s.last_result) j["result"] = {{"mime", s.last_result->mime}, {"data", s.last_result->data}};
  if (s.last_error) j["error"] = {{"ename", s.last_error->ename}, {"evalue", s.last_error->evalue}};
  return j;
}

json trace_json(const runtime::TraceStep& t) {
  return {{"seq", t.seq},
          {"kind", runtime::to_string(t.kind)},
          {"pod", t.pod ? json(t.pod->value) : json(nullptr)},
          {"ns", t.ns},
          {"from", t.from},
          {"names", t.names},
          {"ok", t.ok}};
}

Response json_response(const json& j, int status = 200) {
  return Response{status, j.dump() + "\n", "application/json"};
}

Response error_response(const std::string& code, const std::string& message) {
  return json_response({{"error", {{"code", code}, {"message", message}}}}, http_status_for(code));
}

json parse_body(const std::string& body) {
  if (body.empty()) return json::object();
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded()) throw Error("InvalidArgument", "request body is not JSON");
  if (!j.is_object()) throw Error("InvalidArgument", "request body must be a JSON object");
  return j;
}

template <class T>
T member(const json& obj, const char* key) {
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error("InvalidArgument", std::string("field '") + key + "' is missing or mistyped");
  }
}

template <class T>
std::optional<T> opt_member(const json& obj, const char* key) {
  if (!obj.contains(key) || obj[key].is_null()) return std::nullopt;
  return member<T>(obj, key);
}

NodeFlags merge_flags(NodeFlags f, const json& j) {
  if (!j.is_object()) throw Error("InvalidArgument", "'flags' must be an object");
  if (auto v = opt_member<bool>(j, "public")) f.is_public = *v;
  if (auto v = opt_member<bool>(j, "utility")) f.utility = *v;
  if (auto v = opt_member<bool>(j, "test")) f.test = *v;
  return f;
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::stringstream ss(path);
  std::string part;
  while (std::getline(ss, part, '/')) {
    if (!part.empty()) parts.push_back(part);
  }
  return parts;
}

}  // namespace

int http_status_for(const std::string& code) {
  if (code == "UnknownNode" || code == "NotFound" || code == "NoCallGraph") return 404;
  if (code == "LockHeld" || code == "VersionConflict" || code == "Conflict") return 409;
  if (code == "KernelUnavailable" || code == "Timeout" || code == "TransportClosed") return 503;
  if (code == "MethodNotAllowed") return 405;
  if (code == "Internal") return 500;
  return 400;
}

Service::Service(ServiceOptions options) : options_(std::move(options)) {
  if (!options_.kernel) options_.kernel = std::make_unique<EmbeddedKernelClient>();
  if (options_.export_dir.empty() && !options_.repo_dir.empty()) {
    options_.export_dir = options_.repo_dir / "export";
  }
  Tree tree = options_.id_seed ? Tree(IdGenerator(*options_.id_seed)) : Tree();
  if (!options_.repo_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(options_.repo_dir, ec);
    if (ec) throw Error("IoFailure", "cannot create " + options_.repo_dir.string());
    lock_ = std::make_unique<store::RepoLock>(options_.repo_dir);
    auto doc_path = options_.repo_dir / store::kDocumentFile;
    if (std::filesystem::exists(doc_path)) {
      store::RepoDocument doc = store::load_file(doc_path);
      tree = std::move(doc.tree);
      kernel_language_ = doc.kernel_language;
    } else {
      store::save_file(doc_path, tree, kernel_language_);
    }
  }
  tree_ = std::make_shared<const Tree>(std::move(tree));
  reset_runtime(kernel_language_);
}

Service::~Service() = default;

std::shared_ptr<const Tree> Service::snapshot() const {
  std::lock_guard lk(state_mu_);
  return tree_;
}

std::uint64_t Service::version() const {
  std::lock_guard lk(state_mu_);
  return version_;
}

PodStatus Service::status(const NodeId& pod) const {
  std::lock_guard lk(state_mu_);
  auto it = statuses_.find(pod);
  return it == statuses_.end() ? PodStatus{} : it->second;
}

void Service::reset_runtime(const std::string& language) {
  std::shared_ptr<const rules::NameExtractor> ex = rules::extractor_for_language(language);
  orch_ = std::make_unique<runtime::Orchestrator>(*options_.kernel, std::move(ex));
  {
    std::lock_guard lk(state_mu_);
    statuses_.clear();
  }
  install_observer();
}

void Service::install_observer() {
  runtime::Observer obs;
  obs.on_status = [this](const NodeId& id, const PodStatus& s) {
    {
      std::lock_guard lk(state_mu_);
      statuses_[id] = s;
    }
    bus_.publish(EventKind::PodStatusChanged,
                 json{{"pod", id.value}, {"status", status_json(s)}}.dump());
  };
  obs.on_stream = [this](const NodeId& id, const protocol::StreamChunk& c) {
    bus_.publish(EventKind::StreamOutput,
                 json{{"pod", id.value},
                      {"channel", c.channel == protocol::Channel::Stdout ? "stdout" : "stderr"},
                      {"text", c.text}}
                     .dump());
  };
  obs.on_trace = [this](const runtime::TraceStep& t) {
    bus_.publish(EventKind::RunTraceStep, trace_json(t).dump());
  };
  orch_->set_observer(std::move(obs));
}

std::uint64_t Service::commit_tree(Tree next, const std::string& op, const NodeId& node) {
  next.validate();
  if (!options_.repo_dir.empty()) {
    store::save_file(options_.repo_dir / store::kDocumentFile, next, kernel_language_);
  }
  std::uint64_t v;
  {
    std::lock_guard lk(state_mu_);
    tree_ = std::make_shared<const Tree>(std::move(next));
    v = ++version_;
  }
  bus_.publish(EventKind::TreeChanged,
               json{{"version", v}, {"op", op}, {"node", node.value}}.dump());
  return v;
}

Response Service::handle(const Request& request) {
  try {
    return dispatch(request);
  } catch (const Error& e) {
    return error_response(e.code(), e.what());
  } catch (const std::exception& e) {
    return error_response("Internal", e.what());
  }
}

Response Service::dispatch(const Request& r) {
  auto parts = split_path(r.path);
  const std::string& m = r.method;
  auto is = [&](const char* method, std::initializer_list<const char*> shape) {
    if (m != method || parts.size() != shape.size()) return false;
    std::size_t i = 0;
    for (const char* s : shape) {
      if (*s != '*' && parts[i] != s) return false;
      ++i;
    }
    return true;
  };

  if (is("GET", {"tree"})) return get_tree();
  if (is("POST", {"nodes"})) return create_node(r.body);
  if (is("PATCH", {"nodes", "*"})) return patch_node(NodeId{parts[1]}, r.body);
  if (is("DELETE", {"nodes", "*"})) return delete_node(NodeId{parts[1]});
  if (is("POST", {"run", "pod", "*"})) return run_pod(NodeId{parts[2]});
  if (is("POST", {"run", "tree", "*"})) return run_tree(NodeId{parts[2]});
  if (is("POST", {"run", "tree"})) return run_tree(snapshot()->root());
  if (is("POST", {"kernel", "restart"})) return restart_kernel();
  if (is("GET", {"diff"})) return diff();
  if (is("POST", {"commit"})) return commit(r.body);
  if (is("POST", {"import", "callgraph"})) return import_callgraph(r.body);
  if (is("GET", {"stats", "callgraph"})) return callgraph_stats(r.query);
  if (is("GET", {"export", "files"})) return export_files();
  throw Error("NotFound", "no route for " + m + " " + r.path);
}

Response Service::get_tree() {
  std::shared_ptr<const Tree> t;
  std::uint64_t v;
  json statuses = json::object();
  {
    std::lock_guard lk(state_mu_);
    t = tree_;
    v = version_;
    for (const auto& [id, s] : statuses_) statuses[id.value] = status_json(s);
  }
  return json_response({{"version", v},
                        {"root", t->root().value},
                        {"document", json::parse(store::save(*t, kernel_language_))},
                        {"statuses", std::move(statuses)}});
}

Response Service::create_node(const std::string& body) {
  json j = parse_body(body);
  std::lock_guard w(writer_mu_);
  Tree next = *snapshot();
  if (auto iv = opt_member<std::uint64_t>(j, "if_version"); iv && *iv != version()) {
    throw Error("VersionConflict", "tree is at version " + std::to_string(version()));
  }
  NodeId parent{member<std::string>(j, "parent")};
  std::string kind = member<std::string>(j, "kind");
  if (kind != "pod" && kind != "deck") throw Error("InvalidArgument", "kind must be 'pod' or 'deck'");
  NodeKind k = kind == "deck" ? NodeKind::Deck : NodeKind::Pod;
  std::size_t index = next.node(parent).children.size();
  if (auto i = opt_member<std::size_t>(j, "index")) index = *i;
  NodeId id = j.contains("id") ? next.create_node(parent, k, index, NodeId{member<std::string>(j, "id")})
                               : next.create_node(parent, k, index);
  if (auto name = opt_member<std::string>(j, "name")) next.rename(id, *name);
  if (j.contains("flags")) next.set_flags(id, merge_flags(next.node(id).flags, j["flags"]));
  if (auto code = opt_member<std::string>(j, "code")) next.set_code(id, *code);
  if (auto rx = opt_member<std::vector<std::string>>(j, "reexports")) next.set_reexports(id, *rx);
  std::uint64_t v = commit_tree(std::move(next), "create", id);
  return json_response({{"id", id.value}, {"version", v}}, 201);
}

Response Service::patch_node(const NodeId& id, const std::string& body) {
  json j = parse_body(body);
  std::lock_guard w(writer_mu_);
  Tree next = *snapshot();
  if (auto iv = opt_member<std::uint64_t>(j, "if_version"); iv && *iv != version()) {
    throw Error("VersionConflict", "tree is at version " + std::to_string(version()));
  }
  next.node(id);  // UnknownNode
  bool code_changed = false;
  if (auto name = opt_member<std::string>(j, "name")) next.rename(id, *name);
  if (j.contains("flags")) next.set_flags(id, merge_flags(next.node(id).flags, j["flags"]));
  if (auto code = opt_member<std::string>(j, "code")) {
    code_changed = next.node(id).code != *code;
    next.set_code(id, *code);
  }
  if (auto rx = opt_member<std::vector<std::string>>(j, "reexports")) next.set_reexports(id, *rx);
  if (auto folded = opt_member<bool>(j, "folded")) next.set_folded(id, *folded);
  if (j.contains("move")) {
    const json& mv = j["move"];
    if (!mv.is_object()) throw Error("InvalidArgument", "'move' must be an object");
    NodeId parent{member<std::string>(mv, "parent")};
    std::size_t index = next.node(parent).children.size();
    if (auto i = opt_member<std::size_t>(mv, "index")) index = *i;
    next.move_node(id, parent, index);
  }
  std::uint64_t v = commit_tree(std::move(next), "patch", id);
  if (code_changed) orch_->code_changed(id);
  return json_response({{"id", id.value}, {"version", v}});
}

Response Service::delete_node(const NodeId& id) {
  std::lock_guard w(writer_mu_);
  Tree next = *snapshot();
  std::vector<NodeId> gone = next.preorder(id);
  next.delete_node(id);
  std::uint64_t v = commit_tree(std::move(next), "delete", id);
  {
    std::lock_guard lk(state_mu_);
    for (const NodeId& g : gone) statuses_.erase(g);
  }
  for (const NodeId& g : gone) orch_->forget(g);
  return json_response({{"id", id.value}, {"version", v}});
}

Response Service::run_pod(const NodeId& id) {
  std::lock_guard w(writer_mu_);
  auto t = snapshot();
  const Node& n = t->node(id);
  PodStatus s;
  if (n.flags.test) {
    s = orch_->run_test(*t, id);
  } else if (n.flags.utility) {
    s = orch_->run_utility(*t, id);
  } else {
    s = orch_->run_pod(*t, id);
  }
  return json_response({{"pod", id.value}, {"status", status_json(s)}});
}

Response Service::run_tree(const NodeId& id) {
  std::lock_guard w(writer_mu_);
  auto t = snapshot();
  std::vector<runtime::RunEntry> entries = orch_->run_tree(*t, id);
  json trace = json::array();
  for (const auto& e : entries) trace.push_back({{"pod", e.pod.value}, {"status", status_json(e.status)}});
  return json_response({{"deck", id.value}, {"trace", std::move(trace)}});
}

Response Service::restart_kernel() {
  std::lock_guard w(writer_mu_);
  options_.kernel->restart();
  orch_->kernel_restarted();
  return json_response({{"restarted", true}});
}

Response Service::diff() {
  std::lock_guard w(writer_mu_);
  if (options_.export_dir.empty()) throw Error("InvalidArgument", "no export directory configured");
  store::Manifest current = store::export_files(*snapshot(), options_.export_dir, kernel_language_);
  store::GitRepo git(options_.export_dir);
  git.init();
  std::string text = git.working_diff();
  store::Manifest base = current;
  if (auto head = git.show_head(std::string(store::kManifestFile))) {
    base = store::Manifest::from_json(*head);
  }
  store::DiffReport report = store::pod_diff(base, text);
  json pods = json::array();
  for (const auto& p : report.pods) {
    json hunks = json::array();
    for (const auto& h : p.hunks) {
      hunks.push_back({{"old_start", h.old_start},
                       {"old_count", h.old_count},
                       {"new_start", h.new_start},
                       {"new_count", h.new_count},
                       {"lines", h.lines}});
    }
    pods.push_back({{"pod", p.pod.value}, {"change", store::to_string(p.change)}, {"hunks", hunks}});
  }
  json moved = json::array();
  for (const auto& id : report.moved) moved.push_back(id.value);
  return json_response({{"pods", std::move(pods)},
                        {"moved", std::move(moved)},
                        {"metadata", report.metadata},
                        {"unknown", report.unknown},
                        {"diff", text}});
}

Response Service::commit(const std::string& body) {
  json j = parse_body(body);
  std::string message = opt_member<std::string>(j, "message").value_or("podhive snapshot");
  std::lock_guard w(writer_mu_);
  if (options_.export_dir.empty()) throw Error("InvalidArgument", "no export directory configured");
  store::export_files(*snapshot(), options_.export_dir, kernel_language_);
  store::GitRepo git(options_.export_dir);
  git.init();
  return json_response({{"commit", git.commit_all(message)}});
}

Response Service::import_callgraph(const std::string& body) {
  importer::CallGraph graph = importer::parse_callgraph(body);
  importer::ImportResult result = importer::import_callgraph(graph);
  std::lock_guard w(writer_mu_);
  std::size_t pods = result.emitted.pod_of.size();
  NodeId root = result.emitted.tree.root();
  options_.kernel->restart();
  reset_runtime(kernel_language_);
  std::uint64_t v = commit_tree(std::move(result.emitted.tree), "import", root);
  callgraph_ = std::move(graph);
  return json_response({{"version", v},
                        {"root", root.value},
                        {"functions", callgraph_->functions.size()},
                        {"pods", pods},
                        {"promoted", result.emitted.promoted},
                        {"pinned", result.emitted.pinned},
                        {"cyclic", result.leveling.cyclic}});
}

Response Service::callgraph_stats(const std::map<std::string, std::string>& query) {
  std::lock_guard w(writer_mu_);
  if (!callgraph_) throw Error("NoCallGraph", "no call graph has been imported");
  auto it = query.find("format");
  std::string format = it == query.end() ? "json" : it->second;
  if (format == "csv") return Response{200, importer::stats_csv(*callgraph_), "text/csv"};
  if (format != "json") throw Error("InvalidArgument", "format must be 'json' or 'csv'");
  return Response{200, importer::stats_json(*callgraph_), "application/json"};
}

Response Service::export_files() {
  auto t = snapshot();
  store::Manifest manifest;
  auto layout = store::export_layout(*t, kernel_language_, &manifest);
  json files = json::object();
  for (const auto& [path, bytes] : layout) files[path] = bytes;
  return json_response({{"files", std::move(files)}});
}

}  // namespace podhive::api
