#include "cli.hpp"

#include <csignal>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "podhive/importer.hpp"
#include "podhive/kernel_client.hpp"
#include "podhive/orchestrator.hpp"
#include "podhive/repo_store.hpp"
#include "podhive/server.hpp"

namespace podhive::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// A repo argument is either the document itself or its directory.
fs::path document_path(const fs::path& p) {
  return fs::is_directory(p) ? p / store::kDocumentFile : p;
}

fs::path repo_dir_of(const fs::path& p) {
  return fs::is_directory(p) ? p : p.parent_path();
}

std::unique_ptr<KernelClient> make_kernel(const std::string& command) {
  if (command.empty()) return std::make_unique<EmbeddedKernelClient>();
  return SessionKernelClient::spawn(protocol::split_command(command));
}

std::string summary(const runtime::PodStatus& s) {
  if (s.last_error) return s.last_error->ename + ": " + s.last_error->evalue;
  if (s.last_result) return s.last_result->data;
  return "";
}

struct RunArgs {
  std::string repo;
  std::string pod;
  std::string deck;
  std::string kernel;
  bool json = false;
  bool fail_on_error = false;
};

int cmd_run(const RunArgs& a, std::ostream& out) {
  store::RepoDocument doc = store::load_file(document_path(a.repo));
  auto kernel = make_kernel(a.kernel);
  runtime::Orchestrator orch(*kernel, rules::extractor_for_language(doc.kernel_language));
  std::vector<runtime::RunEntry> trace;
  if (!a.pod.empty()) {
    trace.push_back({NodeId{a.pod}, orch.run_pod(doc.tree, NodeId{a.pod})});
  } else {
    NodeId deck = a.deck.empty() ? doc.tree.root() : NodeId{a.deck};
    trace = orch.run_tree(doc.tree, deck);
  }
  bool failed = false;
  json rows = json::array();
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto& [pod, st] = trace[i];
    failed |= st.state == runtime::PodState::Error;
    if (a.json) {
      rows.push_back({{"pod", pod.value},
                      {"state", runtime::to_string(st.state)},
                      {"summary", summary(st)},
                      {"stdout", st.stdout_text}});
      continue;
    }
    out << i + 1 << '\t' << pod.value << '\t' << runtime::to_string(st.state) << '\t' << summary(st)
        << '\n';
    std::istringstream lines(st.stdout_text);
    for (std::string line; std::getline(lines, line);) out << "  | " << line << '\n';
  }
  if (a.json) out << rows.dump(2) << '\n';
  return failed && a.fail_on_error ? kExitUser : kExitOk;
}

int cmd_export(const std::string& repo, const std::string& dir, bool linearized, std::ostream& out) {
  store::RepoDocument doc = store::load_file(document_path(repo));
  if (linearized) {
    out << store::export_linearized(doc.tree, doc.kernel_language);
    return kExitOk;
  }
  if (dir.empty()) throw Error("InvalidArgument", "--out is required unless --linearized is given");
  store::Manifest m = store::export_files(doc.tree, dir, doc.kernel_language);
  out << "exported " << m.paths.size() << " nodes to " << dir << '\n';
  return kExitOk;
}

int cmd_diff(const std::string& repo, const std::string& commit_message, std::ostream& out) {
  store::RepoDocument doc = store::load_file(document_path(repo));
  fs::path export_dir = repo_dir_of(repo) / "export";
  store::Manifest current = store::export_files(doc.tree, export_dir, doc.kernel_language);
  store::GitRepo git(export_dir);
  git.init();
  store::Manifest base = current;
  if (auto head = git.show_head(std::string(store::kManifestFile))) {
    base = store::Manifest::from_json(*head);
  }
  store::DiffReport report = store::pod_diff(base, git.working_diff());
  for (const auto& p : report.pods) {
    out << store::to_string(p.change) << ' ' << p.pod.value << '\n';
    for (const auto& h : p.hunks) {
      out << "@@ -" << h.old_start << ',' << h.old_count << " +" << h.new_start << ','
          << h.new_count << " @@\n";
      for (const auto& l : h.lines) out << l << '\n';
    }
  }
  for (const auto& id : report.moved) out << "Moved " << id.value << '\n';
  for (const auto& path : report.metadata) out << "Metadata " << path << '\n';
  for (const auto& path : report.unknown) out << "Unknown " << path << '\n';
  if (!commit_message.empty()) out << "Committed " << git.commit_all(commit_message) << '\n';
  return kExitOk;
}

int cmd_import(const std::string& graph_path, const std::string& out_path, std::ostream& out) {
  importer::CallGraph g = importer::load_callgraph(graph_path);
  importer::ImportResult r = importer::import_callgraph(g);
  fs::path target = out_path;
  std::unique_ptr<store::RepoLock> lock;
  if (target.extension() != ".json") {
    fs::create_directories(target);
    lock = std::make_unique<store::RepoLock>(target);
    target /= store::kDocumentFile;
  }
  store::save_file(target, r.emitted.tree);
  out << "imported " << g.functions.size() << " functions into " << r.emitted.pod_of.size()
      << " pods (" << r.emitted.promoted.size() << " promoted, " << r.emitted.pinned.size()
      << " pinned, " << r.leveling.cyclic.size() << " cyclic) -> " << target.string() << '\n';
  return kExitOk;
}

int cmd_stats(const std::string& graph_path, bool csv, std::ostream& out) {
  importer::CallGraph g = importer::load_callgraph(graph_path);
  out << (csv ? importer::stats_csv(g) : importer::stats_json(g));
  return kExitOk;
}

int cmd_serve(int port, const std::string& repo, const std::string& kernel, std::ostream& out) {
  // Block the stop signals before any server thread exists so only
  // sigwait below sees them.
  sigset_t stop_signals;
  sigemptyset(&stop_signals);
  sigaddset(&stop_signals, SIGINT);
  sigaddset(&stop_signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);

  api::ServiceOptions o;
  o.repo_dir = repo;
  o.kernel = make_kernel(kernel);
  api::Service service(std::move(o));
  api::HttpServer server(service);
  int bound = server.start("127.0.0.1", port);
  out << "listening on http://127.0.0.1:" << bound << std::endl;
  int sig = 0;
  sigwait(&stop_signals, &sig);
  server.stop();
  return kExitOk;
}

bool is_internal(const std::string& code) {
  return code == "Internal" || code == "EmissionInvariantViolation" ||
         code == "SerializationFailure";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"podhive: deck/pod repositories, runs and call-graph import"};
  app.name("podhive");
  app.require_subcommand(1);

  int port = 8080;
  std::string repo;
  std::string kernel;
  auto* serve = app.add_subcommand("serve", "Serve the HTTP API for one repo");
  serve->add_option("--port", port, "Port (0 picks a free one)")->envname("PODHIVE_PORT");
  serve->add_option("--repo", repo, "Repo directory")->envname("PODHIVE_REPO")->required();
  serve->add_option("--kernel-cmd", kernel, "Kernel command line (default: embedded)");

  RunArgs ra;
  auto* run = app.add_subcommand("run", "Run a deck or pod and print the trace");
  run->add_option("path", ra.repo, "Repo document or directory")->required();
  auto* pod_opt = run->add_option("--pod", ra.pod, "Run one pod");
  run->add_option("--deck", ra.deck, "Run a deck (default: the root)")->excludes(pod_opt);
  run->add_option("--kernel-cmd", ra.kernel, "Kernel command line (default: embedded)");
  run->add_flag("--json", ra.json, "Print the trace as JSON");
  run->add_flag("--fail-on-error", ra.fail_on_error, "Exit 1 when a pod ends in Error");

  std::string export_repo, export_out;
  bool linearized = false;
  auto* exp = app.add_subcommand("export", "Write the tree as files");
  exp->add_option("path", export_repo, "Repo document or directory")->required();
  exp->add_option("--out", export_out, "Target directory");
  exp->add_flag("--linearized", linearized, "Print a single podlang program instead");

  std::string diff_repo, commit_message;
  auto* diff = app.add_subcommand("diff", "Pod-level diff of the repo against its last commit");
  diff->add_option("path", diff_repo, "Repo document or directory")->required();
  diff->add_option("--commit", commit_message, "Commit the current state afterwards");

  std::string graph, import_out;
  auto* imp = app.add_subcommand("import-callgraph", "Build a repo from a call-graph file");
  imp->add_option("graph", graph, "Call-graph JSON")->required();
  imp->add_option("--out", import_out, "Repo directory or document path")->required();

  std::string stats_graph;
  bool csv = false, as_json = false;
  auto* stats = app.add_subcommand("stats", "Call-graph statistics");
  stats->add_option("graph", stats_graph, "Call-graph JSON")->required();
  auto* csv_flag = stats->add_flag("--csv", csv, "One CSV row per function");
  stats->add_flag("--json", as_json, "Histograms as JSON (default)")->excludes(csv_flag);

  auto* kern = app.add_subcommand("kernel", "Serve the embedded kernel on stdin/stdout");

  if (!args.empty() && !args[0].empty() && args[0][0] != '-' &&
      app.get_subcommands([&](const CLI::App* sub) { return sub->get_name() == args[0]; })
          .empty()) {
    err << "podhive: unknown subcommand '" << args[0] << "'\n" << app.help();
    return kExitUser;
  }

  try {
    app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    if (code == 0) return kExitOk;
    err << app.help();
    return kExitUser;
  }

  try {
    if (*serve) return cmd_serve(port, repo, kernel, out);
    if (*run) return cmd_run(ra, out);
    if (*exp) return cmd_export(export_repo, export_out, linearized, out);
    if (*diff) return cmd_diff(diff_repo, commit_message, out);
    if (*imp) return cmd_import(graph, import_out, out);
    if (*stats) return cmd_stats(stats_graph, csv, out);
    if (*kern) {
      protocol::FdTransport stdio(0, 1, false);
      serve_kernel(stdio);
      return kExitOk;
    }
  } catch (const Error& e) {
    err << "podhive: " << e.code() << ": " << e.what() << '\n';
    return is_internal(e.code()) ? kExitInternal : kExitUser;
  } catch (const std::exception& e) {
    err << "podhive: internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitInternal;
}

}  // namespace podhive::cli
