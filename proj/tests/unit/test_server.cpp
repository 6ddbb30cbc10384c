#include <doctest.h>
#include <httplib.h>

#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "podhive/server.hpp"
#include "support/temp_dir.hpp"

using namespace podhive;
using namespace podhive::api;
using nlohmann::json;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fixture(const std::string& rel) {
  return slurp(std::filesystem::path(PODHIVE_FIXTURE_DIR) / rel);
}

struct Call {
  int status;
  json body;
};

Call call(Service& s, const std::string& method, const std::string& path, const json& body = nullptr,
          std::map<std::string, std::string> query = {}) {
  Request r{method, path, std::move(query), body.is_null() ? "" : body.dump()};
  Response out = s.handle(r);
  json j = out.content_type == "application/json" ? json::parse(out.body) : json(out.body);
  return {out.status, j};
}

std::string root_of(Service& s) { return s.snapshot()->root().value; }

std::string new_pod(Service& s, const std::string& parent, const std::string& code) {
  Call c = call(s, "POST", "/nodes", {{"parent", parent}, {"kind", "pod"}, {"code", code}});
  REQUIRE(c.status == 201);
  return c.body["id"];
}

/// A kernel that is never reachable.
class DeadKernel final : public KernelClient {
 public:
  [[noreturn]] static void down() { throw Error("KernelUnavailable", "kernel is down"); }
  EvalOutcome eval_in_ns(const std::string&, const std::string&, const std::vector<std::string>&,
                         const StreamSink&) override {
    down();
  }
  void add_import(const std::string&, const std::string&, const std::string&) override { down(); }
  void delete_import(const std::string&, const std::string&) override { down(); }
  void delete_names(const std::string&, const std::vector<std::string>&) override { down(); }
  void ping() override { down(); }
  void restart() override { down(); }
};

/// Reads NDJSON from GET /events on a background thread.
class EventReader {
 public:
  EventReader(int port, std::size_t want) : want_(want) {
    thread_ = std::thread([this, port] {
      httplib::Client cli("127.0.0.1", port);
      cli.set_read_timeout(10, 0);
      std::string buffer;
      cli.Get("/events", [&](const char* data, std::size_t len) {
        buffer.append(data, len);
        std::size_t nl;
        while ((nl = buffer.find('\n')) != std::string::npos) {
          std::string line = buffer.substr(0, nl);
          buffer.erase(0, nl + 1);
          std::lock_guard lk(mu_);
          json j = json::parse(line);
          if (j.contains("subscribed")) {
            subscribed_ = true;
          } else {
            events_.push_back(decode_event(line));
          }
          cv_.notify_all();
          if (events_.size() >= want_) return false;
        }
        return true;
      });
      std::lock_guard lk(mu_);
      done_ = true;
      cv_.notify_all();
    });
    std::unique_lock lk(mu_);
    cv_.wait_for(lk, std::chrono::seconds(10), [&] { return subscribed_ || done_; });
  }
  ~EventReader() {
    if (thread_.joinable()) thread_.join();
  }

  std::vector<ApiEvent> wait() {
    std::unique_lock lk(mu_);
    cv_.wait_for(lk, std::chrono::seconds(10), [&] { return events_.size() >= want_ || done_; });
    return events_;
  }
  bool subscribed() {
    std::lock_guard lk(mu_);
    return subscribed_;
  }

 private:
  std::size_t want_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::vector<ApiEvent> events_;
  bool subscribed_ = false;
  bool done_ = false;
  std::thread thread_;
};

}  // namespace

TEST_CASE("patch code then run returns the result") {
  Service s({});
  std::string pod = new_pod(s, root_of(s), "0");
  Call p = call(s, "PATCH", "/nodes/" + pod, {{"code", "1+2"}});
  CHECK(p.status == 200);
  Call r = call(s, "POST", "/run/pod/" + pod);
  REQUIRE(r.status == 200);
  CHECK(r.body["status"]["state"] == "Ok");
  CHECK(r.body["status"]["result"]["data"] == "3");
  CHECK(s.status(NodeId{pod}).state == runtime::PodState::Ok);
}

TEST_CASE("errors map to status codes with machine-readable bodies") {
  Service s({});
  std::string pod = new_pod(s, root_of(s), "1");

  Call under_pod = call(s, "POST", "/nodes", {{"parent", pod}, {"kind", "pod"}});
  CHECK(under_pod.status == 400);
  CHECK(under_pod.body["error"]["code"] == "ParentIsPod");

  Call unknown = call(s, "PATCH", "/nodes/nope", {{"code", "1"}});
  CHECK(unknown.status == 404);
  CHECK(unknown.body["error"]["code"] == "UnknownNode");
  CHECK(call(s, "POST", "/run/pod/nope").status == 404);
  CHECK(call(s, "DELETE", "/nodes/nope").status == 404);

  Response bad = s.handle({"POST", "/nodes", {}, "{not json"});
  CHECK(bad.status == 400);
  CHECK(json::parse(bad.body)["error"]["code"] == "InvalidArgument");
  CHECK(call(s, "POST", "/nodes", {{"kind", "pod"}}).body["error"]["code"] == "InvalidArgument");

  Call route = call(s, "GET", "/nowhere");
  CHECK(route.status == 404);
  CHECK(route.body["error"]["code"] == "NotFound");

  Call stale = call(s, "PATCH", "/nodes/" + pod, {{"code", "2"}, {"if_version", 0}});
  CHECK(stale.status == 409);
  CHECK(stale.body["error"]["code"] == "VersionConflict");
  CHECK(call(s, "PATCH", "/nodes/" + pod, {{"code", "2"}, {"if_version", s.version()}}).status == 200);

  CHECK(call(s, "PATCH", "/nodes/" + root_of(s), {{"name", "x"}}).body["error"]["code"] ==
        "RootImmutable");
  CHECK(call(s, "GET", "/stats/callgraph").status == 404);
  CHECK(http_status_for("LockHeld") == 409);
  CHECK(http_status_for("Timeout") == 503);
  CHECK(http_status_for("Internal") == 500);
}

TEST_CASE("a dead kernel answers 503") {
  ServiceOptions o;
  o.kernel = std::make_unique<DeadKernel>();
  Service s(std::move(o));
  std::string pod = new_pod(s, root_of(s), "1");
  Call r = call(s, "POST", "/run/pod/" + pod);
  CHECK(r.status == 503);
  CHECK(r.body["error"]["code"] == "KernelUnavailable");
  CHECK(call(s, "POST", "/kernel/restart").status == 503);
}

TEST_CASE("patch fields, move and delete") {
  Service s({});
  std::string root = root_of(s);
  Call d = call(s, "POST", "/nodes", {{"parent", root}, {"kind", "deck"}, {"name", "lib"}});
  REQUIRE(d.status == 201);
  std::string deck = d.body["id"];
  std::string pod = new_pod(s, root, "fn sq(x) = x * x;");

  CHECK(call(s, "PATCH", "/nodes/" + pod, {{"flags", {{"public", true}}}, {"move", {{"parent", deck}}}})
            .status == 200);
  CHECK(call(s, "PATCH", "/nodes/" + deck, {{"reexports", {"sq"}}, {"folded", true}}).status == 200);
  auto t = s.snapshot();
  CHECK(t->node(NodeId{pod}).parent == NodeId{deck});
  CHECK(t->node(NodeId{pod}).flags == NodeFlags{true, false, false});
  CHECK(t->node(NodeId{deck}).reexports == std::vector<std::string>{"sq"});
  CHECK(t->node(NodeId{deck}).folded);

  std::string user = new_pod(s, root, "sq(5)");
  Call r = call(s, "POST", "/run/tree/" + root);
  REQUIRE(r.status == 200);
  REQUIRE(r.body["trace"].size() == 2);
  CHECK(r.body["trace"][1]["status"]["result"]["data"] == "25");

  CHECK(call(s, "DELETE", "/nodes/" + deck).status == 200);
  CHECK(!s.snapshot()->contains(NodeId{pod}));
  Call tree = call(s, "GET", "/tree");
  CHECK(tree.body["version"] == s.version());
  CHECK(tree.body["document"]["nodes"].size() == 2);
  CHECK(tree.body["statuses"].contains(user));
  CHECK(!tree.body["statuses"].contains(pod));
}

TEST_CASE("run tree on the imported regex fixture matches a direct orchestrator run") {
  Service s({});
  Call imp = call(s, "POST", "/import/callgraph",
                  json::parse(fixture("importer/regex_compiler.callgraph.json")));
  REQUIRE(imp.status == 200);
  CHECK(imp.body["functions"] == 21);

  auto tree = s.snapshot();
  Call r = call(s, "POST", "/run/tree/" + tree->root().value);
  REQUIRE(r.status == 200);

  EmbeddedKernelClient kernel;
  runtime::Orchestrator direct(kernel, rules::extractor_for_language("podlang"));
  auto expected = direct.run_tree(*tree, tree->root());

  std::size_t pods = 0;
  for (const NodeId& id : tree->preorder()) pods += tree->node(id).is_pod();
  REQUIRE(r.body["trace"].size() == pods);
  REQUIRE(expected.size() == pods);
  for (std::size_t i = 0; i < pods; ++i) {
    CHECK(r.body["trace"][i]["pod"] == expected[i].pod.value);
    CHECK(r.body["trace"][i]["status"]["state"] == runtime::to_string(expected[i].status.state));
  }

  Call csv = call(s, "GET", "/stats/callgraph", nullptr, {{"format", "csv"}});
  CHECK(csv.status == 200);
  CHECK(csv.body.get<std::string>() ==
        importer::stats_csv(importer::parse_callgraph(fixture("importer/regex_compiler.callgraph.json"))));
}

TEST_CASE("callgraph stats match the corpus fixtures") {
  for (const char* name : {"tiny", "alpha", "beta", "gamma", "empty"}) {
    CAPTURE(name);
    Service s({});
    std::string base = std::string("importer/corpus/") + name;
    Response imp = s.handle({"POST", "/import/callgraph", {}, fixture(base + ".callgraph.json")});
    REQUIRE(imp.status == 200);
    Response csv = s.handle({"GET", "/stats/callgraph", {{"format", "csv"}}, ""});
    CHECK(csv.body == fixture(base + ".stats.csv"));
    Response js = s.handle({"GET", "/stats/callgraph", {}, ""});
    CHECK(json::parse(js.body) == json::parse(fixture(base + ".stats.json")));
  }
  Service s({});
  Response bad = s.handle({"POST", "/import/callgraph", {}, R"({"functions":[],"edges":[["a","b"]]})"});
  CHECK(bad.status == 400);
  CHECK(json::parse(bad.body)["error"]["code"] == "DanglingEdge");
}

TEST_CASE("repo is saved after each mutation and reloaded") {
  testing::TempDir dir;
  std::string pod;
  std::string saved;
  {
    ServiceOptions o;
    o.repo_dir = dir.path();
    Service s(std::move(o));
    pod = new_pod(s, root_of(s), "40 + 2");
    saved = slurp(dir / "repo.codepod.json");
    CHECK(saved == store::save(*s.snapshot()));

    ServiceOptions again;
    again.repo_dir = dir.path();
    CHECK_THROWS_WITH_AS(Service(std::move(again)), doctest::Contains("lock"), Error);
  }
  ServiceOptions o;
  o.repo_dir = dir.path();
  Service s(std::move(o));
  CHECK(store::save(*s.snapshot()) == saved);
  CHECK(call(s, "POST", "/run/pod/" + pod).body["status"]["result"]["data"] == "42");
}

TEST_CASE("diff and commit over the export directory") {
  testing::TempDir dir;
  ServiceOptions o;
  o.repo_dir = dir.path();
  Service s(std::move(o));
  std::string pod = new_pod(s, root_of(s), "let a = 1;\na");
  Call first = call(s, "GET", "/diff");
  REQUIRE(first.status == 200);
  REQUIRE(first.body["pods"].size() == 1);
  CHECK(first.body["pods"][0]["change"] == "Added");

  Call c = call(s, "POST", "/commit", {{"message", "start"}});
  REQUIRE(c.status == 200);
  CHECK(c.body["commit"].get<std::string>().size() == 40);
  CHECK(call(s, "GET", "/diff").body["pods"].empty());

  call(s, "PATCH", "/nodes/" + pod, {{"code", "let a = 2;\na"}});
  Call d = call(s, "GET", "/diff");
  REQUIRE(d.body["pods"].size() == 1);
  CHECK(d.body["pods"][0]["pod"] == pod);
  CHECK(d.body["pods"][0]["change"] == "Modified");
  CHECK(d.body["metadata"].empty());
}

TEST_CASE("export files mirror the export layout") {
  Service s({});
  new_pod(s, root_of(s), "1");
  Call e = call(s, "GET", "/export/files");
  auto layout = store::export_layout(*s.snapshot(), "podlang");
  REQUIRE(e.body["files"].size() == layout.size());
  for (const auto& [path, bytes] : layout) CHECK(e.body["files"][path] == bytes);
}

TEST_CASE("event frames round-trip and slow subscribers lag") {
  ApiEvent ev{7, EventKind::StreamOutput, R"({"pod":"p","text":"hi\n"})"};
  std::string frame = encode_event(ev);
  CHECK(frame.back() == '\n');
  CHECK(frame == R"({"body":{"pod":"p","text":"hi\n"},"kind":"StreamOutput","seq":7})" "\n");
  CHECK(decode_event(frame) == ev);
  CHECK_THROWS_WITH_AS(decode_event("{\"seq\":1}"), doctest::Contains("seq"), Error);
  CHECK_THROWS_AS(decode_event(R"({"seq":1,"kind":"Nope","body":{}})"), Error);

  EventBus bus;
  auto slow = bus.subscribe(2);
  auto fast = bus.subscribe();
  for (int i = 0; i < 5; ++i) bus.publish(EventKind::TreeChanged, "{}");
  auto only = slow->next(std::chrono::milliseconds(10));
  REQUIRE(only);
  CHECK(only->kind == EventKind::Lagged);
  CHECK(slow->finished());
  for (std::uint64_t i = 1; i <= 5; ++i) CHECK(fast->next(std::chrono::milliseconds(10))->seq == i);
}

TEST_CASE("event stream over HTTP: order, output and fan-out") {
  Service s({});
  std::string pod = new_pod(s, root_of(s), "let z = print(\"hi\");\n1 + 1");
  HttpServer server(s);
  int port = server.start();

  // Queued, Running, StreamOutput, Ok for the pod; trace step for the eval.
  EventReader a(port, 5), b(port, 5);
  REQUIRE(a.subscribed());
  REQUIRE(b.subscribed());

  httplib::Client cli("127.0.0.1", port);
  auto res = cli.Post("/run/pod/" + pod, "", "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(json::parse(res->body)["status"]["result"]["data"] == "2");

  auto ea = a.wait();
  auto eb = b.wait();
  CHECK(ea == eb);
  std::vector<std::string> states;
  std::size_t stream_at = 0, ok_at = 0;
  for (std::size_t i = 0; i < ea.size(); ++i) {
    if (i > 0) CHECK(ea[i].seq > ea[i - 1].seq);
    json body = json::parse(ea[i].body);
    if (ea[i].kind == EventKind::PodStatusChanged && body["pod"] == pod) {
      states.push_back(body["status"]["state"]);
      if (states.back() == "Ok") ok_at = i;
    }
    if (ea[i].kind == EventKind::StreamOutput) {
      stream_at = i;
      CHECK(body["text"] == "hi\n");
    }
  }
  CHECK(states == std::vector<std::string>{"Queued", "Running", "Ok"});
  CHECK(stream_at < ok_at);

  auto tree = cli.Get("/tree");
  REQUIRE(tree);
  CHECK(json::parse(tree->body)["statuses"][pod]["state"] == "Ok");
  auto missing = cli.Patch("/nodes/zzz", R"({"code":"1"})", "application/json");
  REQUIRE(missing);
  CHECK(missing->status == 404);

  httplib::MultipartFormDataItems items{
      {"file", fixture("importer/corpus/tiny.callgraph.json"), "tiny.json", "application/json"}};
  auto imp = cli.Post("/import/callgraph", items);
  REQUIRE(imp);
  CHECK(imp->status == 200);
  auto stats = cli.Get("/stats/callgraph?format=csv");
  REQUIRE(stats);
  CHECK(stats->body == fixture("importer/corpus/tiny.stats.csv"));
  server.stop();
}

TEST_CASE("concurrent patches are totally ordered") {
  Service s({});
  std::string pod = new_pod(s, root_of(s), "0");
  HttpServer server(s);
  int port = server.start();
  std::uint64_t base = s.version();
  auto sub = s.events().subscribe();

  constexpr int kOps = 50;
  std::vector<std::pair<std::uint64_t, std::string>> seen[2];
  auto client = [&](int who) {
    httplib::Client cli("127.0.0.1", port);
    for (int k = 0; k < kOps; ++k) {
      std::string code = std::to_string(who * 1000 + k);
      auto res = cli.Patch("/nodes/" + pod, json{{"code", code}}.dump(), "application/json");
      if (res && res->status == 200) seen[who].emplace_back(json::parse(res->body)["version"], code);
    }
  };
  std::thread t0(client, 0), t1(client, 1);
  t0.join();
  t1.join();
  server.stop();

  REQUIRE(seen[0].size() == kOps);
  REQUIRE(seen[1].size() == kOps);
  std::map<std::uint64_t, std::string> order;
  for (auto& mine : seen) {
    for (std::size_t i = 1; i < mine.size(); ++i) CHECK(mine[i].first > mine[i - 1].first);
    for (auto& [v, code] : mine) CHECK(order.emplace(v, code).second);
  }
  CHECK(order.begin()->first == base + 1);
  CHECK(order.rbegin()->first == base + 2 * kOps);
  CHECK(s.snapshot()->node(NodeId{pod}).code == order.rbegin()->second);

  std::uint64_t last = base;
  std::size_t changes = 0;
  while (auto ev = sub->next(std::chrono::milliseconds(0))) {
    if (ev->kind != EventKind::TreeChanged) continue;
    std::uint64_t v = json::parse(ev->body)["version"];
    CHECK(v == last + 1);
    last = v;
    ++changes;
  }
  CHECK(changes == 2 * kOps);
}

TEST_CASE("API mutations equal direct tree calls after save") {
  std::mt19937 rng(20261015);
  for (int round = 0; round < 10; ++round) {
    Service s({});
    Tree direct = Tree::with_root(s.snapshot()->root());
    std::vector<std::string> ids{direct.root().value};
    int fresh = 0;
    for (int step = 0; step < 40; ++step) {
      const std::string target = ids[rng() % ids.size()];
      const std::string other = ids[rng() % ids.size()];
      json body;
      std::string method, path;
      std::optional<std::string> direct_error;
      auto apply = [&](auto&& fn) {
        try {
          fn();
        } catch (const Error& e) {
          direct_error = e.code();
        }
      };
      switch (rng() % 6) {
        case 0:
        case 1: {
          std::string id = "n" + std::to_string(++fresh);
          bool deck = rng() % 2;
          std::size_t index = rng() % 3;
          method = "POST";
          path = "/nodes";
          body = {{"parent", target}, {"kind", deck ? "deck" : "pod"}, {"index", index}, {"id", id}};
          if (deck) body["name"] = "d" + std::to_string(rng() % 4);
          Tree copy = direct;
          apply([&] {
            NodeId n = copy.create_node(NodeId{target}, deck ? NodeKind::Deck : NodeKind::Pod, index,
                                        NodeId{id});
            if (deck) copy.rename(n, body["name"]);
            direct = copy;
            ids.push_back(id);
          });
          break;
        }
        case 2: {
          std::string code = "let v = " + std::to_string(rng() % 100) + ";";
          method = "PATCH";
          path = "/nodes/" + target;
          body = {{"code", code}};
          apply([&] { direct.set_code(NodeId{target}, code); });
          break;
        }
        case 3: {
          NodeFlags f{bool(rng() % 2), bool(rng() % 2), false};
          method = "PATCH";
          path = "/nodes/" + target;
          body = {{"flags", {{"public", f.is_public}, {"utility", f.utility}, {"test", false}}}};
          apply([&] { direct.set_flags(NodeId{target}, f); });
          break;
        }
        case 4: {
          std::size_t index = rng() % 2;
          method = "PATCH";
          path = "/nodes/" + target;
          body = {{"move", {{"parent", other}, {"index", index}}}};
          Tree copy = direct;
          apply([&] {
            copy.move_node(NodeId{target}, NodeId{other}, index);
            direct = copy;
          });
          break;
        }
        case 5: {
          method = "DELETE";
          path = "/nodes/" + target;
          apply([&] {
            auto gone = direct.preorder(NodeId{target});
            direct.delete_node(NodeId{target});
            std::erase_if(ids, [&](const std::string& i) {
              return std::find(gone.begin(), gone.end(), NodeId{i}) != gone.end();
            });
          });
          break;
        }
      }
      Call c = call(s, method, path, body);
      CAPTURE(method);
      CAPTURE(path);
      CAPTURE(body.dump());
      if (direct_error) {
        CHECK(c.status >= 400);
        CHECK(c.body["error"]["code"] == *direct_error);
      } else {
        CHECK(c.status < 300);
      }
      REQUIRE(store::save(*s.snapshot()) == store::save(direct));
    }
  }
}
