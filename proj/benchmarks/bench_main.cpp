#include <benchmark/benchmark.h>

#include <random>
#include <string>

#include "podhive/importer.hpp"
#include "podhive/kernel_client.hpp"
#include "podhive/names.hpp"
#include "podhive/orchestrator.hpp"
#include "podhive/protocol.hpp"
#include "podhive/repo_store.hpp"

using namespace podhive;

namespace {

// Balanced deck tree: `fanout` child decks per deck down to `depth`; each
// deck holds one public pod defining a function and one pod using it.
Tree deck_tree(int depth, int fanout) {
  Tree t{IdGenerator(42)};
  int counter = 0;
  auto fill = [&](auto&& self, const NodeId& deck, int level) -> void {
    std::string f = "f" + std::to_string(counter++);
    NodeId def = t.create_node(deck, NodeKind::Pod, t.node(deck).children.size());
    t.set_code(def, "fn " + f + "(x) = x + " + std::to_string(level) + ";");
    t.set_flags(def, NodeFlags{true, false, false});
    NodeId use = t.create_node(deck, NodeKind::Pod, t.node(deck).children.size());
    t.set_code(use, "let v = " + f + "(1);\nv");
    if (level == depth) return;
    for (int i = 0; i < fanout; ++i) {
      NodeId child = t.create_node(deck, NodeKind::Deck, 0);
      t.rename(child, "d" + std::to_string(counter) + "_" + std::to_string(i));
      self(self, child, level + 1);
    }
  };
  fill(fill, t.root(), 0);
  return t;
}

importer::CallGraph layered_graph(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  importer::CallGraph g;
  for (std::size_t i = 0; i < n; ++i) {
    g.functions.push_back({"fn" + std::to_string(i), "file" + std::to_string(i % 17) + ".py", 10, {}});
  }
  for (std::size_t i = 1; i < n; ++i) {
    std::size_t calls = 1 + rng() % 3;
    for (std::size_t c = 0; c < calls; ++c) {
      std::size_t caller = rng() % i;
      g.edges.emplace_back(g.functions[caller].id, g.functions[i].id);
    }
  }
  return g;
}

void BM_ImportPlan(benchmark::State& state) {
  Tree t = deck_tree(static_cast<int>(state.range(0)), 3);
  rules::PodlangExtractor ex;
  for (auto _ : state) {
    rules::Resolver r(t, ex);
    benchmark::DoNotOptimize(r.import_plan());
  }
  state.counters["nodes"] = static_cast<double>(t.size());
}
BENCHMARK(BM_ImportPlan)->DenseRange(1, 4);

void BM_RunTree(benchmark::State& state) {
  Tree t = deck_tree(static_cast<int>(state.range(0)), 3);
  for (auto _ : state) {
    EmbeddedKernelClient kernel;
    runtime::Orchestrator orch(kernel, std::make_shared<rules::PodlangExtractor>());
    benchmark::DoNotOptimize(orch.run_tree(t, t.root()));
  }
  state.counters["nodes"] = static_cast<double>(t.size());
}
BENCHMARK(BM_RunTree)->DenseRange(1, 4)->Unit(benchmark::kMillisecond);

void BM_ReevalPod(benchmark::State& state) {
  Tree t = deck_tree(3, 3);
  EmbeddedKernelClient kernel;
  runtime::Orchestrator orch(kernel, std::make_shared<rules::PodlangExtractor>());
  orch.run_tree(t, t.root());
  NodeId pod = t.child_pods(t.root()).front();
  for (auto _ : state) benchmark::DoNotOptimize(orch.reeval_pod(t, pod));
}
BENCHMARK(BM_ReevalPod)->Unit(benchmark::kMicrosecond);

void BM_ProtocolRoundTrip(benchmark::State& state) {
  protocol::Request req;
  req.msg_id = "m-1";
  req.payload = protocol::EvalInNs{"/ROOT/A/B", std::string(static_cast<std::size_t>(state.range(0)), 'x'),
                                   {"a", "b", "c"}};
  protocol::Message m = req;
  for (auto _ : state) benchmark::DoNotOptimize(protocol::decode(protocol::encode(m)));
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations()) * state.range(0));
}
BENCHMARK(BM_ProtocolRoundTrip)->Range(16, 1 << 16);

void BM_MaxArborescence(benchmark::State& state) {
  std::size_t n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(7);
  std::vector<importer::WeightedEdge> edges;
  for (std::size_t v = 1; v < n; ++v) edges.push_back({rng() % v, v, 1});
  for (std::size_t e = 0; e < 3 * n; ++e) {
    edges.push_back({rng() % n, 1 + rng() % (n - 1), static_cast<std::int64_t>(rng() % 10)});
  }
  for (auto _ : state) benchmark::DoNotOptimize(importer::max_arborescence(n, 0, edges));
}
BENCHMARK(BM_MaxArborescence)->RangeMultiplier(4)->Range(16, 1024);

void BM_ImportCallgraph(benchmark::State& state) {
  importer::CallGraph g = layered_graph(static_cast<std::size_t>(state.range(0)), 11);
  for (auto _ : state) benchmark::DoNotOptimize(importer::import_callgraph(g));
}
BENCHMARK(BM_ImportCallgraph)->RangeMultiplier(4)->Range(16, 1024)->Unit(benchmark::kMillisecond);

void BM_SaveLoad(benchmark::State& state) {
  Tree t = deck_tree(static_cast<int>(state.range(0)), 3);
  for (auto _ : state) benchmark::DoNotOptimize(store::load(store::save(t)));
  state.counters["nodes"] = static_cast<double>(t.size());
}
BENCHMARK(BM_SaveLoad)->DenseRange(1, 4);

}  // namespace

BENCHMARK_MAIN();
