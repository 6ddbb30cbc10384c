#include <doctest.h>

#include <algorithm>
#include <functional>

#include "podhive/names.hpp"
#include "support/builders.hpp"
#include "support/rule_scenarios.hpp"

using namespace podhive;
using namespace podhive::rules;
using podhive::testing::TreeBuilder;

namespace {

std::string error_code(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

}  // namespace

TEST_CASE("namespace rule scenarios") {
  for (const auto& check : podhive::testing::run_rule_scenarios()) {
    INFO(check.name << ": " << check.detail);
    CHECK(check.passed);
  }
}

TEST_CASE("podlang extractor reports definitions and imports") {
  TreeBuilder b;
  NodeId p = b.pod(b.root(), "import \"/A\" q, r;\nlet x = 1; fn f(n) = n; x");
  PodNames names = PodlangExtractor().extract(b.tree.node(p));
  CHECK(names.defined == std::vector<std::string>{"x", "f"});
  REQUIRE(names.imports.size() == 2);
  CHECK(names.imports[1].path == "/A");
  CHECK(names.imports[1].name == "r");
}

TEST_CASE("pattern extractor handles python-like code") {
  TreeBuilder b;
  NodeId p = b.pod(b.root(),
                   "from \"../lib\" import a, b\n"
                   "import os\n"
                   "def helper(x):\n"
                   "    inner = 1\n"
                   "    return x\n"
                   "class Thing:\n"
                   "    pass\n"
                   "LIMIT = 10\n"
                   "LIMIT == 3\n");
  PodNames names = PatternExtractor().extract(b.tree.node(p));
  CHECK(names.defined == std::vector<std::string>{"helper", "Thing", "LIMIT"});
  REQUIRE(names.imports.size() == 2);
  CHECK(names.imports[0].path == "../lib");
  CHECK(names.imports[0].name == "a");
}

TEST_CASE("unparsable pods are reported, not fatal") {
  TreeBuilder b;
  NodeId bad = b.pod(b.root(), "let = ;");
  NodeId good = b.pod(b.root(), "let x = 1;");
  PodlangExtractor ex;
  Resolver r(b.tree, ex);
  CHECK(r.diagnostics().count(bad) == 1);
  CHECK(error_code([&] { r.pod_names(bad); }) == "ParseFailure");
  CHECK(r.defined_names(good) == std::vector<std::string>{"x"});
}

TEST_CASE("missing reexport is an error") {
  TreeBuilder b;
  NodeId a = b.deck(b.root(), "A", {}, {"nope"});
  NodeId c = b.deck(a, "C");
  b.pod(c, "fn yes(n) = n;", testing::public_flag());
  PodlangExtractor ex;
  Resolver r(b.tree, ex);
  CHECK(error_code([&] { r.export_set(a); }) == "ReexportNotFound");
  CHECK(r.resolve("yes", a).rule == Rule::PublicChild);
  CHECK(error_code([&] { r.export_set(b.pod(a, "1")); }) == "NotADeck");
}

TEST_CASE("collisions keep the first candidate and list the rest") {
  TreeBuilder b;
  NodeId a = b.deck(b.root(), "A");
  NodeId c1 = b.deck(a, "C1");
  NodeId c2 = b.deck(a, "C2");
  b.pod(c1, "fn dup(n) = 1;", testing::public_flag());
  b.pod(c2, "fn dup(n) = 2;", testing::public_flag());
  PodlangExtractor ex;
  Resolver r(b.tree, ex);
  NameSet vis = r.visible_set(a);
  REQUIRE(vis.find("dup"));
  CHECK(vis.find("dup")->source_ns == "/ROOT/A/C1");
  REQUIRE(vis.collisions.size() == 1);
  CHECK(vis.collisions[0].candidates.size() == 2);
  CHECK(error_code([&] { vis.require_unambiguous(); }) == "NameCollision");
}

TEST_CASE("own definitions shadow imported names") {
  TreeBuilder b;
  NodeId a = b.deck(b.root(), "A");
  NodeId c = b.deck(a, "C");
  b.pod(c, "fn v(n) = 1;", testing::public_flag());
  b.pod(a, "fn v(n) = 2;");
  PodlangExtractor ex;
  Resolver r(b.tree, ex);
  CHECK(r.resolve("v", a).rule == Rule::SameNamespace);
  CHECK(r.imports_into(a).empty());
}

TEST_CASE("import plan lists namespaces in postorder") {
  auto s = testing::export_to_parent();
  PodlangExtractor ex;
  Resolver r(s.tree, ex);
  auto plan = r.import_plan();
  REQUIRE_FALSE(plan.empty());
  std::vector<Namespace> order;
  for (const auto& e : plan) {
    if (order.empty() || order.back() != e.to) order.push_back(e.to);
  }
  CHECK(order == std::vector<Namespace>{"/ROOT/A/B", "/ROOT/A"});
  for (const auto& e : plan) CHECK(e.origin == ImportOrigin::PublicChild);
  ImportEntry c1_into_a{"/ROOT/A/B", "/ROOT/A", "c1", ImportOrigin::PublicChild};
  CHECK(std::find(plan.begin(), plan.end(), c1_into_a) != plan.end());
}

TEST_CASE("import origin names round trip") {
  for (auto o : {ImportOrigin::PublicChild, ImportOrigin::Utility, ImportOrigin::Test,
                 ImportOrigin::ExplicitPath}) {
    CHECK(parse_import_origin(to_string(o)) == o);
  }
  CHECK(error_code([] { parse_import_origin("bogus"); }) != "");
}

TEST_CASE("resolution is stable under unrelated edits") {
  auto s = testing::utility_decks();
  PodlangExtractor ex;
  Resolution before = Resolver(s.tree, ex).resolve("utils_b1", s.at["C"]);
  s.tree.set_code(s.at["a_uses_a1"], "utils_a1(2)");
  Resolution after = Resolver(s.tree, ex).resolve("utils_b1", s.at["C"]);
  CHECK(before == after);
}

TEST_CASE("an explicit import re-exported to its source does not form an import cycle") {
  TreeBuilder b;
  NodeId u = b.deck(b.root(), "U", testing::utility_flag());
  b.pod(u, "fn k(x) = x + 1;", testing::public_flag());
  NodeId d = b.deck(b.root(), "D");
  b.pod(d, "import \"/\" k;\nlet j = 1;", testing::public_flag());
  b.pod(b.root(), "k(2)");
  PodlangExtractor ex;
  Resolver r(b.tree, ex);

  // Each side resolves to U's definition, reached through the other.
  CHECK(r.resolve("k", b.root()).source_ns == "/ROOT/U");
  CHECK(r.resolve("k", b.root()).via_ns == "/ROOT/D");
  CHECK(r.resolve("k", d).via_ns == "/ROOT");

  std::vector<ImportEntry> k_imports;
  for (const auto& e : r.import_plan()) {
    if (e.name == "k") k_imports.push_back(e);
  }
  REQUIRE(k_imports.size() == 2);
  for (const auto& e : k_imports) CHECK(e.from == "/ROOT/U");
}
