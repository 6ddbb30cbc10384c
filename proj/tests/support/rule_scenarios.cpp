#include "support/rule_scenarios.hpp"

#include <functional>
#include <memory>

#include "podhive/kernel_client.hpp"
#include "podhive/names.hpp"
#include "podhive/orchestrator.hpp"
#include "support/builders.hpp"

namespace podhive::testing {

namespace {

using rules::Rule;

class Run {
 public:
  explicit Run(Scenario s)
      : s_(std::move(s)),
        resolver_(s_.tree, extractor_),
        orch_(kernel_, std::make_shared<rules::PodlangExtractor>()) {
    orch_.run_tree(s_.tree, s_.tree.root());
  }

  /// Test decks run before their parent's own pods in a tree run, so they
  /// are re-run once the parent's definitions exist.
  void run_test(const std::string& label) { orch_.run_test(s_.tree, at(label)); }

  const NodeId& at(const std::string& label) const { return s_.at.at(label); }
  const Tree& tree() const { return s_.tree; }
  const rules::Resolver& resolver() const { return resolver_; }

  std::string outcome(const std::string& pod) const { return describe(orch_.status(at(pod))); }

  /// "Rule@source" or "NotVisible".
  std::string rule(const std::string& name, const std::string& from) const {
    auto r = resolver_.try_resolve(name, at(from));
    if (!r) return "NotVisible";
    return std::string(rules::to_string(r->rule)) + "@" + r->source_ns;
  }

 private:
  static std::string describe(const runtime::PodStatus& st) {
    if (st.state == runtime::PodState::Error) return "error:" + st.last_error->ename;
    if (st.state != runtime::PodState::Ok) return runtime::to_string(st.state);
    return st.last_result ? "ok:" + st.last_result->data : "none";
  }

  Scenario s_;
  rules::PodlangExtractor extractor_;
  rules::Resolver resolver_;
  EmbeddedKernelClient kernel_;
  runtime::Orchestrator orch_;
};

struct Checker {
  ScenarioCheck result;

  void expect_eq(const std::string& what, const std::string& got,
                 const std::string& want) {
    if (got == want || !result.detail.empty()) return;
    result.detail = what + ": got '" + got + "', want '" + want + "'";
  }
};

std::string ok(long long v) { return "ok:" + std::to_string(v); }

// Reference arithmetic for the scenario functions, written independently of
// the interpreter.
long long ref_a(long long n);
long long ref_b(long long n) { return n < 1 ? 100 : ref_a(n - 1) + 10; }
long long ref_a(long long n) { return n < 1 ? 0 : ref_b(n - 1) + 1; }
long long ref_c3(long long n) { return n * 3; }
long long ref_c1(long long n) { return ref_c3(n) + 1; }
long long ref_c2(long long n) { return n + 2; }
long long ref_c4(long long n) { return n - 4; }
long long ref_b1(long long n) { return ref_c1(n) * 10; }

}  // namespace

std::vector<ScenarioCheck> run_rule_scenarios() {
  std::vector<ScenarioCheck> out;
  auto check = [&](const std::string& name, const std::function<void(Checker&)>& body) {
    Checker c;
    c.result.name = name;
    try {
      body(c);
    } catch (const std::exception& e) {
      if (c.result.detail.empty()) c.result.detail = std::string("exception: ") + e.what();
    }
    c.result.passed = c.result.detail.empty();
    out.push_back(c.result);
  };

  Run sep(separate_namespaces());
  check("same deck: a and b call each other", [&](Checker& c) {
    c.expect_eq("a from pod b", sep.rule("a", "pb"), "SameNamespace@/ROOT/Deck-2");
    c.expect_eq("b from pod a", sep.rule("b", "pa"), "SameNamespace@/ROOT/Deck-2");
    c.expect_eq("a(3)", sep.outcome("use2"), ok(ref_a(3)));
  });
  check("other decks cannot see a or b", [&](Checker& c) {
    for (const char* deck : {"deck1", "deck3", "deck4", "deck5"}) {
      c.expect_eq(std::string("a from ") + deck, sep.rule("a", deck), "NotVisible");
      c.expect_eq(std::string("b from ") + deck, sep.rule("b", deck), "NotVisible");
    }
    for (const char* pod : {"use1", "use3", "use4", "use5"}) {
      c.expect_eq(pod, sep.outcome(pod), "error:UndefinedName");
    }
  });

  Run up(export_to_parent());
  check("public c1 c2 c4 visible in parent B", [&](Checker& c) {
    for (const char* n : {"c1", "c2", "c4"}) {
      c.expect_eq(n, up.rule(n, "B"), "PublicChild@/ROOT/A/B/C");
    }
    c.expect_eq("c1(1)+c2(1)+c4(10)", up.outcome("b_uses_c"),
                ok(ref_c1(1) + ref_c2(1) + ref_c4(10)));
  });
  check("private c3 hidden from B", [&](Checker& c) {
    c.expect_eq("c3 from B", up.rule("c3", "B"), "NotVisible");
    c.expect_eq("c3(1) in B", up.outcome("b_uses_c3"), "error:UndefinedName");
    c.expect_eq("c1 still calls c3 internally", up.outcome("b_uses_c"),
                ok(ref_c1(1) + ref_c2(1) + ref_c4(10)));
  });
  check("c4 hidden from grandparent A", [&](Checker& c) {
    c.expect_eq("c4 from A", up.rule("c4", "A"), "NotVisible");
    c.expect_eq("c4(1) in A", up.outcome("a_uses_c4"), "error:UndefinedName");
  });
  check("reexported c1 c2 reach A", [&](Checker& c) {
    c.expect_eq("c1 from A", up.rule("c1", "A"), "PublicChild@/ROOT/A/B/C");
    c.expect_eq("c2 from A", up.rule("c2", "A"), "PublicChild@/ROOT/A/B/C");
    auto exports = up.resolver().export_set(up.at("B")).names();
    std::string joined;
    for (const auto& n : exports) joined += n + " ";
    c.expect_eq("export_set(B)", joined, "b1 c1 c2 ");
    c.expect_eq("c1(2)+c2(2) in A", up.outcome("a_uses_reexports"),
                ok(ref_c1(2) + ref_c2(2)));
  });
  check("b1 goes up to A, not down to C", [&](Checker& c) {
    c.expect_eq("b1 from A", up.rule("b1", "A"), "PublicChild@/ROOT/A/B");
    c.expect_eq("b1 from C", up.rule("b1", "C"), "NotVisible");
    c.expect_eq("b1(1) in A", up.outcome("a_uses_b1"), ok(ref_b1(1)));
    c.expect_eq("b1(1) in C", up.outcome("c_uses_b1"), "error:UndefinedName");
  });

  Run util(utility_decks());
  check("utils_b1 visible in B and C", [&](Checker& c) {
    c.expect_eq("from B", util.rule("utils_b1", "B"), "Utility@/ROOT/A/B/utils-B");
    c.expect_eq("from C", util.rule("utils_b1", "C"), "Utility@/ROOT/A/B/utils-B");
    c.expect_eq("B pod", util.outcome("b_uses"), ok(5 * 2 + (5 + 1)));
    c.expect_eq("C pod", util.outcome("c_uses"), ok(1 * 2 + (1 * 2 + 1) + (1 + 1)));
    bool into_b = false, into_c = false;
    for (const auto& e : util.resolver().import_plan()) {
      if (e.name != "utils_b1" || e.from != "/ROOT/A/B/utils-B") continue;
      into_b |= e.to == "/ROOT/A/B";
      into_c |= e.to == "/ROOT/A/B/C";
    }
    c.expect_eq("plan imports utils_b1 into B and C",
                std::to_string(into_b) + std::to_string(into_c), "11");
  });
  check("utility names stop at the parent deck's subtree", [&](Checker& c) {
    c.expect_eq("utils_b1 from A", util.rule("utils_b1", "A"), "NotVisible");
    c.expect_eq("utils_b1(1) in A", util.outcome("a_uses_b1"), "error:UndefinedName");
    for (const char* d : {"A", "B", "C"}) {
      c.expect_eq(std::string("utils_a1 from ") + d, util.rule("utils_a1", d),
                  "Utility@/ROOT/A/utils-A");
    }
    c.expect_eq("utils_a1(1) in A", util.outcome("a_uses_a1"), ok(2));
    c.expect_eq("utils_a1 at ROOT", util.outcome("root_uses_a1"), "error:UndefinedName");
  });

  Run test(testing_decks());
  for (const char* deck : {"T1", "T2", "T3"}) test.run_test(deck);
  check("test deck reads its parent without polluting it", [&](Checker& c) {
    c.expect_eq("f from test deck", test.rule("f", "T1"), "TestParentAccess@/ROOT/G/A");
    c.expect_eq("x from test deck", test.rule("x", "T1"),
                "SameNamespace@/ROOT/G/A/test-A");
    c.expect_eq("f(x + y)", test.outcome("t_uses_f"), ok((1 + 2) * 2));
    c.expect_eq("test pod f(21)", test.outcome("test_pod"), ok(21 * 2));
    c.expect_eq("x from A", test.rule("x", "A"), "NotVisible");
    c.expect_eq("x + y in A", test.outcome("a_uses_x"), "error:UndefinedName");
  });
  check("test deck sees parent, not grandparent or siblings", [&](Checker& c) {
    c.expect_eq("g from test-A", test.rule("g", "T1"), "NotVisible");
    c.expect_eq("g(1) in test-A", test.outcome("t_uses_g"), "error:UndefinedName");
    c.expect_eq("s(1) in test-A", test.outcome("t_uses_s"), "error:UndefinedName");
    c.expect_eq("g(1) in test-G", test.outcome("t2_uses_g"), ok(1 + 7));
    c.expect_eq("f(1) in test-G", test.outcome("t2_uses_f"), "error:UndefinedName");
    c.expect_eq("g(1) in test-H", test.outcome("t3_uses_g"), "error:UndefinedName");
  });

  Run path(explicit_paths());
  check("../D and /A/B/C resolve", [&](Checker& c) {
    const Tree& t = path.tree();
    c.expect_eq("../D from C",
                std::to_string(t.resolve_path(path.at("C"), TreePath::parse("../D")) ==
                               path.at("D")),
                "1");
    c.expect_eq("/A/B/C from E",
                std::to_string(t.resolve_path(path.at("E"), TreePath::parse("/A/B/C")) ==
                               path.at("C")),
                "1");
    c.expect_eq("d from C2 without import", path.rule("d", "C2"), "NotVisible");
    c.expect_eq("d(1) in C2", path.outcome("c2_uses_d"), "error:UndefinedName");
    c.expect_eq("d from C", path.rule("d", "C"), "ExplicitPath@/ROOT/A/B/D");
    c.expect_eq("d(1) in C", path.outcome("c_imports_d"), ok(1 + 1000));
    c.expect_eq("c from E", path.rule("c", "E"), "ExplicitPath@/ROOT/A/B/C");
    c.expect_eq("c(1) in E", path.outcome("e_imports_c"), ok(1 + 100));
  });
  return out;
}

}  // namespace podhive::testing
