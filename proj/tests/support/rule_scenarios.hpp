#pragma once

#include <string>
#include <vector>

namespace podhive::testing {

struct ScenarioCheck {
  std::string name;
  bool passed = false;
  std::string detail;  // first failed expectation
};

/// The twelve namespace-rule scenarios, each checked statically (resolver)
/// and dynamically (run_tree on the embedded kernel).
std::vector<ScenarioCheck> run_rule_scenarios();

}  // namespace podhive::testing
