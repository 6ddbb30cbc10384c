#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "podhive/protocol.hpp"

namespace podhive::testing {

/// The twenty canonical messages, keyed by golden file name.
const std::vector<std::pair<std::string, protocol::Message>>& golden_messages();

/// A valid random message of any kind, with unicode and control characters
/// in its text fields.
protocol::Message random_message(std::mt19937_64& rng);

}  // namespace podhive::testing
