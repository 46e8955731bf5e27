#pragma once

#include <string>
#include <vector>

#include "cansim/metrics.hpp"
#include "cansim/scenario.hpp"
#include "cansim/trace.hpp"

namespace cansim {

struct RunResult {
  /// Bus records and detector alerts, ordered by time.
  std::vector<TraceRecord> trace;
  std::vector<std::string> names;
  MetricsReport metrics;
};

/// Builds the bus described by `scenario`, runs it to the end and collects
/// metrics. Same scenario and seed, same result. Throws InvariantViolation.
RunResult run_scenario(const Scenario& scenario);

}  // namespace cansim
