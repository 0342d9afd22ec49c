#pragma once

#include <optional>

#include "rap/metrics/report.hpp"
#include "rap/metrics/scenario.hpp"
#include "rap/wire/frame.hpp"

namespace rap::metrics {

struct RunOptions {
  /// Overrides the duct's encoding preference.
  std::optional<wire::Encoding> encoding;
};

/// Wires robot (or bulk source) -> duct -> simulated network -> bridge ->
/// cloud client, runs the scenario, lets buffers drain, and reports. Under the
/// virtual clock the report depends only on the scenario and seed.
///
/// Throws ScenarioInvalid for a bad spec; component startup failures
/// propagate unchanged.
RunReport run(const ScenarioSpec& spec, const RunOptions& options = {});

}  // namespace rap::metrics
