#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include "rap/duct/duct_config.hpp"
#include "rap/netsim/link_profile.hpp"
#include "rap/robotsim/geometry.hpp"

namespace rap::metrics {

class ScenarioInvalid : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class TrafficKind { nav, bulk };
enum class ClockKind { virtual_time, real_time };

std::string_view to_string(TrafficKind k);

/// Odometry every tick, scans at scan.rate_hz, and twist commands coming back
/// from the cloud at cmd_hz.
struct NavTraffic {
  double tick_hz = 50;
  robotsim::ScanSpec scan;
  double tick_cost = 0;
  double cmd_hz = 10;
  /// Stop producing odometry after this many ticks (0: run for the whole duration).
  std::uint64_t odom_limit = 0;
};

/// Periodic point cloud plus colour image frames, sized uniformly in
/// [min_bytes, max_bytes] of raw content. Half the budget goes to float64 xyz
/// points, half to image bytes.
struct BulkTraffic {
  std::string topic = "/camera/cloud";
  double period_ms = 500;
  std::size_t min_bytes = 100 * 1024;
  std::size_t max_bytes = 1024 * 1024;
};

struct ScenarioSpec {
  std::string name;
  /// Empty: the built-in demo room.
  std::string world_file;
  std::optional<robotsim::World> world;
  netsim::LinkProfile link;
  duct::DuctConfig duct;
  double duration_s = 10;
  /// Extra time after producers stop for buffers and links to empty.
  double drain_s = 30;
  TrafficKind traffic = TrafficKind::nav;
  NavTraffic nav;
  BulkTraffic bulk;
  ClockKind clock = ClockKind::virtual_time;
  std::uint64_t seed = 1;

  /// Throws ScenarioInvalid.
  void validate() const;
};

/// YAML scenario. Keys: name, world, link (inline profile mapping),
/// link_file, outages {up_ms, down_ms}, duct (inline config mapping),
/// duct_file, duration_s, drain_s, clock (virtual|realtime), seed, and
/// traffic {kind: nav|bulk, ...}. Relative paths resolve against `base_dir`.
/// Throws ScenarioInvalid.
ScenarioSpec parse_scenario_yaml(const std::string& text, const std::string& base_dir = ".");
ScenarioSpec load_scenario(const std::string& path);

/// Fills in what the runner needs: server URL, route, rules matching the
/// traffic kind when none are given, duct seed.
void complete_defaults(ScenarioSpec& spec);

}  // namespace rap::metrics
