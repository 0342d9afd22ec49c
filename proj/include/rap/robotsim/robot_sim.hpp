#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "rap/graph/message_graph.hpp"
#include "rap/robotsim/geometry.hpp"
#include "rap/sim/executor.hpp"

namespace rap::robotsim {

/// Per-tick compute cost, as a multiple of the tick budget (1/tick_hz).
/// Zero means only the real work. 1.25 makes every tick take 1.25 budgets.
struct LoadModel {
  double tick_cost = 0;
};

struct RtfSample {
  std::int64_t sim_advanced_ns = 0;
  std::int64_t wall_elapsed_ns = 0;
  double rtf = 0;
};

struct RobotSimConfig {
  World world = World::demo();
  ScanSpec scan;
  RobotPose start;
  double tick_hz = 50;
  LoadModel load;
  double rtf_window_s = 1.0;
  std::string odom_topic = "/odom";
  std::string scan_topic = "/scan";
  std::string cmd_topic = "/cmd_vel";

  /// Throws std::invalid_argument.
  void validate() const;
};

inline constexpr const char* kOdomType = "nav/Odometry";
inline constexpr const char* kScanType = "sensor/LaserScan";
inline constexpr const char* kTwistType = "geometry/Twist";

/// Twist payload understood on the command topic.
Value make_twist(double linear, double angular);

/// Tick-driven differential-drive robot on a 2-D segment world.
///
/// Each tick advances simulated time by 1/tick_hz, integrates the pose with
/// the command in force at the start of the tick, and publishes odometry.
/// Scans go out whenever simulated time passes the next scan instant.
///
/// Simulated time is the robot's own; the executor clock plays the wall
/// clock. On a virtual executor the load model is charged as executor time;
/// on a real-time executor the tick busy-spins until its cost is spent.
/// Ticks are paced to absolute deadlines, so an unloaded robot keeps up with
/// the wall clock and a loaded one falls behind by exactly its overrun.
///
/// Envelope payloads carry "stamp_ns" (executor clock at publish) and
/// "sim_ns" (simulated time).
class RobotSim {
 public:
  RobotSim(sim::Executor& ex, MessageGraph& graph, RobotSimConfig config);
  ~RobotSim();

  RobotSim(const RobotSim&) = delete;
  RobotSim& operator=(const RobotSim&) = delete;

  void start();
  void stop();

  RobotPose pose() const;
  std::int64_t sim_time_ns() const;
  std::uint64_t ticks() const;
  std::uint64_t scans_published() const;
  std::uint64_t commands_received() const;
  /// One sample per completed window of at least rtf_window_s wall time.
  std::vector<RtfSample> rtf_samples() const;
  void on_rtf(std::function<void(const RtfSample&)> observer);

  struct Impl;

 private:
  std::shared_ptr<Impl> impl_;
};

}  // namespace rap::robotsim
