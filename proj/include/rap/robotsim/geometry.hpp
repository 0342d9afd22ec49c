#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace rap::robotsim {

struct RobotPose {
  double x = 0;
  double y = 0;
  double theta = 0;  // (-pi, pi]
};

/// Maps any angle into (-pi, pi].
double normalize_angle(double a);

/// Exact unicycle integration over dt seconds with constant v (m/s) and
/// omega (rad/s). Straight line when |omega| < 1e-9.
RobotPose step_kinematics(const RobotPose& pose, double v, double omega, double dt);

struct Segment {
  double x1, y1, x2, y2;
};

struct Bounds {
  double xmin = -1e9, ymin = -1e9, xmax = 1e9, ymax = 1e9;
  bool contains(double x, double y) const { return x >= xmin && x <= xmax && y >= ymin && y <= ymax; }
};

struct World {
  std::vector<Segment> segments;
  Bounds bounds;

  /// Axis-aligned square room of the given side centred on (cx, cy).
  static World square_room(double side, double cx = 0, double cy = 0);
  /// 6 x 6 m room with a few interior walls; start at the origin.
  static World demo();
};

/// One segment per line, "x1 y1 x2 y2" in meters. Blank lines and lines
/// starting with '#' are skipped. An optional "bounds xmin ymin xmax ymax"
/// line sets the bounds; otherwise they are the segments' bounding box.
/// Throws std::invalid_argument with the line number on bad input.
World parse_world(const std::string& text);
World load_world(const std::string& path);

struct ScanSpec {
  int n_beams = 360;
  double fov_rad = 2 * std::numbers::pi;
  double max_range_m = 3.5;
  double rate_hz = 5;

  /// Throws std::invalid_argument.
  void validate() const;
  /// Beam angles relative to the heading. A full circle starts at 0 and steps
  /// fov/n, so beam i and beam n-i mirror each other; a partial fan spans
  /// [-fov/2, fov/2] inclusive.
  double angle_min() const;
  double angle_increment() const;
};

/// Distance along the ray from (ox, oy) in direction `angle` to the nearest
/// segment, or +inf if none is hit.
double cast_ray(const World& world, double ox, double oy, double angle);

/// ranges[i] is the distance to the nearest segment along beam i, clipped to
/// max_range_m.
std::vector<double> render_scan(const World& world, const RobotPose& pose, const ScanSpec& spec);

}  // namespace rap::robotsim
