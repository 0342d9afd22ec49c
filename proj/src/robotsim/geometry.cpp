#include "rap/robotsim/geometry.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace rap::robotsim {

namespace {
constexpr double kPi = std::numbers::pi;
}

double normalize_angle(double a) {
  a = std::fmod(a, 2 * kPi);
  if (a <= -kPi) a += 2 * kPi;
  if (a > kPi) a -= 2 * kPi;
  return a;
}

RobotPose step_kinematics(const RobotPose& p, double v, double omega, double dt) {
  RobotPose out;
  if (std::abs(omega) < 1e-9) {
    out.x = p.x + v * dt * std::cos(p.theta);
    out.y = p.y + v * dt * std::sin(p.theta);
    out.theta = normalize_angle(p.theta + omega * dt);
    return out;
  }
  const double th1 = p.theta + omega * dt;
  const double r = v / omega;
  out.x = p.x + r * (std::sin(th1) - std::sin(p.theta));
  out.y = p.y - r * (std::cos(th1) - std::cos(p.theta));
  out.theta = normalize_angle(th1);
  return out;
}

World World::square_room(double side, double cx, double cy) {
  const double h = side / 2;
  World w;
  w.segments = {{cx - h, cy - h, cx + h, cy - h},
                {cx + h, cy - h, cx + h, cy + h},
                {cx + h, cy + h, cx - h, cy + h},
                {cx - h, cy + h, cx - h, cy - h}};
  w.bounds = {cx - h, cy - h, cx + h, cy + h};
  return w;
}

World World::demo() {
  World w = square_room(6.0);
  w.segments.push_back({1.0, -3.0, 1.0, -1.0});
  w.segments.push_back({-3.0, 1.5, -1.0, 1.5});
  w.segments.push_back({1.5, 1.0, 2.5, 2.0});
  return w;
}

World parse_world(const std::string& text) {
  World w;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  bool explicit_bounds = false;
  while (std::getline(in, line)) {
    ++lineno;
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    std::string head;
    ls >> head;
    double a, b, c, d;
    const bool is_bounds = head == "bounds";
    if (!is_bounds) ls.seekg(0);
    if (!(ls >> a >> b >> c >> d)) throw std::invalid_argument("world line " + std::to_string(lineno) + ": expected 4 numbers");
    std::string rest;
    if (ls >> rest) throw std::invalid_argument("world line " + std::to_string(lineno) + ": trailing text");
    if (is_bounds) {
      if (!(a < c && b < d)) throw std::invalid_argument("world line " + std::to_string(lineno) + ": empty bounds");
      w.bounds = {a, b, c, d};
      explicit_bounds = true;
    } else {
      w.segments.push_back({a, b, c, d});
    }
  }
  if (!explicit_bounds && !w.segments.empty()) {
    Bounds bb{std::numeric_limits<double>::max(), std::numeric_limits<double>::max(),
              std::numeric_limits<double>::lowest(), std::numeric_limits<double>::lowest()};
    for (const auto& s : w.segments) {
      bb.xmin = std::min({bb.xmin, s.x1, s.x2});
      bb.ymin = std::min({bb.ymin, s.y1, s.y2});
      bb.xmax = std::max({bb.xmax, s.x1, s.x2});
      bb.ymax = std::max({bb.ymax, s.y1, s.y2});
    }
    w.bounds = bb;
  }
  return w;
}

World load_world(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open world file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_world(ss.str());
}

void ScanSpec::validate() const {
  if (n_beams < 1) throw std::invalid_argument("n_beams must be >= 1");
  if (!(max_range_m > 0)) throw std::invalid_argument("max_range_m must be positive");
  if (!(fov_rad > 0 && fov_rad <= 2 * kPi + 1e-12)) throw std::invalid_argument("fov_rad must be in (0, 2pi]");
  if (!(rate_hz > 0)) throw std::invalid_argument("rate_hz must be positive");
}

double ScanSpec::angle_min() const {
  if (fov_rad >= 2 * kPi - 1e-12) return 0;
  return n_beams == 1 ? 0 : -fov_rad / 2;
}

double ScanSpec::angle_increment() const {
  if (fov_rad >= 2 * kPi - 1e-12) return fov_rad / n_beams;
  return n_beams == 1 ? 0 : fov_rad / (n_beams - 1);
}

double cast_ray(const World& world, double ox, double oy, double angle) {
  const double dx = std::cos(angle), dy = std::sin(angle);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : world.segments) {
    // o + t d = a + u (b - a), t >= 0, u in [0, 1]
    const double ex = s.x2 - s.x1, ey = s.y2 - s.y1;
    const double denom = dx * ey - dy * ex;
    const double wx = s.x1 - ox, wy = s.y1 - oy;
    if (std::abs(denom) < 1e-15) {
      // parallel; a collinear segment is hit at its nearer endpoint ahead
      if (std::abs(wx * dy - wy * dx) > 1e-12) continue;
      const double t1 = wx * dx + wy * dy, t2 = (s.x2 - ox) * dx + (s.y2 - oy) * dy;
      if (std::max(t1, t2) < 0) continue;
      best = std::min(best, std::min(t1, t2) < 0 ? 0.0 : std::min(t1, t2));
      continue;
    }
    const double t = (wx * ey - wy * ex) / denom;
    const double u = (wx * dy - wy * dx) / denom;
    if (t >= 0 && u >= 0 && u <= 1) best = std::min(best, t);
  }
  return best;
}

std::vector<double> render_scan(const World& world, const RobotPose& pose, const ScanSpec& spec) {
  std::vector<double> ranges(static_cast<std::size_t>(spec.n_beams));
  const double a0 = spec.angle_min(), inc = spec.angle_increment();
  for (int i = 0; i < spec.n_beams; ++i) {
    ranges[i] = std::min(cast_ray(world, pose.x, pose.y, pose.theta + a0 + i * inc), spec.max_range_m);
  }
  return ranges;
}

}  // namespace rap::robotsim
