#include "rap/metrics/scenario.hpp"

#include <yaml-cpp/yaml.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "rap/robotsim/robot_sim.hpp"

namespace rap::metrics {

namespace fs = std::filesystem;

std::string_view to_string(TrafficKind k) { return k == TrafficKind::nav ? "nav" : "bulk"; }

void ScenarioSpec::validate() const {
  if (name.empty()) throw ScenarioInvalid("scenario: name is empty");
  if (!(duration_s > 0)) throw ScenarioInvalid("scenario: duration_s must be > 0");
  if (drain_s < 0) throw ScenarioInvalid("scenario: drain_s must be >= 0");
  try {
    link.validate();
    duct.validate();
    if (traffic == TrafficKind::nav) nav.scan.validate();
  } catch (const std::invalid_argument& e) {
    throw ScenarioInvalid(std::string("scenario: ") + e.what());
  }
  if (traffic == TrafficKind::nav) {
    if (!(nav.tick_hz > 0)) throw ScenarioInvalid("scenario: tick_hz must be > 0");
    if (nav.cmd_hz < 0) throw ScenarioInvalid("scenario: cmd_hz must be >= 0");
    if (nav.tick_cost < 0) throw ScenarioInvalid("scenario: tick_cost must be >= 0");
  } else {
    if (!(bulk.period_ms > 0)) throw ScenarioInvalid("scenario: period_ms must be > 0");
    if (bulk.min_bytes == 0 || bulk.min_bytes > bulk.max_bytes) {
      throw ScenarioInvalid("scenario: need 0 < min_bytes <= max_bytes");
    }
  }
}

namespace {

std::string dump(const YAML::Node& n) {
  YAML::Emitter out;
  out << n;
  return out.c_str();
}

std::string resolve(const std::string& base, const std::string& p) {
  fs::path path(p);
  if (path.is_relative()) path = fs::path(base) / path;
  if (!fs::exists(path)) throw ScenarioInvalid("scenario: file not found: " + path.string());
  return path.string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioInvalid("scenario: cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void parse_traffic(const YAML::Node& t, ScenarioSpec& s) {
  if (!t.IsMap()) throw ScenarioInvalid("scenario: traffic must be a mapping");
  for (auto it : t) {
    const auto key = it.first.as<std::string>();
    const auto& v = it.second;
    if (key == "kind") {
      const auto k = v.as<std::string>();
      if (k == "nav") {
        s.traffic = TrafficKind::nav;
      } else if (k == "bulk") {
        s.traffic = TrafficKind::bulk;
      } else {
        throw ScenarioInvalid("scenario: unknown traffic kind " + k);
      }
    } else if (key == "tick_hz") {
      s.nav.tick_hz = v.as<double>();
    } else if (key == "scan_hz") {
      s.nav.scan.rate_hz = v.as<double>();
    } else if (key == "beams") {
      s.nav.scan.n_beams = v.as<int>();
    } else if (key == "fov_rad") {
      s.nav.scan.fov_rad = v.as<double>();
    } else if (key == "max_range_m") {
      s.nav.scan.max_range_m = v.as<double>();
    } else if (key == "tick_cost") {
      s.nav.tick_cost = v.as<double>();
    } else if (key == "cmd_hz") {
      s.nav.cmd_hz = v.as<double>();
    } else if (key == "odom_limit") {
      s.nav.odom_limit = v.as<std::uint64_t>();
    } else if (key == "topic") {
      s.bulk.topic = v.as<std::string>();
    } else if (key == "period_ms") {
      s.bulk.period_ms = v.as<double>();
    } else if (key == "min_bytes") {
      s.bulk.min_bytes = v.as<std::size_t>();
    } else if (key == "max_bytes") {
      s.bulk.max_bytes = v.as<std::size_t>();
    } else {
      throw ScenarioInvalid("scenario: unknown traffic key " + key);
    }
  }
}

}  // namespace

ScenarioSpec parse_scenario_yaml(const std::string& text, const std::string& base_dir) {
  ScenarioSpec s;
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ScenarioInvalid(std::string("scenario: ") + e.what());
  }
  if (!root.IsMap()) throw ScenarioInvalid("scenario: expected a mapping");
  std::optional<std::pair<double, double>> outages;
  try {
    for (auto it : root) {
      const auto key = it.first.as<std::string>();
      const auto& v = it.second;
      if (key == "name") {
        s.name = v.as<std::string>();
      } else if (key == "world") {
        s.world_file = resolve(base_dir, v.as<std::string>());
        s.world = robotsim::load_world(s.world_file);
      } else if (key == "link") {
        s.link = netsim::parse_profile_yaml(dump(v));
      } else if (key == "link_file") {
        s.link = netsim::parse_profile_yaml(slurp(resolve(base_dir, v.as<std::string>())));
      } else if (key == "outages") {
        outages = {v["up_ms"].as<double>(), v["down_ms"].as<double>()};
      } else if (key == "duct") {
        s.duct = duct::parse_config_yaml(dump(v));
      } else if (key == "duct_file") {
        s.duct = duct::parse_config_yaml(slurp(resolve(base_dir, v.as<std::string>())));
      } else if (key == "duration_s") {
        s.duration_s = v.as<double>();
      } else if (key == "drain_s") {
        s.drain_s = v.as<double>();
      } else if (key == "clock") {
        const auto c = v.as<std::string>();
        if (c == "virtual") {
          s.clock = ClockKind::virtual_time;
        } else if (c == "realtime") {
          s.clock = ClockKind::real_time;
        } else {
          throw ScenarioInvalid("scenario: clock must be virtual or realtime");
        }
      } else if (key == "seed") {
        s.seed = v.as<std::uint64_t>();
      } else if (key == "traffic") {
        parse_traffic(v, s);
      } else {
        throw ScenarioInvalid("scenario: unknown key " + key);
      }
    }
  } catch (const YAML::Exception& e) {
    throw ScenarioInvalid(std::string("scenario: ") + e.what());
  } catch (const ScenarioInvalid&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ScenarioInvalid(std::string("scenario: ") + e.what());
  }
  if (outages) {
    auto periodic = netsim::LinkProfile::periodic(outages->first, outages->second, s.duration_s * 1000);
    s.link.disconnect_schedule = periodic.disconnect_schedule;
  }
  complete_defaults(s);
  s.validate();
  return s;
}

ScenarioSpec load_scenario(const std::string& path) {
  const auto dir = fs::path(path).parent_path().string();
  return parse_scenario_yaml(slurp(path), dir.empty() ? "." : dir);
}

void complete_defaults(ScenarioSpec& s) {
  s.duct.server_url = "ws://cloud:8443";
  if (s.duct.route.empty()) s.duct.route = "lab";
  if (s.duct.seed == 0) s.duct.seed = s.seed;
  if (!s.duct.local_to_remote.empty() || !s.duct.remote_to_local.empty()) return;
  auto rule = [](std::string topic, std::string type) {
    duct::TopicRule r;
    r.topic = std::move(topic);
    r.type_name = std::move(type);
    return r;
  };
  if (s.traffic == TrafficKind::nav) {
    s.duct.local_to_remote = {rule("/odom", robotsim::kOdomType), rule("/scan", robotsim::kScanType)};
    s.duct.remote_to_local = {rule("/cmd_vel", robotsim::kTwistType)};
  } else {
    s.duct.local_to_remote = {rule(s.bulk.topic, "sensor/PointCloudImage")};
  }
}

}  // namespace rap::metrics
