#include "rap/netsim/link_profile.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rap::netsim {

void LinkProfile::validate() const {
  auto finite_nonneg = [](double v) { return std::isfinite(v) && v >= 0; };
  if (!finite_nonneg(one_way_latency_ms)) throw std::invalid_argument("one_way_latency_ms must be >= 0");
  if (!finite_nonneg(jitter_ms)) throw std::invalid_argument("jitter_ms must be >= 0");
  if (!(drop_prob >= 0 && drop_prob <= 1)) throw std::invalid_argument("drop_prob must be in [0,1]");
  if (bandwidth_bytes_per_s && !(std::isfinite(*bandwidth_bytes_per_s) && *bandwidth_bytes_per_s > 0)) {
    throw std::invalid_argument("bandwidth_bytes_per_s must be > 0");
  }
  if (random_outages && !disconnect_schedule.empty()) {
    throw std::invalid_argument("disconnect schedule is either a list or random, not both");
  }
  if (random_outages && !(random_outages->mean_up_ms > 0 && random_outages->mean_down_ms > 0)) {
    throw std::invalid_argument("random outage means must be > 0");
  }
  auto windows = disconnect_schedule;
  std::sort(windows.begin(), windows.end(),
            [](const DownWindow& a, const DownWindow& b) { return a.t_down_ms < b.t_down_ms; });
  for (std::size_t i = 0; i < windows.size(); ++i) {
    if (!finite_nonneg(windows[i].t_down_ms) || !(windows[i].duration_ms > 0) ||
        !std::isfinite(windows[i].duration_ms)) {
      throw std::invalid_argument("disconnect window needs t_down_ms >= 0 and duration_ms > 0");
    }
    if (i > 0 && windows[i - 1].t_down_ms + windows[i - 1].duration_ms > windows[i].t_down_ms) {
      throw std::invalid_argument("disconnect windows overlap");
    }
  }
}

LinkProfile LinkProfile::periodic(double up_ms, double down_ms, double total_ms) {
  LinkProfile p;
  for (double t = up_ms; t < total_ms; t += up_ms + down_ms) {
    p.disconnect_schedule.push_back({t, down_ms});
  }
  return p;
}

LinkProfile parse_profile_yaml(const std::string& text) {
  LinkProfile p;
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw std::invalid_argument(std::string("profile: ") + e.what());
  }
  if (!root || root.IsNull()) return p;
  if (!root.IsMap()) throw std::invalid_argument("profile: expected a mapping");
  try {
    for (auto it : root) {
      auto key = it.first.as<std::string>();
      const auto& v = it.second;
      if (key == "one_way_latency_ms") {
        p.one_way_latency_ms = v.as<double>();
      } else if (key == "jitter_ms") {
        p.jitter_ms = v.as<double>();
      } else if (key == "bandwidth_bytes_per_s") {
        if (!v.IsNull()) p.bandwidth_bytes_per_s = v.as<double>();
      } else if (key == "drop_prob") {
        p.drop_prob = v.as<double>();
      } else if (key == "disconnect_schedule") {
        if (v.IsSequence()) {
          for (const auto& w : v) {
            if (w.IsSequence() && w.size() == 2) {
              p.disconnect_schedule.push_back({w[0].as<double>(), w[1].as<double>()});
            } else if (w.IsMap()) {
              p.disconnect_schedule.push_back({w["t_down_ms"].as<double>(), w["duration_ms"].as<double>()});
            } else {
              throw std::invalid_argument("profile: bad disconnect window");
            }
          }
        } else if (v.IsMap() && v["random"]) {
          const auto& r = v["random"];
          p.random_outages = RandomOutages{r["mean_up_ms"].as<double>(), r["mean_down_ms"].as<double>(),
                                           r["seed"] ? r["seed"].as<std::uint64_t>() : 0};
        } else if (!v.IsNull()) {
          throw std::invalid_argument("profile: disconnect_schedule must be a list or {random: ...}");
        }
      } else {
        throw std::invalid_argument("profile: unknown key '" + key + "'");
      }
    }
  } catch (const YAML::Exception& e) {
    throw std::invalid_argument(std::string("profile: ") + e.what());
  }
  p.validate();
  return p;
}

LinkProfile load_profile(const std::string& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path);
  } catch (const YAML::Exception& e) {
    throw std::invalid_argument("cannot read profile " + path + ": " + e.what());
  }
  YAML::Emitter out;
  out << root;
  return parse_profile_yaml(out.c_str());
}

std::string to_yaml(const LinkProfile& p) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "one_way_latency_ms" << YAML::Value << p.one_way_latency_ms;
  out << YAML::Key << "jitter_ms" << YAML::Value << p.jitter_ms;
  if (p.bandwidth_bytes_per_s) out << YAML::Key << "bandwidth_bytes_per_s" << YAML::Value << *p.bandwidth_bytes_per_s;
  out << YAML::Key << "drop_prob" << YAML::Value << p.drop_prob;
  if (p.random_outages) {
    out << YAML::Key << "disconnect_schedule" << YAML::Value << YAML::BeginMap << YAML::Key << "random"
        << YAML::Value << YAML::BeginMap << YAML::Key << "mean_up_ms" << YAML::Value
        << p.random_outages->mean_up_ms << YAML::Key << "mean_down_ms" << YAML::Value
        << p.random_outages->mean_down_ms << YAML::Key << "seed" << YAML::Value << p.random_outages->seed
        << YAML::EndMap << YAML::EndMap;
  } else if (!p.disconnect_schedule.empty()) {
    out << YAML::Key << "disconnect_schedule" << YAML::Value << YAML::BeginSeq;
    for (const auto& w : p.disconnect_schedule) {
      out << YAML::Flow << YAML::BeginSeq << w.t_down_ms << w.duration_ms << YAML::EndSeq;
    }
    out << YAML::EndSeq;
  }
  out << YAML::EndMap;
  return out.c_str();
}

}  // namespace rap::netsim
