#include "rap/duct/duct_config.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "rap/graph/topic_name.hpp"
#include "rap/transport/channel.hpp"

namespace rap::duct {

double BackoffPolicy::nominal_ms(unsigned attempt) const {
  return std::min(initial_ms * std::pow(factor, static_cast<double>(attempt)), max_ms);
}

double BackoffPolicy::delay_ms(unsigned attempt, std::mt19937_64& rng) const {
  const double base = nominal_ms(attempt);
  if (jitter_fraction <= 0) return base;
  std::uniform_real_distribution<double> u(1.0 - jitter_fraction, 1.0 + jitter_fraction);
  return base * u(rng);
}

void DuctConfig::validate() const {
  try {
    transport::DialTarget::parse_url(server_url);
  } catch (const std::invalid_argument& e) {
    throw ConfigInvalid(std::string("server_url: ") + e.what());
  }
  if (encoding_pref.empty()) throw ConfigInvalid("encoding_pref must not be empty");
  std::set<std::string> outbound;
  for (const auto& r : local_to_remote) {
    if (!TopicName::is_valid(r.topic)) throw ConfigInvalid("bad topic name '" + r.topic + "'");
    if (r.type_name.empty()) throw ConfigInvalid("rule " + r.topic + " needs a type_name");
    if (!outbound.insert(r.topic).second) throw ConfigInvalid("duplicate rule for " + r.topic);
  }
  std::set<std::string> inbound;
  for (const auto& r : remote_to_local) {
    if (!TopicName::is_valid(r.topic)) throw ConfigInvalid("bad topic name '" + r.topic + "'");
    if (r.type_name.empty()) throw ConfigInvalid("rule " + r.topic + " needs a type_name");
    if (outbound.count(r.topic)) throw ConfigInvalid(r.topic + " appears in both directions");
    if (!inbound.insert(r.topic).second) throw ConfigInvalid("duplicate rule for " + r.topic);
  }
  std::set<std::string> services;
  for (const auto* list : {&exposed_services, &imported_services}) {
    for (const auto& s : *list) {
      if (!TopicName::is_valid(s)) throw ConfigInvalid("bad service name '" + s + "'");
      if (!services.insert(s).second) throw ConfigInvalid(s + " listed twice among services");
    }
  }
  const auto& b = reconnect;
  if (!(b.initial_ms > 0 && b.factor >= 1 && b.max_ms >= b.initial_ms && b.jitter_fraction >= 0 &&
        b.jitter_fraction < 1 && b.reset_after_ms >= 0)) {
    throw ConfigInvalid("reconnect policy out of range");
  }
  if (!(keepalive_ms >= 0 && connect_timeout_ms > 0 && call_timeout_ms > 0)) {
    throw ConfigInvalid("timeouts must be positive");
  }
}

std::string DuctConfig::path() const {
  if (!route.empty()) return "/bridge/" + route;
  return transport::DialTarget::parse_url(server_url).path;
}

namespace {

TopicRule parse_rule(const YAML::Node& n) {
  TopicRule r;
  if (!n.IsMap()) throw ConfigInvalid("topic rule must be a mapping");
  for (auto it : n) {
    auto key = it.first.as<std::string>();
    const auto& v = it.second;
    if (key == "topic") {
      r.topic = v.as<std::string>();
    } else if (key == "type_name") {
      r.type_name = v.as<std::string>();
    } else if (key == "throttle_rate_ms") {
      if (!v.IsNull()) r.throttle_rate_ms = v.as<std::uint32_t>();
    } else if (key == "queue_length") {
      r.queue_length = v.as<std::uint32_t>();
    } else if (key == "latched") {
      r.latched = v.as<bool>();
    } else {
      throw ConfigInvalid("unknown topic rule key '" + key + "'");
    }
  }
  return r;
}

std::vector<std::string> string_list(const YAML::Node& n) {
  std::vector<std::string> out;
  if (n.IsNull()) return out;
  for (const auto& s : n) out.push_back(s.as<std::string>());
  return out;
}

}  // namespace

DuctConfig parse_config_yaml(const std::string& text) {
  DuctConfig c;
  try {
    auto root = YAML::Load(text);
    if (!root.IsMap()) throw ConfigInvalid("config must be a mapping");
    for (auto it : root) {
      auto key = it.first.as<std::string>();
      const auto& v = it.second;
      if (key == "server_url") {
        c.server_url = v.as<std::string>();
      } else if (key == "route") {
        c.route = v.as<std::string>();
      } else if (key == "token") {
        c.token = v.as<std::string>();
      } else if (key == "encoding_pref") {
        c.encoding_pref.clear();
        for (const auto& s : string_list(v)) {
          auto e = wire::parse_encoding(s);
          if (!e) throw ConfigInvalid("unknown encoding '" + s + "'");
          c.encoding_pref.push_back(*e);
        }
      } else if (key == "local_to_remote" || key == "remote_to_local") {
        auto& list = key == "local_to_remote" ? c.local_to_remote : c.remote_to_local;
        if (!v.IsNull())
          for (const auto& r : v) list.push_back(parse_rule(r));
      } else if (key == "exposed_services") {
        c.exposed_services = string_list(v);
      } else if (key == "imported_services") {
        c.imported_services = string_list(v);
      } else if (key == "reconnect") {
        for (auto r : v) {
          auto k = r.first.as<std::string>();
          auto x = r.second.as<double>();
          if (k == "initial_ms") c.reconnect.initial_ms = x;
          else if (k == "factor") c.reconnect.factor = x;
          else if (k == "max_ms") c.reconnect.max_ms = x;
          else if (k == "jitter_fraction") c.reconnect.jitter_fraction = x;
          else if (k == "reset_after_ms") c.reconnect.reset_after_ms = x;
          else throw ConfigInvalid("unknown reconnect key '" + k + "'");
        }
      } else if (key == "disconnect_buffer") {
        c.disconnect_buffer = v.as<std::uint32_t>();
      } else if (key == "high_water_bytes") {
        c.high_water_bytes = v.as<std::uint64_t>();
      } else if (key == "keepalive_ms") {
        c.keepalive_ms = v.as<double>();
      } else if (key == "connect_timeout_ms") {
        c.connect_timeout_ms = v.as<double>();
      } else if (key == "call_timeout_ms") {
        c.call_timeout_ms = v.as<double>();
      } else if (key == "seed") {
        c.seed = v.as<std::uint64_t>();
      } else {
        throw ConfigInvalid("unknown config key '" + key + "'");
      }
    }
  } catch (const YAML::Exception& e) {
    throw ConfigInvalid(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

DuctConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigInvalid("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_yaml(ss.str());
}

}  // namespace rap::duct
