#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "rap/wire/frame.hpp"

namespace rap::duct {

class ConfigInvalid : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct TopicRule {
  std::string topic;
  std::string type_name;
  std::optional<std::uint32_t> throttle_rate_ms;
  std::uint32_t queue_length = wire::kDefaultQueueLength;
  bool latched = false;
};

struct BackoffPolicy {
  double initial_ms = 200;
  double factor = 2.0;
  double max_ms = 10'000;
  double jitter_fraction = 0.2;
  /// A connection that stays live this long resets the attempt counter.
  double reset_after_ms = 30'000;

  /// min(initial * factor^k, max)
  double nominal_ms(unsigned attempt) const;
  /// nominal_ms(attempt) scaled by a uniform factor in [1 - jitter, 1 + jitter].
  double delay_ms(unsigned attempt, std::mt19937_64& rng) const;
};

struct DuctConfig {
  std::string server_url = "ws://localhost:8443";
  std::string route;
  std::string token;
  std::vector<wire::Encoding> encoding_pref{wire::Encoding::cbor, wire::Encoding::json};
  std::vector<TopicRule> local_to_remote;
  std::vector<TopicRule> remote_to_local;
  std::vector<std::string> exposed_services;
  std::vector<std::string> imported_services;
  BackoffPolicy reconnect;
  /// Per-topic frames kept while the link is down.
  std::uint32_t disconnect_buffer = 10;
  /// Connection backlog above which outbound frames wait in the duct.
  std::uint64_t high_water_bytes = 256 * 1024;
  double keepalive_ms = 15'000;
  double connect_timeout_ms = 5'000;
  double call_timeout_ms = 10'000;
  std::uint64_t seed = 0;

  /// Throws ConfigInvalid.
  void validate() const;
  /// "/bridge/<route>" when a route is set, else the URL's own path.
  std::string path() const;
};

/// YAML document using the DuctConfig field names. Throws ConfigInvalid.
DuctConfig parse_config_yaml(const std::string& text);
DuctConfig load_config(const std::string& path);

}  // namespace rap::duct
