#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace rap::netsim {

/// Link goes down at `t_down_ms` (relative to link creation) for `duration_ms`.
struct DownWindow {
  double t_down_ms = 0;
  double duration_ms = 0;
};

/// Exponentially distributed up and down periods.
struct RandomOutages {
  double mean_up_ms = 0;
  double mean_down_ms = 0;
  std::uint64_t seed = 0;
};

struct LinkProfile {
  double one_way_latency_ms = 0;
  double jitter_ms = 0;
  std::optional<double> bandwidth_bytes_per_s;
  std::vector<DownWindow> disconnect_schedule;
  std::optional<RandomOutages> random_outages;
  double drop_prob = 0;

  /// Throws std::invalid_argument when an invariant does not hold.
  void validate() const;

  static LinkProfile perfect() { return {}; }
  /// `up_ms` up, `down_ms` down, repeated until `total_ms`.
  static LinkProfile periodic(double up_ms, double down_ms, double total_ms);
};

/// YAML mapping with the LinkProfile field names. The schedule is either a
/// list of [t_down_ms, duration_ms] pairs or a map
/// {random: {mean_up_ms, mean_down_ms, seed}}.
LinkProfile parse_profile_yaml(const std::string& text);
LinkProfile load_profile(const std::string& path);
std::string to_yaml(const LinkProfile& p);

}  // namespace rap::netsim
