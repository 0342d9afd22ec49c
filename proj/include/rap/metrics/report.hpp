#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace rap::metrics {

struct Percentiles {
  std::size_t count = 0;
  double p50_ms = 0;
  double p95_ms = 0;
  double p99_ms = 0;
  double max_ms = 0;

  bool operator==(const Percentiles&) const = default;
};

/// Nearest-rank percentiles of `samples_ms` (need not be sorted).
Percentiles percentiles(std::vector<double> samples_ms);

struct TopicReport {
  std::string direction;  // "up" (robot to cloud) or "down"
  std::uint64_t sent = 0;
  std::uint64_t delivered = 0;
  /// Lost because the connection was down: evicted from the outage buffer,
  /// in flight when the link died, or with no route on the far side.
  std::uint64_t lost_disconnect = 0;
  /// Dropped by a queue or throttle policy while connected.
  std::uint64_t dropped_queue = 0;
  // Breakdown, not part of the identity.
  std::uint64_t lost_in_flight = 0;
  std::uint64_t throttled = 0;
  /// Upper bound on lost_disconnect from the outage buffer alone: for every
  /// outage, what was produced while down beyond the buffer size.
  std::uint64_t loss_bound = 0;
  std::uint64_t payload_mismatches = 0;
  std::uint64_t order_violations = 0;
  std::uint64_t registrations = 0;  // advertise/subscribe frames the bridge saw
  Percentiles latency;

  bool balanced() const { return sent == delivered + lost_disconnect + dropped_queue; }
  bool operator==(const TopicReport&) const = default;
};

struct RunReport {
  std::string scenario;
  std::uint64_t seed = 0;
  std::string encoding;
  std::string traffic;
  std::string clock;
  double duration_s = 0;
  std::map<std::string, TopicReport> topics;
  /// Scans delivered to the cloud per second of run time. A message-rate
  /// analog of a rendering frame rate, not a rendering measurement.
  double scan_fps = 0;
  double scan_hz_configured = 0;
  std::vector<double> rtf;
  double rtf_mean = 0;
  std::uint64_t sessions = 0;
  std::uint64_t reconnects = 0;
  double downtime_s = 0;
  bool final_live = false;
  std::uint64_t bytes_on_wire = 0;
  std::uint64_t frames_on_wire = 0;
  std::size_t listening_sockets = 0;
  std::size_t duct_listening_sockets = 0;
  std::vector<std::string> violations;

  bool ok() const { return violations.empty(); }
  bool operator==(const RunReport&) const = default;
};

/// Fills `violations` with every invariant the report breaks (conservation,
/// percentile order, FIFO, payload identity, duct listening).
void check_invariants(RunReport& r);

void write_table(std::ostream& out, const RunReport& r);
/// One JSON object per line: a "run" record, one "topic" record per topic,
/// one "rtf" record per window.
void write_jsonl(std::ostream& out, const RunReport& r);
/// Throws std::invalid_argument on malformed input.
RunReport read_jsonl(std::istream& in);

struct Delta {
  std::string metric;
  double a = 0;
  double b = 0;
  double delta() const { return b - a; }
  /// b / a, or 0 when a is 0.
  double ratio() const { return a == 0 ? 0 : b / a; }
};

/// Per-metric differences b - a. Throws std::invalid_argument unless both
/// reports come from the same scenario name and seed.
std::vector<Delta> compare(const RunReport& a, const RunReport& b);
void write_deltas(std::ostream& out, const std::vector<Delta>& deltas);

}  // namespace rap::metrics
