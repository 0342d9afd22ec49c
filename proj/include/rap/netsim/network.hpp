#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rap/netsim/link_profile.hpp"
#include "rap/sim/executor.hpp"
#include "rap/transport/channel.hpp"

namespace rap::netsim {

enum class Outcome { in_flight, delivered, dropped, down };

struct TraceRecord {
  std::uint64_t connection = 0;
  std::uint64_t sender = 0;  // endpoint id
  std::uint64_t seq = 0;     // per sender, from 1
  std::int64_t t_send_ns = 0;
  std::optional<std::int64_t> t_arrive_ns;
  Outcome outcome = Outcome::in_flight;
  std::size_t size = 0;
  std::string op;
};

/// "t_send_ms t_arrive_ms|DROPPED|DOWN|INFLIGHT size op"
std::string format_trace_line(const TraceRecord& r);

struct Counters {
  std::uint64_t sent = 0;
  std::uint64_t delivered = 0;
  std::uint64_t dropped = 0;
  std::uint64_t lost_down = 0;
  std::uint64_t in_flight = 0;
  std::uint64_t bytes_sent = 0;

  bool balanced() const { return sent == delivered + dropped + lost_down + in_flight; }
};

using Labeler = std::function<std::string(std::span<const std::uint8_t>, transport::MessageKind)>;
using LinkListener = std::function<void(const std::string& link, bool up)>;

/// Simulated network of named hosts. Each host has one access link; every
/// connection a host dials rides on that link and shares its fate. Frames on
/// a connection are delivered in order after serialization, latency and
/// jitter. A drop or an outage ends the connection the way a websocket dies:
/// the frame (and everything else in flight) is lost and both ends see
/// on_closed.
///
/// All work runs on the supplied executor; the network is not thread-safe on
/// its own.
class Network {
 public:
  explicit Network(sim::Executor& ex, std::uint64_t seed = 0);
  ~Network();

  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  void add_host(const std::string& name, const LinkProfile& link);
  void listen(const std::string& host, std::uint16_t port, std::shared_ptr<transport::AcceptHandler> handler);
  void unlisten(const std::string& host, std::uint16_t port);
  /// Outbound-only connection factory for `host`.
  std::unique_ptr<transport::Dialer> dialer(const std::string& host);

  /// Two raw endpoints over a dedicated link. Unlike dialed connections the
  /// pair survives outages and drops; affected frames are simply lost.
  std::pair<std::shared_ptr<transport::Channel>, std::shared_ptr<transport::Channel>> attach(
      const LinkProfile& link, std::uint64_t seed);

  /// Virtual mode only: advances the clock and returns the records of the
  /// frames delivered during the step.
  std::vector<TraceRecord> step(double duration_ms);

  bool link_up(const std::string& host) const;
  std::size_t listening_socket_count() const;
  std::vector<std::pair<std::string, std::uint16_t>> listening_sockets() const;
  std::size_t open_connection_count() const;

  Counters counters() const;
  const std::vector<TraceRecord>& trace() const;
  void export_trace(std::ostream& out) const;
  void set_labeler(Labeler labeler);
  void on_link_change(LinkListener listener);

  sim::Executor& executor() const;

  struct Impl;

 private:
  std::shared_ptr<Impl> impl_;
};

}  // namespace rap::netsim
