#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rap/duct/duct_config.hpp"
#include "rap/graph/message_graph.hpp"
#include "rap/sim/executor.hpp"
#include "rap/transport/channel.hpp"
#include "rap/wire/frame.hpp"

namespace rap::duct {

enum class Phase { stopped, connecting, syncing, live, backoff, failed };

std::string_view to_string(Phase p);

struct TopicStats {
  std::uint64_t produced = 0;         // local messages seen (outbound rules)
  std::uint64_t sent = 0;             // handed to the connection
  std::uint64_t lost_disconnect = 0;  // evicted from the outage buffer
  std::uint64_t dropped_queue = 0;    // evicted under backpressure while live
  std::uint64_t resent_latched = 0;   // retained values replayed at sync
  std::uint64_t received = 0;         // remote frames injected locally (inbound rules)
};

struct DuctStats {
  std::uint64_t connect_attempts = 0;
  std::uint64_t failed_attempts = 0;
  std::uint64_t lives = 0;  // times the duct reached live
  std::uint64_t transport_losses = 0;
  std::uint64_t protocol_errors = 0;
  std::uint64_t bytes_out = 0;
  std::uint64_t bytes_in = 0;
  std::int64_t down_ns = 0;  // time spent outside live after the first live
  std::map<std::string, TopicStats> topics;
};

/// Registration frames a fresh session starts with: advertise for each
/// outbound rule, subscribe for each inbound rule, advertise_service for each
/// exposed service (types taken from the local graph when it knows them).
std::vector<wire::WireFrame> registration_frames(const DuctConfig& config, const GraphSnapshot& local);

/// Device-side connector. Dials out to the bridge, mirrors the configured
/// topics and services between the local graph and the bridge's graph, and
/// reconnects with backoff whenever the connection is lost. It never
/// listens.
///
/// Runs entirely on the given executor. Local graph callbacks are posted to
/// it, so publishers may live on other threads.
class DuctClient {
 public:
  DuctClient(sim::Executor& ex, transport::Dialer& dialer, MessageGraph& local, DuctConfig config);
  ~DuctClient();

  DuctClient(const DuctClient&) = delete;
  DuctClient& operator=(const DuctClient&) = delete;

  void start();
  void stop();

  Phase phase() const;
  unsigned attempt() const;
  DuctStats stats() const;
  std::optional<std::string> last_error() const;
  /// Frames waiting per topic.
  std::map<std::string, std::size_t> buffered() const;
  /// Every backoff delay chosen so far, in ms.
  const std::vector<double>& backoff_history() const;
  /// Frames sent on the most recent session, in order (for inspection).
  const std::vector<wire::WireFrame>& session_log() const;
  /// Listening sockets held by the duct. Always zero: it only has a dialer.
  std::size_t listening_socket_count() const { return 0; }

  void on_phase(std::function<void(Phase)> observer);

  struct Impl;

 private:
  std::shared_ptr<Impl> impl_;
};

}  // namespace rap::duct
