#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rap/graph/message_graph.hpp"
#include "rap/sim/executor.hpp"
#include "rap/transport/channel.hpp"
#include "rap/wire/codec.hpp"

namespace rap::bridge {

struct Route {
  std::string name;
  bool isolated = true;  // false: shares the common graph with other shared routes

  /// "name", "name:isolated" or "name:shared".
  static Route parse(std::string_view text);
};

struct BridgeConfig {
  std::vector<Route> routes;
  /// route name -> bearer token expected in the hello frame
  std::map<std::string, std::string> tokens;
  wire::ServerCaps caps;
  std::string path_prefix = "/bridge/";
  /// Channel backlog above which publishes wait in per-subscription queues.
  std::size_t high_water_bytes = 256 * 1024;
  std::int64_t call_timeout_ms = 30'000;
};

struct SubscriptionRecord {
  std::uint32_t throttle_rate_ms = 0;
  std::uint32_t queue_length = wire::kDefaultQueueLength;
  std::optional<std::int64_t> last_sent_ns;
  std::uint64_t sent = 0;
  std::uint64_t throttled = 0;
  std::uint64_t dropped_queue = 0;
};

struct ConnectionRecord {
  std::string conn_id;
  std::string path;
  std::string route;
  bool authenticated = false;
  std::optional<wire::SessionParams> session;
  std::map<std::string, SubscriptionRecord> subscriptions;
  std::vector<TopicSpec> advertisements;
  std::vector<ServiceSpec> provided_services;
  /// call id sent to this connection -> conn_id of the caller ("local" for
  /// callers on the cloud graph itself)
  std::map<std::string, std::string> inflight_calls;
  std::uint64_t frames_in = 0;
  std::uint64_t frames_out = 0;
  std::uint64_t bytes_in = 0;
  std::uint64_t bytes_out = 0;
  std::uint64_t protocol_errors = 0;
};

/// Cumulative per-topic counters for frames the bridge relays toward
/// connections. Survive disconnects. offered = sent + throttled +
/// dropped_queue + discarded + (still pending).
struct RelayCounters {
  std::uint64_t offered = 0;
  std::uint64_t sent = 0;
  std::uint64_t throttled = 0;
  std::uint64_t dropped_queue = 0;
  std::uint64_t discarded = 0;  // subscription or connection gone, or send refused
};

struct BridgeStats {
  std::uint64_t accepted = 0;
  std::uint64_t refused_path = 0;
  std::uint64_t auth_failures = 0;
  std::uint64_t version_mismatches = 0;
  std::uint64_t protocol_errors = 0;
  std::uint64_t disconnects = 0;
  std::uint64_t frames_in = 0;
  std::uint64_t frames_out = 0;
  std::uint64_t bytes_in = 0;
  std::uint64_t bytes_out = 0;
  std::map<std::string, RelayCounters> topics;
};

/// Cloud-side bridge. Relays frames between websocket connections and one
/// message graph per route. Accepts connections from whatever listener it is
/// attached to (the simulated network or a real websocket server) and does
/// all its work on the given executor.
class BridgeServer final : public transport::AcceptHandler {
 public:
  static std::shared_ptr<BridgeServer> create(sim::Executor& ex, BridgeConfig config);
  ~BridgeServer() override;

  bool accepts_path(std::string_view path) const override;
  void on_open(const std::string& path, std::shared_ptr<transport::Channel> channel) override;

  /// The cloud-side graph a route's connections share.
  MessageGraph& graph(const std::string& route);

  /// Direct entry points; normally driven by the channel.
  void on_frame(const std::string& conn_id, const wire::WireFrame& frame);
  void on_disconnect(const std::string& conn_id);

  std::vector<ConnectionRecord> connections() const;
  std::optional<ConnectionRecord> connection(const std::string& conn_id) const;
  BridgeStats stats() const;
  const BridgeConfig& config() const;

  /// Observer for every frame the bridge decodes (conn_id, frame).
  void on_inbound(std::function<void(const std::string&, const wire::WireFrame&)> observer);

  struct Impl;

 private:
  BridgeServer(sim::Executor& ex, BridgeConfig config);
  std::shared_ptr<Impl> impl_;
};

}  // namespace rap::bridge
