#include "rap/metrics/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <string_view>
#include <thread>
#include <unordered_map>

#include "rap/bridge/bridge_server.hpp"
#include "rap/duct/duct_client.hpp"
#include "rap/netsim/network.hpp"
#include "rap/robotsim/robot_sim.hpp"
#include "rap/wire/codec.hpp"

namespace rap::metrics {

namespace {

constexpr std::uint16_t kBridgePort = 8443;
constexpr const char* kBulkType = "sensor/PointCloudImage";

std::uint64_t digest(const Value& v) {
  const auto bytes = wire::cbor::encode_value(v);
  return std::hash<std::string_view>{}(
      std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

std::int64_t seq_of(const Value& v) {
  const auto* s = v.find("seq");
  return s && s->is_int() ? s->as_int() : -1;
}

struct Source {
  std::uint64_t count = 0;
  std::unordered_map<std::int64_t, std::uint64_t> digests;
  // outage bookkeeping
  std::optional<std::uint64_t> count_at_down;
  std::uint64_t loss_bound = 0;
};

struct Sink {
  std::uint64_t delivered = 0;
  std::uint64_t within_run = 0;
  std::int64_t last_seq = -1;
  std::uint64_t order_violations = 0;
  std::uint64_t mismatches = 0;
  std::vector<double> latency_ms;
};

Value bulk_payload(std::mt19937_64& rng, const BulkTraffic& b, std::int64_t seq, std::int64_t stamp) {
  std::uniform_int_distribution<std::size_t> size(b.min_bytes, b.max_bytes);
  const auto total = size(rng);
  const auto n_points = std::max<std::size_t>(1, total / 2 / 24);
  std::uniform_real_distribution<double> coord(-5.0, 5.0);
  ValueList pts;
  pts.reserve(n_points * 3);
  for (std::size_t i = 0; i < n_points * 3; ++i) pts.emplace_back(coord(rng));
  Bytes image(total - std::min(total, n_points * 24));
  for (std::size_t i = 0; i < image.size(); i += 8) {
    const auto r = rng();
    for (std::size_t k = 0; k < 8 && i + k < image.size(); ++k) image[i + k] = static_cast<std::uint8_t>(r >> (8 * k));
  }
  return Value::map({{"seq", seq}, {"stamp_ns", stamp}, {"points", Value(std::move(pts))}, {"image", Value(std::move(image))}});
}

class Harness {
 public:
  Harness(sim::Executor& ex, const ScenarioSpec& spec) : ex_(ex), spec_(spec), bulk_rng_(spec.seed * 0x9E3779B97F4A7C15ULL + 7) {}

  void setup() {
    net_ = std::make_unique<netsim::Network>(ex_, spec_.seed);
    net_->add_host("cloud", netsim::LinkProfile::perfect());
    net_->add_host("robot", spec_.link);

    bridge::BridgeConfig bc;
    bc.routes = {bridge::Route::parse(spec_.duct.route)};
    if (!spec_.duct.token.empty()) bc.tokens[spec_.duct.route] = spec_.duct.token;
    bridge_ = bridge::BridgeServer::create(ex_, bc);
    bridge_->on_inbound([this](const std::string&, const wire::WireFrame& f) {
      if (!f.topic) return;
      if (f.op == wire::Op::publish) ++bridge_in_[*f.topic];
      if (f.op == wire::Op::advertise || f.op == wire::Op::subscribe) ++registrations_[*f.topic];
    });
    net_->listen("cloud", kBridgePort, bridge_);
    net_->on_link_change([this](const std::string& link, bool up) {
      if (link == "robot" && !up) start_outage();
    });
    dialer_ = net_->dialer("robot");
    robot_graph_ = std::make_unique<MessageGraph>([this] { return ex_.now_ns(); });
    auto& cloud = bridge_->graph(spec_.duct.route);

    for (const auto& r : spec_.duct.local_to_remote) {
      const auto topic = r.topic;
      up_.push_back(topic);
      subs_.push_back(robot_graph_->subscribe(TopicName(topic), QueuePolicy{0},
                                              [this, topic](const MessageEnvelope& e) { on_source(topic, e.payload); }));
      subs_.push_back(cloud.subscribe(TopicName(topic), QueuePolicy{0},
                                      [this, topic](const MessageEnvelope& e) { on_sink(topic, e.payload); }));
    }
    for (const auto& r : spec_.duct.remote_to_local) {
      const auto topic = r.topic;
      down_.push_back(topic);
      subs_.push_back(robot_graph_->subscribe(TopicName(topic), QueuePolicy{0},
                                              [this, topic](const MessageEnvelope& e) { on_sink(topic, e.payload); }));
    }

    duct_ = std::make_unique<duct::DuctClient>(ex_, *dialer_, *robot_graph_, spec_.duct);
    duct_->on_phase([this](duct::Phase p) { on_phase(p); });
    duct_->start();

    if (spec_.traffic == TrafficKind::nav) {
      robotsim::RobotSimConfig rc;
      if (spec_.world) rc.world = *spec_.world;
      rc.scan = spec_.nav.scan;
      rc.tick_hz = spec_.nav.tick_hz;
      rc.load.tick_cost = spec_.nav.tick_cost;
      robot_ = std::make_unique<robotsim::RobotSim>(ex_, *robot_graph_, rc);
      robot_->start();
      if (spec_.nav.cmd_hz > 0 && std::find(down_.begin(), down_.end(), rc.cmd_topic) != down_.end()) {
        cmd_pub_ = cloud.advertise(TopicSpec{TopicName(rc.cmd_topic), robotsim::kTwistType});
        cmd_period_ns_ = static_cast<std::int64_t>(sim::kNsPerSec / spec_.nav.cmd_hz);
        schedule_cmd(cmd_period_ns_);
      }
    } else {
      bulk_pub_ = robot_graph_->advertise(TopicSpec{TopicName(spec_.bulk.topic), kBulkType});
      bulk_period_ns_ = sim::ms_to_ns(spec_.bulk.period_ms);
      schedule_bulk(bulk_period_ns_);
    }
  }

  void stop_producers() {
    producing_ = false;
    if (robot_) robot_->stop();
    if (cmd_timer_) ex_.cancel(*cmd_timer_);
    if (bulk_timer_) ex_.cancel(*bulk_timer_);
  }

  bool drained() const {
    if (duct_->phase() != duct::Phase::live) return false;
    for (const auto& [t, n] : duct_->buffered()) {
      if (n) return false;
    }
    if (net_->counters().in_flight) return false;
    const auto bs = bridge_->stats();
    for (const auto& t : down_) {
      auto it = bs.topics.find(t);
      if (it == bs.topics.end()) continue;
      const auto& c = it->second;
      if (c.offered != c.sent + c.throttled + c.dropped_queue + c.discarded) return false;
    }
    return true;
  }

  RunReport collect() {
    finish_outage_bounds();
    RunReport r;
    r.scenario = spec_.name;
    r.seed = spec_.seed;
    r.encoding = spec_.duct.encoding_pref.empty() ? "json" : std::string(wire::to_string(spec_.duct.encoding_pref.front()));
    r.traffic = std::string(to_string(spec_.traffic));
    r.clock = spec_.clock == ClockKind::virtual_time ? "virtual" : "realtime";
    r.duration_s = spec_.duration_s;

    const auto ds = duct_->stats();
    const auto bs = bridge_->stats();
    const auto buffered = duct_->buffered();
    auto lookup = [](const auto& m, const std::string& k) {
      auto it = m.find(k);
      return it == m.end() ? typename std::decay_t<decltype(m)>::mapped_type{} : it->second;
    };

    for (const auto& t : up_) {
      auto& tr = r.topics[t];
      const auto& src = sources_[t];
      const auto& snk = sinks_[t];
      const auto dt = lookup(ds.topics, t);
      tr.direction = "up";
      tr.sent = src.count;
      tr.delivered = snk.delivered;
      const auto arrived = lookup(bridge_in_, t);
      tr.lost_in_flight = dt.sent > arrived ? dt.sent - arrived : 0;
      tr.lost_disconnect = dt.lost_disconnect + tr.lost_in_flight + lookup(buffered, t);
      tr.dropped_queue = dt.dropped_queue;
      tr.loss_bound = src.loss_bound;
      fill_common(tr, t);
    }
    for (const auto& t : down_) {
      auto& tr = r.topics[t];
      const auto& src = sources_[t];
      const auto& snk = sinks_[t];
      const auto bt = lookup(bs.topics, t);
      const auto received = lookup(ds.topics, t).received;
      tr.direction = "down";
      tr.sent = src.count;
      tr.delivered = snk.delivered;
      tr.lost_in_flight = bt.sent > received ? bt.sent - received : 0;
      const auto pending = bt.offered - std::min(bt.offered, bt.sent + bt.throttled + bt.dropped_queue + bt.discarded);
      tr.lost_disconnect = no_route_ + bt.discarded + tr.lost_in_flight + pending;
      tr.throttled = bt.throttled;
      tr.dropped_queue = bt.throttled + bt.dropped_queue;
      tr.loss_bound = src.loss_bound;
      fill_common(tr, t);
    }

    if (robot_) {
      r.scan_hz_configured = spec_.nav.scan.rate_hz;
      const auto scan_topic = std::string("/scan");
      if (sinks_.count(scan_topic)) r.scan_fps = static_cast<double>(sinks_[scan_topic].within_run) / spec_.duration_s;
      for (const auto& s : robot_->rtf_samples()) r.rtf.push_back(s.rtf);
      if (!r.rtf.empty()) {
        double sum = 0;
        for (double x : r.rtf) sum += x;
        r.rtf_mean = sum / static_cast<double>(r.rtf.size());
      }
    }
    r.sessions = ds.lives;
    r.reconnects = ds.lives > 0 ? ds.lives - 1 : 0;
    r.downtime_s = static_cast<double>(ds.down_ns) / sim::kNsPerSec;
    r.final_live = duct_->phase() == duct::Phase::live;
    const auto nc = net_->counters();
    r.bytes_on_wire = nc.bytes_sent;
    r.frames_on_wire = nc.sent;
    r.listening_sockets = net_->listening_socket_count();
    r.duct_listening_sockets = duct_->listening_socket_count();
    check_invariants(r);
    for (const auto& [t, tr] : r.topics) {
      if (tr.registrations != ds.lives) {
        r.violations.push_back(t + ": registered " + std::to_string(tr.registrations) + " times over " +
                               std::to_string(ds.lives) + " sessions");
      }
    }
    if (!r.final_live) r.violations.push_back("duct not live at the end of the run");
    return r;
  }

  void teardown() {
    stop_producers();
    if (duct_) duct_->stop();
    subs_.clear();
    cmd_pub_ = {};
    bulk_pub_ = {};
    robot_.reset();
    duct_.reset();
    dialer_.reset();
    bridge_.reset();
    net_.reset();
    robot_graph_.reset();
  }

  netsim::Network& net() { return *net_; }

 private:
  void fill_common(TopicReport& tr, const std::string& t) {
    auto& snk = sinks_[t];
    tr.payload_mismatches = snk.mismatches;
    tr.order_violations = snk.order_violations;
    tr.registrations = registrations_.count(t) ? registrations_[t] : 0;
    tr.latency = percentiles(snk.latency_ms);
  }

  void on_source(const std::string& topic, const Value& payload) {
    auto& s = sources_[topic];
    ++s.count;
    s.digests[seq_of(payload)] = digest(payload);
    if (robot_ && topic == "/odom" && spec_.nav.odom_limit && s.count == spec_.nav.odom_limit) {
      ex_.post([this] { stop_producers(); });
    }
  }

  void on_sink(const std::string& topic, const Value& payload) {
    auto& k = sinks_[topic];
    ++k.delivered;
    if (ex_.now_ns() <= sim::ms_to_ns(spec_.duration_s * 1000)) ++k.within_run;
    const auto seq = seq_of(payload);
    if (seq <= k.last_seq) ++k.order_violations;
    k.last_seq = std::max(k.last_seq, seq);
    auto& src = sources_[topic];
    auto it = src.digests.find(seq);
    if (it == src.digests.end() || it->second != digest(payload)) ++k.mismatches;
    // Latency is a steady-state figure: messages stamped before the first
    // session was up measure connection setup, not the link.
    if (const auto* st = payload.find("stamp_ns"); st && st->is_int() && first_live_ns_ && st->as_int() >= *first_live_ns_) {
      k.latency_ms.push_back(static_cast<double>(ex_.now_ns() - st->as_int()) / sim::kNsPerMs);
    }
  }

  std::uint64_t cap_for(const std::string& topic) const {
    return std::find(up_.begin(), up_.end(), topic) != up_.end() ? spec_.duct.disconnect_buffer : 0;
  }

  // Messages that had not left the device when the link died count as
  // produced during the outage, as does everything the duct saw while down.
  std::uint64_t outage_count(const std::string& t, bool at_down) const {
    if (std::find(up_.begin(), up_.end(), t) == up_.end()) return sources_.count(t) ? sources_.at(t).count : 0;
    const auto ds = duct_->stats();
    auto it = ds.topics.find(t);
    const auto produced = it == ds.topics.end() ? 0 : it->second.produced;
    if (!at_down) return produced;
    const auto buffered = duct_->buffered();
    auto b = buffered.find(t);
    return produced - (b == buffered.end() ? 0 : std::min<std::uint64_t>(produced, b->second));
  }

  void on_phase(duct::Phase p) {
    if (p == duct::Phase::live) {
      if (!first_live_ns_) first_live_ns_ = ex_.now_ns();
      finish_outage_bounds();
      return;
    }
    if (p == duct::Phase::backoff) start_outage();
  }

  // An outage starts when the robot's link goes down or the duct loses its
  // session, whichever comes first, and ends when the duct is live again.
  void start_outage() {
    if (!first_live_ns_) return;
    for (auto* topics : {&up_, &down_}) {
      for (const auto& t : *topics) {
        auto& s = sources_[t];
        if (!s.count_at_down) s.count_at_down = outage_count(t, true);
      }
    }
  }

  void finish_outage_bounds() {
    for (auto* topics : {&up_, &down_}) {
      for (const auto& t : *topics) {
        auto& s = sources_[t];
        if (!s.count_at_down) continue;
        const auto now = outage_count(t, false);
        const auto produced = now > *s.count_at_down ? now - *s.count_at_down : 0;
        const auto cap = cap_for(t);
        if (produced > cap) s.loss_bound += produced - cap;
        s.count_at_down.reset();
      }
    }
  }

  void schedule_cmd(std::int64_t delay) {
    cmd_timer_ = ex_.schedule_after(delay, [this] {
      if (!producing_) return;
      const std::string topic = "/cmd_vel";
      const auto snap = bridge_->graph(spec_.duct.route).snapshot();
      const auto* info = snap.find_topic(TopicName(topic));
      // The cloud side has no subscriber of its own, so a subscriber means a
      // live bridge connection.
      if (!info || info->subscribers == 0) ++no_route_;
      const auto seq = static_cast<std::int64_t>(sources_[topic].count + 1);
      auto twist = robotsim::make_twist(0.2, 0.3 * std::sin(static_cast<double>(seq) * 0.05));
      auto m = twist.as_map();
      m["seq"] = seq;
      m["stamp_ns"] = ex_.now_ns();
      Value payload(std::move(m));
      on_source(topic, payload);
      cmd_pub_.publish(std::move(payload));
      schedule_cmd(cmd_period_ns_);
    });
  }

  void schedule_bulk(std::int64_t delay) {
    bulk_timer_ = ex_.schedule_after(delay, [this] {
      if (!producing_) return;
      bulk_pub_.publish(bulk_payload(bulk_rng_, spec_.bulk, ++bulk_seq_, ex_.now_ns()));
      schedule_bulk(bulk_period_ns_);
    });
  }

  sim::Executor& ex_;
  const ScenarioSpec& spec_;
  std::unique_ptr<netsim::Network> net_;
  std::shared_ptr<bridge::BridgeServer> bridge_;
  std::unique_ptr<transport::Dialer> dialer_;
  std::unique_ptr<MessageGraph> robot_graph_;
  std::unique_ptr<duct::DuctClient> duct_;
  std::unique_ptr<robotsim::RobotSim> robot_;
  std::vector<SubscriptionHandle> subs_;
  PublisherHandle cmd_pub_;
  PublisherHandle bulk_pub_;
  std::optional<sim::TimerId> cmd_timer_;
  std::optional<sim::TimerId> bulk_timer_;
  std::int64_t cmd_period_ns_ = 0;
  std::int64_t bulk_period_ns_ = 0;
  std::int64_t bulk_seq_ = 0;
  std::mt19937_64 bulk_rng_;
  bool producing_ = true;
  std::optional<std::int64_t> first_live_ns_;
  std::uint64_t no_route_ = 0;
  std::vector<std::string> up_;
  std::vector<std::string> down_;
  std::map<std::string, Source> sources_;
  std::map<std::string, Sink> sinks_;
  std::map<std::string, std::uint64_t> bridge_in_;
  std::map<std::string, std::uint64_t> registrations_;
};

constexpr double kDrainStepMs = 50;

RunReport run_virtual(const ScenarioSpec& spec) {
  sim::VirtualExecutor ex;
  Harness h(ex, spec);
  h.setup();
  h.net().step(spec.duration_s * 1000);
  h.stop_producers();
  for (double waited = 0; waited < spec.drain_s * 1000 && !h.drained(); waited += kDrainStepMs) {
    h.net().step(kDrainStepMs);
  }
  auto report = h.collect();
  h.teardown();
  return report;
}

RunReport run_realtime(const ScenarioSpec& spec) {
  sim::RealtimeExecutor ex;
  Harness h(ex, spec);
  ex.run_sync([&] { h.setup(); });
  std::this_thread::sleep_for(std::chrono::duration<double>(spec.duration_s));
  ex.run_sync([&] { h.stop_producers(); });
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(spec.drain_s);
  for (;;) {
    bool done = false;
    ex.run_sync([&] { done = h.drained(); });
    if (done || std::chrono::steady_clock::now() >= deadline) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<int>(kDrainStepMs)));
  }
  RunReport report;
  ex.run_sync([&] {
    report = h.collect();
    h.teardown();
  });
  ex.stop();
  return report;
}

}  // namespace

RunReport run(const ScenarioSpec& input, const RunOptions& options) {
  ScenarioSpec spec = input;
  if (options.encoding) spec.duct.encoding_pref = {*options.encoding};
  complete_defaults(spec);
  spec.validate();
  return spec.clock == ClockKind::virtual_time ? run_virtual(spec) : run_realtime(spec);
}

}  // namespace rap::metrics
