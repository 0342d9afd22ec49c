// Runs each acceptance criterion once and prints one PASS/FAIL line per
// criterion. Exit status is the number of failures.

#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "rap/bridge/bridge_server.hpp"
#include "rap/duct/duct_client.hpp"
#include "rap/metrics/runner.hpp"
#include "rap/placement/placement.hpp"
#include "rap/robotsim/geometry.hpp"
#include "rap/robotsim/robot_sim.hpp"
#include "rap/wire/codec.hpp"
#include "rap/ws/ws_transport.hpp"
#include "support/generators.hpp"
#include "support/placement_oracles.hpp"
#include "support/robot_oracles.hpp"

using namespace rap;
using namespace rap::metrics;

namespace {

// Pinned tolerances.
constexpr double kRelayWallLimitS = 5.0;
constexpr std::uint64_t kMinReconnects = 7;
constexpr double kLoadedRtf = 0.80, kLoadedRtfTol = 0.02, kUnloadedRtfMin = 0.98;
constexpr double kScanHz = 40, kFpsLo = 39, kFpsHi = 41;
constexpr double kCborRatioMax = 0.60;
constexpr int kFuzzFrames = 100'000, kTruncationFrames = 100;
constexpr int kPlacementInstances = 500;
constexpr double kPlacementWallLimitS = 10.0;
constexpr int kThrottleLo = 48, kThrottleHi = 55;
constexpr double kLatencyMs = 50, kLatencyTolMs = 1, kJitterMs = 10;
constexpr int kKinematicsInputs = 1000, kRayWorlds = 100;
constexpr double kOracleTol = 1e-6;
constexpr double kPi = 3.14159265358979323846;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Listening sockets seen in every scenario run, for criterion 6.
struct SocketAudit {
  int runs = 0;
  bool bridge_single = true;
  bool duct_none = true;
  void add(const RunReport& r) {
    ++runs;
    bridge_single = bridge_single && r.listening_sockets == 1;
    duct_none = duct_none && r.duct_listening_sockets == 0;
  }
} audit;

RunReport run_audited(const ScenarioSpec& s, const RunOptions& o = {}) {
  auto r = run(s, o);
  audit.add(r);
  return r;
}

ScenarioSpec nav_scenario(std::string name, double seconds) {
  ScenarioSpec s;
  s.name = std::move(name);
  s.duration_s = seconds;
  s.seed = 42;
  return s;
}

Outcome relay() {
  auto s = nav_scenario("relay", 20);
  s.nav.odom_limit = 1000;
  bool ok = true;
  std::string detail;
  for (auto enc : {wire::Encoding::cbor, wire::Encoding::json}) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = run_audited(s, {enc});
    const double wall = seconds_since(t0);
    const auto& o = r.topics.at("/odom");
    ok = ok && o.sent == 1000 && o.delivered == 1000 && o.payload_mismatches == 0 && o.order_violations == 0 &&
         wall < kRelayWallLimitS && r.ok();
    detail += fmt("%s %llu/%llu delivered, %llu changed, %llu reordered, %.2f s wall; ",
                  std::string(wire::to_string(enc)).c_str(), (unsigned long long)o.delivered,
                  (unsigned long long)o.sent, (unsigned long long)o.payload_mismatches,
                  (unsigned long long)o.order_violations, wall);
  }
  return {ok, detail};
}

Outcome reconnection() {
  auto s = nav_scenario("reconnect", 20);
  s.link.disconnect_schedule = netsim::LinkProfile::periodic(2000, 500, 20000).disconnect_schedule;
  const auto r = run_audited(s);
  bool ok = r.reconnects >= kMinReconnects && r.final_live && r.ok();
  std::string losses;
  for (const auto& [name, t] : r.topics) {
    ok = ok && t.registrations == r.sessions && t.lost_disconnect <= t.loss_bound && t.balanced();
    losses += fmt(" %s lost %llu<=%llu reg %llu;", name.c_str(), (unsigned long long)t.lost_disconnect,
                  (unsigned long long)t.loss_bound, (unsigned long long)t.registrations);
  }
  return {ok, fmt("%llu reconnects over %llu sessions, downtime %.2f s, final %s;", (unsigned long long)r.reconnects,
                  (unsigned long long)r.sessions, r.downtime_s, r.final_live ? "live" : "down") +
                  losses};
}

Outcome real_time_factor() {
  auto s = nav_scenario("rtf", 6);
  s.clock = ClockKind::real_time;
  s.drain_s = 2;
  s.nav.tick_cost = 1.25;
  const auto loaded = run_audited(s);
  s.nav.tick_cost = 0;
  const auto unloaded = run_audited(s);
  const bool ok = !loaded.rtf.empty() && std::abs(loaded.rtf_mean - kLoadedRtf) <= kLoadedRtfTol &&
                  !unloaded.rtf.empty() && unloaded.rtf_mean >= kUnloadedRtfMin;
  return {ok, fmt("loaded (25%% over budget) %.4f over %zu windows, unloaded %.4f over %zu windows (wall clock)",
                  loaded.rtf_mean, loaded.rtf.size(), unloaded.rtf_mean, unloaded.rtf.size())};
}

Outcome frame_rate() {
  auto s = nav_scenario("fps", 10);
  s.nav.scan.rate_hz = kScanHz;
  const auto perfect = run_audited(s);
  const double needed = static_cast<double>(perfect.bytes_on_wire) / s.duration_s;
  s.link.bandwidth_bytes_per_s = 0.5 * needed;
  const auto narrow = run_audited(s);
  bool balanced = true;
  for (const auto& [n, t] : narrow.topics) balanced = balanced && t.balanced();
  for (const auto& [n, t] : perfect.topics) balanced = balanced && t.balanced();
  const bool ok = perfect.scan_fps >= kFpsLo && perfect.scan_fps <= kFpsHi && narrow.scan_fps < perfect.scan_fps &&
                  balanced && perfect.ok();
  const auto& sc = narrow.topics.at("/scan");
  return {ok, fmt("perfect link %.2f scans/s; at %.0f B/s (half of %.0f) %.2f scans/s, scan sent %llu = %llu + %llu + "
                  "%llu; conservation %s (message-rate analog, not rendering)",
                  perfect.scan_fps, 0.5 * needed, needed, narrow.scan_fps, (unsigned long long)sc.sent,
                  (unsigned long long)sc.delivered, (unsigned long long)sc.lost_disconnect,
                  (unsigned long long)sc.dropped_queue, balanced ? "exact" : "BROKEN")};
}

Outcome encoding() {
  ScenarioSpec s;
  s.name = "bulk";
  s.seed = 42;
  s.traffic = TrafficKind::bulk;
  s.duration_s = 10;
  const auto js = run_audited(s, {wire::Encoding::json});
  const auto cb = run_audited(s, {wire::Encoding::cbor});
  const double ratio = static_cast<double>(cb.bytes_on_wire) / static_cast<double>(js.bytes_on_wire);

  std::uint64_t crashes = 0, mismatches = 0, accepted_prefixes = 0;
  testing::ValueGen gen(2024);
  auto round_trip = [&](const wire::WireFrame& f, wire::Encoding e) {
    try {
      if (!(wire::decode(wire::encode(f, e)) == f)) ++mismatches;
    } catch (...) {
      ++crashes;
    }
  };
  for (int i = 0; i < kFuzzFrames; ++i) {
    const bool json_safe = gen.coin(0.7);
    const auto f = gen.frame(json_safe);
    round_trip(f, wire::Encoding::cbor);
    if (json_safe) round_trip(f, wire::Encoding::json);
    if (i % 10 == 0) {
      // random byte damage must decode or fail cleanly
      auto enc = wire::encode(f, json_safe && gen.coin() ? wire::Encoding::json : wire::Encoding::cbor);
      if (!enc.bytes.empty()) enc.bytes[gen.uniform(0, static_cast<int>(enc.bytes.size()) - 1)] ^= 1 + gen.uniform(0, 254);
      try {
        wire::decode(enc);
      } catch (const wire::CodecError&) {
      } catch (...) {
        ++crashes;
      }
    }
  }
  std::uint64_t prefixes = 0;
  for (int i = 0; i < kTruncationFrames; ++i) {
    const auto f = gen.frame();
    for (auto e : {wire::Encoding::cbor, wire::Encoding::json}) {
      const auto enc = wire::encode(f, e);
      for (std::size_t n = 0; n < enc.bytes.size(); ++n, ++prefixes) {
        try {
          wire::decode(std::span<const std::uint8_t>(enc.bytes.data(), n), e);
          ++accepted_prefixes;
        } catch (const wire::CodecError&) {
        } catch (...) {
          ++crashes;
        }
      }
    }
  }
  const bool ok = ratio < kCborRatioMax && crashes == 0 && mismatches == 0 && accepted_prefixes == 0 && js.ok() && cb.ok();
  return {ok, fmt("bulk bytes-on-wire cbor/json = %llu/%llu = %.3f; fuzz %d frames, %llu truncation prefixes: %llu "
                  "crashes, %llu round-trip mismatches, %llu prefixes accepted",
                  (unsigned long long)cb.bytes_on_wire, (unsigned long long)js.bytes_on_wire, ratio, kFuzzFrames,
                  (unsigned long long)prefixes, (unsigned long long)crashes, (unsigned long long)mismatches,
                  (unsigned long long)accepted_prefixes)};
}

// Real websocket relay: the bridge's listener is the only one in the process.
Outcome single_port() {
  const auto before = ws::count_listening_sockets();
  std::optional<std::size_t> during;
  std::size_t duct_sockets = 99;
  bool live = false;
  {
    sim::RealtimeExecutor ex;
    bridge::BridgeConfig cfg;
    cfg.routes = {bridge::Route::parse("lab")};
    std::shared_ptr<bridge::BridgeServer> server;
    ex.run_sync([&] { server = bridge::BridgeServer::create(ex, cfg); });
    ws::WsServerOptions opts;
    opts.port = 0;
    ws::WsServer listener(ex, server, opts);
    const auto port = listener.start();
    MessageGraph robot;
    ws::WsDialer dialer(ex);
    std::unique_ptr<duct::DuctClient> d;
    duct::DuctConfig dc;
    dc.server_url = "ws://127.0.0.1:" + std::to_string(port) + "/";
    dc.route = "lab";
    duct::TopicRule odom;
    odom.topic = "/odom";
    odom.type_name = "nav/Odometry";
    dc.local_to_remote = {odom};
    ex.run_sync([&] {
      d = std::make_unique<duct::DuctClient>(ex, dialer, robot, dc);
      d->start();
    });
    for (int i = 0; i < 500 && !live; ++i) {
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
      live = d->phase() == duct::Phase::live;
    }
    during = ws::count_listening_sockets();
    duct_sockets = d->listening_socket_count();
    ex.run_sync([&] {
      d->stop();
      d.reset();
    });
    listener.stop();
    ex.stop();
  }
  const bool procfs = before && during;
  const bool ok = live && procfs && *before == 0 && *during == 1 && duct_sockets == 0 && audit.bridge_single &&
                  audit.duct_none && audit.runs > 0;
  return {ok, fmt("real websocket relay: %zu listening socket(s) with bridge and duct up (%zu before), duct holds %zu; "
                  "%d simulated runs: bridge-only listener %s, duct listeners %s",
                  during.value_or(0), before.value_or(0), duct_sockets, audit.runs, audit.bridge_single ? "yes" : "NO",
                  audit.duct_none ? "none" : "SOME")};
}

Outcome placement_check() {
  std::mt19937_64 rng(500);
  int violations = 0, cap_breaches = 0, ffd_mismatch = 0, above_max = 0;
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < kPlacementInstances; ++i) {
    const auto inst = testing::random_instance(rng);
    const auto p = placement::plan(inst.nodes, inst.sessions);
    violations += static_cast<int>(!placement::verify(p, inst.nodes, inst.sessions).empty());
    std::map<std::string, int> gpu_on;
    for (const auto& [s, n] : p.assignment) {
      for (const auto& sess : inst.sessions) {
        if (sess.name == s && sess.needs_gpu) ++gpu_on[n];
      }
    }
    for (const auto& [n, k] : gpu_on) cap_breaches += k > placement::kMaxGpuSessionsPerNode;
    const int placed = static_cast<int>(p.assignment.size());
    ffd_mismatch += placed != testing::naive_ffd(inst.nodes, inst.sessions);
    above_max += placed > testing::exhaustive_max(inst.nodes, inst.sessions);
  }
  const double wall = seconds_since(t0);
  const bool ok = violations == 0 && cap_breaches == 0 && ffd_mismatch == 0 && above_max == 0 &&
                  wall < kPlacementWallLimitS;
  return {ok, fmt("%d instances: %d with violations, %d GPU cap breaches, %d cardinality mismatches vs reference FFD, "
                  "%d above exhaustive max, %.2f s",
                  kPlacementInstances, violations, cap_breaches, ffd_mismatch, above_max, wall)};
}

Outcome throttling() {
  auto s = nav_scenario("throttle", 5);
  s.nav.cmd_hz = 100;
  duct::TopicRule cmd;
  cmd.topic = "/cmd_vel";
  cmd.type_name = robotsim::kTwistType;
  cmd.throttle_rate_ms = 100;
  s.duct.local_to_remote = {};
  s.duct.remote_to_local = {cmd};
  const auto r = run_audited(s);
  const auto& t = r.topics.at("/cmd_vel");
  const bool ok = static_cast<int>(t.delivered) >= kThrottleLo && static_cast<int>(t.delivered) <= kThrottleHi &&
                  t.balanced() && r.ok();
  return {ok, fmt("100 Hz for 5 s at throttle 100 ms: %llu of %llu delivered, %llu throttled",
                  (unsigned long long)t.delivered, (unsigned long long)t.sent, (unsigned long long)t.throttled)};
}

Outcome latency() {
  auto s = nav_scenario("latency", 10);
  s.link.one_way_latency_ms = kLatencyMs;
  const auto flat = run_audited(s);
  s.link.jitter_ms = kJitterMs;
  const auto jittery = run_audited(s);
  const auto& a = flat.topics.at("/odom").latency;
  const auto& b = jittery.topics.at("/odom").latency;
  const bool ok = std::abs(a.p50_ms - kLatencyMs) <= kLatencyTolMs && a.p99_ms <= kLatencyMs &&
                  std::abs(b.p50_ms - kLatencyMs) <= kLatencyTolMs && b.p99_ms <= kLatencyMs + kJitterMs &&
                  flat.ok() && jittery.ok();
  return {ok, fmt("/odom one-way, jitter 0: p50 %.3f p99 %.3f ms (%zu samples); jitter %.0f: p50 %.3f p99 %.3f ms",
                  a.p50_ms, a.p99_ms, a.count, kJitterMs, b.p50_ms, b.p99_ms)};
}

Outcome oracles() {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> vel(-2, 2), dtd(1e-4, 0.1), pos(-5, 5), ang(-kPi, kPi);
  double worst_pose = 0;
  for (int i = 0; i < kKinematicsInputs; ++i) {
    robotsim::RobotPose p{pos(rng), pos(rng), ang(rng)};
    const double v = vel(rng), w = i % 20 == 0 ? 0.0 : vel(rng), dt = dtd(rng);
    const auto got = robotsim::step_kinematics(p, v, w, dt);
    const auto ref = testing::euler_integrate(p.x, p.y, p.theta, v, w, dt);
    worst_pose = std::max({worst_pose, std::abs(got.x - ref.x), std::abs(got.y - ref.y),
                           testing::angle_diff(got.theta, ref.theta)});
  }
  double worst_range = 0;
  std::uniform_real_distribution<double> c(-3, 3);
  robotsim::ScanSpec spec;
  spec.n_beams = 60;
  std::size_t beams = 0;
  for (int k = 0; k < kRayWorlds; ++k) {
    const auto world = testing::random_world(rng, 4 + k % 8);
    const robotsim::RobotPose p{c(rng), c(rng), ang(rng)};
    const auto got = robotsim::render_scan(world, p, spec);
    for (int i = 0; i < spec.n_beams; ++i, ++beams) {
      const double a = p.theta + spec.angle_min() + i * spec.angle_increment();
      worst_range = std::max(worst_range, std::abs(got[i] - testing::sampled_range(world, p.x, p.y, a, spec.max_range_m)));
    }
  }
  const bool ok = worst_pose < kOracleTol && worst_range < kOracleTol;
  return {ok, fmt("kinematics: worst error %.2e over %d inputs; ray cast: worst error %.2e over %zu beams in %d worlds",
                  worst_pose, kKinematicsInputs, worst_range, beams, kRayWorlds)};
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::off);
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"relay correctness", relay},
      {"reconnection", reconnection},
      {"real-time factor", real_time_factor},
      {"frame-rate analog", frame_rate},
      {"encoding", encoding},
      {"single port, outbound only", single_port},
      {"placement", placement_check},
      {"throttling", throttling},
      {"latency", latency},
      {"kinematics and scan oracles", oracles},
  };
  int failures = 0;
  int n = 0;
  for (const auto& [name, check] : criteria) {
    ++n;
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("criterion %2d %s  %s: %s\n", n, o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", n - failures, criteria.size());
  return failures;
}
