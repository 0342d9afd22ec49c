#include <doctest.h>

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <future>
#include <mutex>
#include <thread>

#include "rap/bridge/bridge_server.hpp"
#include "rap/duct/duct_client.hpp"
#include "rap/ws/ws_transport.hpp"
#include "support/self_signed.hpp"

using namespace rap;
using namespace std::chrono_literals;

namespace {

template <typename Pred>
bool wait_for(Pred pred, std::chrono::milliseconds limit = 5000ms) {
  const auto end = std::chrono::steady_clock::now() + limit;
  while (std::chrono::steady_clock::now() < end) {
    if (pred()) return true;
    std::this_thread::sleep_for(5ms);
  }
  return pred();
}

struct Received {
  std::mutex mu;
  std::vector<Value> got;
  void add(const Value& v) {
    std::lock_guard lk(mu);
    got.push_back(v);
  }
  std::size_t size() {
    std::lock_guard lk(mu);
    return got.size();
  }
};

std::shared_ptr<bridge::BridgeServer> make_bridge(sim::Executor& ex) {
  bridge::BridgeConfig cfg;
  cfg.routes = {bridge::Route::parse("teamA"), bridge::Route::parse("teamB")};
  return bridge::BridgeServer::create(ex, cfg);
}

duct::DuctConfig duct_config(const std::string& url) {
  duct::DuctConfig c;
  c.server_url = url;
  c.route = "teamA";
  duct::TopicRule odom;
  odom.topic = "/odom";
  odom.type_name = "nav/Odometry";
  c.local_to_remote = {odom};
  duct::TopicRule cmd;
  cmd.topic = "/cmd_vel";
  cmd.type_name = "geo/Twist";
  c.remote_to_local = {cmd};
  return c;
}

void relay_round_trip(bool tls) {
  sim::RealtimeExecutor ex;
  auto server = make_bridge(ex);
  ws::WsServerOptions opts;
  opts.port = 0;
  std::filesystem::path dir = std::filesystem::temp_directory_path() / ("rap_ws_test_" + std::to_string(::getpid()));
  if (tls) {
    auto files = rap::testing::write_self_signed(dir);
    opts.tls = ws::TlsFiles{files.cert, files.key};
  }
  const auto before = ws::count_listening_sockets();
  ws::WsServer listener(ex, server, opts);
  const auto port = listener.start();
  REQUIRE(port != 0);

  MessageGraph robot;
  ws::WsDialer dialer(ex);
  std::unique_ptr<duct::DuctClient> d;
  const std::string url = std::string(tls ? "wss" : "ws") + "://127.0.0.1:" + std::to_string(port) + "/";
  ex.run_sync([&] {
    d = std::make_unique<duct::DuctClient>(ex, dialer, robot, duct_config(url));
    d->start();
  });
  REQUIRE(wait_for([&] { return d->phase() == duct::Phase::live; }));

  if (before) {
    const auto now = ws::count_listening_sockets();
    REQUIRE(now);
    CHECK(*now == *before + 1);
    CHECK(d->listening_socket_count() == 0);
  }

  Received at_cloud, at_robot;
  auto s1 = server->graph("teamA").subscribe(TopicName("/odom"), QueuePolicy{0},
                                             [&](const MessageEnvelope& e) { at_cloud.add(e.payload); });
  auto s2 = robot.subscribe(TopicName("/cmd_vel"), QueuePolicy{0}, [&](const MessageEnvelope& e) { at_robot.add(e.payload); });
  auto odom = robot.advertise(TopicSpec{TopicName("/odom"), "nav/Odometry"});
  auto cmd = server->graph("teamA").advertise(TopicSpec{TopicName("/cmd_vel"), "geo/Twist"});
  std::this_thread::sleep_for(50ms);  // let the subscribe reach the bridge
  for (int i = 0; i < 20; ++i) {
    odom.publish(Value::map({{"seq", i}, {"blob", Bytes(1000, static_cast<std::uint8_t>(i))}}));
    cmd.publish(Value::map({{"seq", i}}));
  }
  CHECK(wait_for([&] { return at_cloud.size() == 20 && at_robot.size() == 20; }));
  {
    std::lock_guard lk(at_cloud.mu);
    for (int i = 0; i < static_cast<int>(at_cloud.got.size()); ++i) {
      CHECK(at_cloud.got[i].at("seq").as_int() == i);
      CHECK(at_cloud.got[i].at("blob").as_bytes() == Bytes(1000, static_cast<std::uint8_t>(i)));
    }
  }

  // a refused path never becomes a websocket
  std::promise<std::string> refused;
  ex.run_sync([&] {
    dialer.dial(transport::DialTarget::parse_url(url + "nope"),
                [&](std::shared_ptr<transport::Channel> ch, std::string err) { refused.set_value(ch ? "" : err); });
  });
  auto f = refused.get_future();
  REQUIRE(f.wait_for(5s) == std::future_status::ready);
  CHECK(f.get() == "HTTP 404 for /nope");

  ex.run_sync([&] { d->stop(); });
  listener.stop();
  if (before) CHECK(*ws::count_listening_sockets() == *before);
  ex.run_sync([&] { d.reset(); });
  ex.stop();
  std::filesystem::remove_all(dir);
}

}  // namespace

TEST_CASE("duct and bridge over a real websocket") { relay_round_trip(false); }

TEST_CASE("duct and bridge over TLS") { relay_round_trip(true); }

TEST_CASE("dialing a closed port reports connection refused") {
  sim::RealtimeExecutor ex;
  ws::WsDialer dialer(ex);
  std::promise<std::string> res;
  // find a port nobody listens on by binding and releasing one
  auto server = make_bridge(ex);
  ws::WsServerOptions opts;
  opts.port = 0;
  std::uint16_t port;
  {
    ws::WsServer tmp(ex, server, opts);
    port = tmp.start();
  }
  dialer.dial(transport::DialTarget::parse_url("ws://127.0.0.1:" + std::to_string(port) + "/bridge/teamA"),
              [&](std::shared_ptr<transport::Channel> ch, std::string err) { res.set_value(ch ? "" : err); });
  auto f = res.get_future();
  REQUIRE(f.wait_for(5s) == std::future_status::ready);
  CHECK(f.get() == "connection refused");
  ex.stop();
}

TEST_CASE("a second server cannot take the same port") {
  sim::RealtimeExecutor ex;
  auto server = make_bridge(ex);
  ws::WsServerOptions opts;
  opts.port = 0;
  ws::WsServer a(ex, server, opts);
  opts.port = a.start();
  ws::WsServer b(ex, server, opts);
  CHECK_THROWS_AS(b.start(), std::runtime_error);
  ex.stop();
}
