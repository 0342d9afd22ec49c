#include <doctest.h>

#include <random>

#include "rap/bridge/bridge_server.hpp"
#include "rap/duct/duct_client.hpp"
#include "rap/netsim/network.hpp"

using namespace rap;
using namespace rap::wire;
using duct::DuctClient;
using duct::DuctConfig;
using duct::Phase;
using duct::TopicRule;

namespace {

struct Rig {
  sim::VirtualExecutor ex;
  netsim::Network net{ex};
  std::shared_ptr<bridge::BridgeServer> server;
  MessageGraph robot{[this] { return ex.now_ns(); }};
  std::unique_ptr<transport::Dialer> dialer;
  std::unique_ptr<DuctClient> duct;

  explicit Rig(netsim::LinkProfile robot_link = {}, bool listening = true) {
    if (robot_link.one_way_latency_ms <= 0) robot_link.one_way_latency_ms = 5;
    bridge::BridgeConfig cfg;
    cfg.routes = {bridge::Route::parse("teamA"), bridge::Route::parse("teamB")};
    cfg.tokens = {{"teamB", "s3cret"}};
    server = bridge::BridgeServer::create(ex, cfg);
    net.add_host("cloud", netsim::LinkProfile::perfect());
    net.add_host("robot", robot_link);
    if (listening) net.listen("cloud", 8443, server);
    dialer = net.dialer("robot");
  }

  static DuctConfig base() {
    DuctConfig c;
    c.server_url = "ws://cloud:8443";
    c.route = "teamA";
    c.keepalive_ms = 0;
    return c;
  }

  DuctClient& make(DuctConfig c) {
    duct = std::make_unique<DuctClient>(ex, *dialer, robot, std::move(c));
    return *duct;
  }

  MessageGraph& cloud() { return server->graph("teamA"); }
  void step(double ms) { net.step(ms); }
};

TopicRule rule(std::string topic, std::string type, bool latched = false) {
  TopicRule r;
  r.topic = std::move(topic);
  r.type_name = std::move(type);
  r.latched = latched;
  return r;
}

std::vector<std::int64_t> seqs(const std::vector<Value>& got) {
  std::vector<std::int64_t> out;
  for (const auto& v : got) out.push_back(v.at("seq").as_int());
  return out;
}

struct Collector {
  std::vector<Value> got;
  SubscriptionHandle sub;
  Collector(MessageGraph& g, const std::string& topic)
      : sub(g.subscribe(TopicName(topic), QueuePolicy{0}, [this](const MessageEnvelope& e) { got.push_back(e.payload); })) {}
};

Value seq_msg(int i) { return Value::map({{"seq", i}}); }

}  // namespace

TEST_CASE("relays outbound and inbound topics through the bridge") {
  Rig rig;
  auto cfg = Rig::base();
  cfg.local_to_remote = {rule("/odom", "nav/Odometry")};
  cfg.remote_to_local = {rule("/cmd_vel", "geo/Twist")};
  auto& d = rig.make(cfg);
  d.start();
  rig.step(100);
  REQUIRE(d.phase() == Phase::live);

  Collector at_cloud(rig.cloud(), "/odom");
  Collector at_robot(rig.robot, "/cmd_vel");
  auto odom = rig.robot.advertise(TopicSpec{TopicName("/odom"), "nav/Odometry"});
  auto cmd = rig.cloud().advertise(TopicSpec{TopicName("/cmd_vel"), "geo/Twist"});
  for (int i = 0; i < 5; ++i) {
    odom.publish(seq_msg(i));
    cmd.publish(seq_msg(100 + i));
    rig.step(50);
  }
  rig.step(100);
  CHECK(seqs(at_cloud.got) == std::vector<std::int64_t>{0, 1, 2, 3, 4});
  CHECK(seqs(at_robot.got) == std::vector<std::int64_t>{100, 101, 102, 103, 104});
  CHECK(d.stats().topics.at("/odom").sent == 5);
  CHECK(d.stats().topics.at("/cmd_vel").received == 5);
  CHECK(d.listening_socket_count() == 0);
  CHECK(rig.net.listening_socket_count() == 1);
}

TEST_CASE("a topic in both directions is rejected") {
  auto cfg = Rig::base();
  cfg.local_to_remote = {rule("/odom", "nav/Odometry")};
  cfg.remote_to_local = {rule("/odom", "nav/Odometry")};
  CHECK_THROWS_AS(cfg.validate(), duct::ConfigInvalid);
  Rig rig;
  CHECK_THROWS_AS(rig.make(cfg), duct::ConfigInvalid);
}

TEST_CASE("sync sends registrations in order before any data") {
  Rig rig;
  auto svc = rig.robot.advertise_service(ServiceSpec{TopicName("/arm"), "arm/Req", "arm/Res"},
                                         [](const Value&, Responder r) { r.respond(Value::map({})); });
  auto cfg = Rig::base();
  cfg.local_to_remote = {rule("/odom", "nav/Odometry"), rule("/scan", "sensor/Scan")};
  cfg.remote_to_local = {rule("/cmd_vel", "geo/Twist")};
  cfg.remote_to_local[0].throttle_rate_ms = 100;
  cfg.exposed_services = {"/arm"};
  auto& d = rig.make(cfg);
  d.start();
  rig.step(100);
  REQUIRE(d.phase() == Phase::live);
  const auto& log = d.session_log();
  REQUIRE(log.size() == 5);
  CHECK(log[0].op == Op::hello);
  CHECK(log[1] == make_advertise("/odom", "nav/Odometry"));
  CHECK(log[2] == make_advertise("/scan", "sensor/Scan"));
  CHECK(log[3] == make_subscribe("/cmd_vel", 100, kDefaultQueueLength));
  CHECK(log[4] == make_advertise_service("/arm", "arm/Req", "arm/Res"));
  CHECK(rig.cloud().has_service(TopicName("/arm")));
}

TEST_CASE("an empty config only says hello") {
  Rig rig;
  auto& d = rig.make(Rig::base());
  d.start();
  rig.step(100);
  CHECK(d.phase() == Phase::live);
  REQUIRE(d.session_log().size() == 1);
  CHECK(d.session_log()[0].op == Op::hello);
}

TEST_CASE("frames published during an outage are flushed in order after reconnect") {
  netsim::LinkProfile link;
  link.one_way_latency_ms = 5;
  link.disconnect_schedule = {{1000, 1000}};
  Rig rig(link);
  auto cfg = Rig::base();
  cfg.local_to_remote = {rule("/odom", "nav/Odometry")};
  auto& d = rig.make(cfg);
  d.start();
  Collector at_cloud(rig.cloud(), "/odom");
  auto odom = rig.robot.advertise(TopicSpec{TopicName("/odom"), "nav/Odometry"});
  rig.step(1100);
  REQUIRE(d.phase() != Phase::live);
  for (int i = 0; i < 7; ++i) {
    odom.publish(seq_msg(i));
    rig.step(100);
  }
  CHECK(d.buffered().at("/odom") == 7);
  rig.step(15000);
  REQUIRE(d.phase() == Phase::live);
  CHECK(seqs(at_cloud.got) == std::vector<std::int64_t>{0, 1, 2, 3, 4, 5, 6});
  CHECK(d.stats().topics.at("/odom").lost_disconnect == 0);
  CHECK(d.stats().lives == 2);
}

TEST_CASE("the outage buffer keeps the newest frames") {
  netsim::LinkProfile link;
  link.one_way_latency_ms = 5;
  link.disconnect_schedule = {{500, 3000}};
  Rig rig(link);
  auto cfg = Rig::base();
  cfg.local_to_remote = {rule("/odom", "nav/Odometry")};
  cfg.disconnect_buffer = 4;
  auto& d = rig.make(cfg);
  d.start();
  Collector at_cloud(rig.cloud(), "/odom");
  auto odom = rig.robot.advertise(TopicSpec{TopicName("/odom"), "nav/Odometry"});
  rig.step(600);
  for (int i = 0; i < 10; ++i) {
    odom.publish(seq_msg(i));
    rig.step(100);
  }
  rig.step(20000);
  CHECK(seqs(at_cloud.got) == std::vector<std::int64_t>{6, 7, 8, 9});
  CHECK(d.stats().topics.at("/odom").lost_disconnect == 6);
}

TEST_CASE("backoff: first loss waits about 200 ms, long outages cap at 10 s") {
  netsim::LinkProfile link;
  link.one_way_latency_ms = 5;
  link.disconnect_schedule = {{1000, 60000}};
  Rig rig(link);
  auto& d = rig.make(Rig::base());
  d.start();
  rig.step(900);
  REQUIRE(d.phase() == Phase::live);
  rig.step(30000);
  const auto& h = d.backoff_history();
  REQUIRE(h.size() >= 7);
  CHECK(h[0] >= 160.0);
  CHECK(h[0] <= 240.0);
  // after 6 consecutive failed attempts
  CHECK(h[6] >= 8000.0);
  CHECK(h[6] <= 12000.0);
  for (std::size_t k = 0; k < 6; ++k) {
    const double nominal = 200.0 * (1 << k);
    CHECK(h[k] >= 0.8 * nominal);
    CHECK(h[k] <= 1.2 * nominal);
  }
  CHECK(d.attempt() >= 6);
  CHECK(d.stats().failed_attempts >= 6);
}

TEST_CASE("backoff: the attempt counter resets after a long-lived connection") {
  netsim::LinkProfile link;
  link.one_way_latency_ms = 5;
  // a 3 s outage pushes the counter up; the next loss comes soon after, the
  // one after that follows more than 30 s of uptime
  link.disconnect_schedule = {{1000, 3000}, {15000, 100}, {50000, 100}};
  Rig rig(link);
  auto& d = rig.make(Rig::base());
  d.start();
  rig.step(14900);
  REQUIRE(d.phase() == Phase::live);
  const unsigned k = d.attempt();
  REQUIRE(k > 0);
  auto n = d.backoff_history().size();
  rig.step(200);
  REQUIRE(d.backoff_history().size() == n + 1);
  const double nominal = duct::BackoffPolicy{}.nominal_ms(k);
  CHECK(d.backoff_history()[n] >= 0.8 * nominal);
  CHECK(d.backoff_history()[n] <= 1.2 * nominal);

  rig.step(49900 - 15100);
  REQUIRE(d.phase() == Phase::live);
  n = d.backoff_history().size();
  rig.step(200);
  REQUIRE(d.backoff_history().size() == n + 1);
  CHECK(d.attempt() == 0);
  CHECK(d.backoff_history()[n] >= 160.0);
  CHECK(d.backoff_history()[n] <= 240.0);
}

TEST_CASE("imported services fail fast while disconnected and proxy while live") {
  netsim::LinkProfile link;
  link.one_way_latency_ms = 5;
  link.disconnect_schedule = {{1000, 2000}};
  Rig rig(link);
  auto plan = rig.cloud().advertise_service(ServiceSpec{TopicName("/plan"), "p/Req", "p/Res"},
                                            [](const Value& req, Responder r) {
                                              r.respond(Value::map({{"echo", req.at("goal")}}));
                                            });
  auto cfg = Rig::base();
  cfg.imported_services = {"/plan"};
  auto& d = rig.make(cfg);

  std::optional<CallResult> before_start;
  rig.robot.call_service_async(TopicName("/plan"), Value::map({{"goal", 1}}),
                               [&](CallResult r) { before_start = r; });
  REQUIRE(before_start);
  CHECK(before_start->status == CallStatus::no_provider);

  d.start();
  rig.step(100);
  std::optional<CallResult> live;
  rig.robot.call_service_async(TopicName("/plan"), Value::map({{"goal", 7}}), [&](CallResult r) { live = r; });
  rig.step(100);
  REQUIRE(live);
  CHECK(live->ok());
  CHECK(live->response.at("echo").as_int() == 7);

  rig.step(1000);
  REQUIRE(d.phase() != Phase::live);
  std::optional<CallResult> down;
  rig.robot.call_service_async(TopicName("/plan"), Value::map({{"goal", 2}}), [&](CallResult r) { down = r; });
  REQUIRE(down);
  CHECK(down->status == CallStatus::no_provider);
}

TEST_CASE("exposed services answer calls from the cloud side") {
  Rig rig;
  auto arm = rig.robot.advertise_service(ServiceSpec{TopicName("/arm"), "a/Req", "a/Res"},
                                         [](const Value& req, Responder r) {
                                           r.respond(Value::map({{"ok", req.at("x").as_int() > 0}}));
                                         });
  auto cfg = Rig::base();
  cfg.exposed_services = {"/arm"};
  auto& d = rig.make(cfg);
  d.start();
  rig.step(100);
  std::optional<CallResult> res;
  rig.cloud().call_service_async(TopicName("/arm"), Value::map({{"x", 3}}), [&](CallResult r) { res = r; });
  rig.step(100);
  REQUIRE(res);
  CHECK(res->ok());
  CHECK(res->response.at("ok").as_bool());
}

TEST_CASE("a bad token is terminal") {
  Rig rig;
  auto cfg = Rig::base();
  cfg.route = "teamB";
  cfg.token = "wrong";
  auto& d = rig.make(cfg);
  d.start();
  rig.step(60000);
  CHECK(d.phase() == Phase::failed);
  REQUIRE(d.last_error());
  CHECK(d.last_error()->starts_with("auth_failure"));
  CHECK(d.stats().connect_attempts == 1);
  CHECK(d.backoff_history().empty());
}

TEST_CASE("the right token gets through") {
  Rig rig;
  auto cfg = Rig::base();
  cfg.route = "teamB";
  cfg.token = "s3cret";
  auto& d = rig.make(cfg);
  d.start();
  rig.step(100);
  CHECK(d.phase() == Phase::live);
}

TEST_CASE("a missing listener means backoff, not failure") {
  Rig rig({}, false);
  auto& d = rig.make(Rig::base());
  d.start();
  rig.step(5000);
  CHECK(d.phase() != Phase::failed);
  CHECK(d.stats().failed_attempts >= 3);
  rig.net.listen("cloud", 8443, rig.server);
  rig.step(15000);
  CHECK(d.phase() == Phase::live);
}

TEST_CASE("latched values are replayed on every session") {
  netsim::LinkProfile link;
  link.one_way_latency_ms = 5;
  link.disconnect_schedule = {{1000, 500}};
  Rig rig(link);
  auto cfg = Rig::base();
  cfg.local_to_remote = {rule("/map", "nav/Map", true)};
  auto& d = rig.make(cfg);
  auto map = rig.robot.advertise(TopicSpec{TopicName("/map"), "nav/Map", true});
  map.publish(seq_msg(1));
  d.start();
  rig.step(500);
  CHECK(d.stats().topics.at("/map").sent == 1);
  rig.step(5000);
  REQUIRE(d.phase() == Phase::live);
  CHECK(d.stats().topics.at("/map").resent_latched == 1);
  // a late subscriber on the cloud side still sees the value
  Collector late(rig.cloud(), "/map");
  rig.step(10);
  CHECK(seqs(late.got) == std::vector<std::int64_t>{1});
}

TEST_CASE("property: after random outages the duct resubscribes and relays again") {
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    CAPTURE(seed);
    netsim::LinkProfile link;
    link.one_way_latency_ms = 20;
    link.jitter_ms = 5;
    link.random_outages = netsim::RandomOutages{3000, 800, seed};
    Rig rig(link);
    auto cfg = Rig::base();
    cfg.seed = seed;
    cfg.local_to_remote = {rule("/odom", "nav/Odometry")};
    cfg.remote_to_local = {rule("/cmd_vel", "geo/Twist")};
    cfg.disconnect_buffer = 5;
    auto& d = rig.make(cfg);
    d.start();
    auto odom = rig.robot.advertise(TopicSpec{TopicName("/odom"), "nav/Odometry"});
    auto cmd = rig.cloud().advertise(TopicSpec{TopicName("/cmd_vel"), "geo/Twist"});
    Collector at_cloud(rig.cloud(), "/odom");
    Collector at_robot(rig.robot, "/cmd_vel");
    int i = 0;
    for (; i < 300; ++i) {
      odom.publish(seq_msg(i));
      rig.step(100);
    }
    // conservation on the duct side
    const auto st = d.stats().topics.at("/odom");
    const auto buffered = d.buffered().count("/odom") ? d.buffered().at("/odom") : 0;
    CHECK(st.produced == st.sent + st.lost_disconnect + st.dropped_queue + buffered);
    // delivered in order, no duplicates
    auto s = seqs(at_cloud.got);
    CHECK(std::is_sorted(s.begin(), s.end()));
    CHECK(std::adjacent_find(s.begin(), s.end()) == s.end());
    CHECK(s.size() <= st.sent);

    // let it settle on a quiet link, then check both directions again
    for (int k = 0; k < 400 && !(d.phase() == Phase::live && rig.net.link_up("robot")); ++k) rig.step(50);
    REQUIRE(d.phase() == Phase::live);
    // registrations are still in flight when the duct itself goes live
    rig.step(100);
    const auto cloud_before = at_cloud.got.size();
    const auto robot_before = at_robot.got.size();
    odom.publish(seq_msg(i));
    cmd.publish(seq_msg(i));
    rig.step(200);
    if (rig.net.link_up("robot") && d.phase() == Phase::live) {
      CHECK(at_cloud.got.size() == cloud_before + 1);
      CHECK(at_robot.got.size() == robot_before + 1);
    }
    CHECK(d.stats().lives >= 2);
  }
}

TEST_CASE("config yaml round trip and strictness") {
  auto c = duct::parse_config_yaml(R"(
server_url: wss://bridge.example.org:9000/
route: teamA
token: abc
encoding_pref: [json]
local_to_remote:
  - {topic: /odom, type_name: nav/Odometry, queue_length: 3}
  - {topic: /map, type_name: nav/Map, latched: true}
remote_to_local:
  - {topic: /cmd_vel, type_name: geo/Twist, throttle_rate_ms: 50}
exposed_services: [/arm]
imported_services: [/plan]
reconnect: {initial_ms: 100, max_ms: 5000}
disconnect_buffer: 20
seed: 9
)");
  CHECK(c.route == "teamA");
  CHECK(c.path() == "/bridge/teamA");
  CHECK(c.encoding_pref == std::vector<Encoding>{Encoding::json});
  REQUIRE(c.local_to_remote.size() == 2);
  CHECK(c.local_to_remote[0].queue_length == 3);
  CHECK(c.local_to_remote[1].latched);
  CHECK(c.remote_to_local[0].throttle_rate_ms == 50u);
  CHECK(c.reconnect.initial_ms == 100);
  CHECK(c.reconnect.factor == 2.0);
  CHECK(c.disconnect_buffer == 20);
  CHECK(c.seed == 9);
  CHECK_THROWS_AS(duct::parse_config_yaml("route: a\nbogus: 1\n"), duct::ConfigInvalid);
  CHECK_THROWS_AS(duct::parse_config_yaml("encoding_pref: [xml]\n"), duct::ConfigInvalid);
  CHECK_THROWS_AS(duct::parse_config_yaml("server_url: http://x/\n"), duct::ConfigInvalid);
}

TEST_CASE("backoff policy arithmetic") {
  duct::BackoffPolicy p;
  CHECK(p.nominal_ms(0) == 200);
  CHECK(p.nominal_ms(3) == 1600);
  CHECK(p.nominal_ms(6) == 10000);
  CHECK(p.nominal_ms(40) == 10000);
  std::mt19937_64 rng(3);
  for (unsigned k = 0; k < 10; ++k) {
    for (int i = 0; i < 200; ++i) {
      const double d = p.delay_ms(k, rng);
      CHECK(d >= 0.8 * p.nominal_ms(k));
      CHECK(d <= 1.2 * p.nominal_ms(k));
    }
  }
}
