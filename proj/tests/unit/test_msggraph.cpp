#include <atomic>
#include <deque>
#include <random>
#include <thread>

#include "doctest.h"
#include "rap/graph/message_graph.hpp"

using namespace rap;
using namespace std::chrono_literals;

namespace {

TopicName T(const char* s) { return TopicName(s); }

std::vector<std::uint64_t> seqs(const std::vector<MessageEnvelope>& envs) {
  std::vector<std::uint64_t> out;
  for (const auto& e : envs) out.push_back(e.seq);
  return out;
}

}  // namespace

TEST_CASE("topic names") {
  CHECK(TopicName::is_valid("/cmd_vel"));
  CHECK(TopicName::is_valid("/arm/joint_states"));
  CHECK_FALSE(TopicName::is_valid(""));
  CHECK_FALSE(TopicName::is_valid("/"));
  CHECK_FALSE(TopicName::is_valid("cmd_vel"));
  CHECK_FALSE(TopicName::is_valid("/cmd_vel/"));
  CHECK_FALSE(TopicName::is_valid("//a"));
  CHECK_FALSE(TopicName::is_valid("/a-b"));
  CHECK_THROWS_AS(TopicName("/bad name"), std::invalid_argument);
}

TEST_CASE("advertise and publish with no subscribers") {
  MessageGraph g;
  auto pub = g.advertise({T("/cmd_vel"), "geometry/Twist", false});
  CHECK(pub.publish(Value::map({{"v", 1.0}})) == 1);
  CHECK(pub.publish(Value::map({{"v", 2.0}})) == 2);
}

TEST_CASE("two publishers of the same type interleave") {
  MessageGraph g;
  auto a = g.advertise({T("/tf"), "TFMessage", false});
  auto b = g.advertise({T("/tf"), "TFMessage", false});
  auto sub = g.subscribe(T("/tf"), {0});
  a.publish(Value("a1"));
  b.publish(Value("b1"));
  a.publish(Value("a2"));
  auto got = sub.drain();
  REQUIRE(got.size() == 3);
  CHECK(got[0].payload == Value("a1"));
  CHECK(got[1].payload == Value("b1"));
  CHECK(got[2].payload == Value("a2"));
  CHECK(got[0].publisher_id != got[1].publisher_id);
}

TEST_CASE("conflicting type name is rejected") {
  MessageGraph g;
  auto a = g.advertise({T("/tf"), "TFMessage", false});
  CHECK_THROWS_AS(g.advertise({T("/tf"), "Twist", false}), TypeConflict);
  a.unadvertise();
  // Nothing pins the type once the last publisher is gone.
  CHECK_NOTHROW(g.advertise({T("/tf"), "Twist", false}));
}

TEST_CASE("latched topic replays the retained value first") {
  MessageGraph g;
  auto pub = g.advertise({T("/map"), "nav/OccupancyGrid", true});
  pub.publish(Value("V"));
  auto sub = g.subscribe(T("/map"), {10});
  pub.publish(Value("W"));
  auto got = sub.drain();
  REQUIRE(got.size() == 2);
  CHECK(got[0].payload == Value("V"));
  CHECK(got[1].payload == Value("W"));

  SUBCASE("retained value survives publisher release") {
    pub.unadvertise();
    auto late = g.subscribe(T("/map"), {10});
    auto v = late.try_take();
    REQUIRE(v);
    CHECK(v->payload == Value("W"));
  }
}

TEST_CASE("per-publisher FIFO") {
  MessageGraph g;
  auto pub = g.advertise({T("/odom"), "nav/Odometry", false});
  auto sub = g.subscribe(T("/odom"), {10});
  for (int i = 0; i < 3; ++i) pub.publish(Value(i));
  CHECK(seqs(sub.drain()) == std::vector<std::uint64_t>{1, 2, 3});
}

TEST_CASE("drop-oldest with a stalled consumer") {
  // Hand-stepped queue states for q=2 over seqs 1..5:
  //   [1] -> [1,2] -> [2,3] -> [3,4] -> [4,5]
  MessageGraph g;
  auto pub = g.advertise({T("/scan"), "sensor/LaserScan", false});
  auto sub = g.subscribe(T("/scan"), {2});
  for (int i = 0; i < 5; ++i) pub.publish(Value(i));
  CHECK(sub.dropped() == 3);
  CHECK(seqs(sub.drain()) == std::vector<std::uint64_t>{4, 5});
}

TEST_CASE("drop-oldest property against a reference queue") {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t q = 1 + rng() % 8;
    int n = static_cast<int>(rng() % 30);
    MessageGraph g;
    auto pub = g.advertise({T("/x"), "t", false});
    auto sub = g.subscribe(T("/x"), {q});
    std::deque<std::uint64_t> model;
    for (int i = 0; i < n; ++i) {
      model.push_back(pub.publish(Value(i)));
      if (model.size() > q) model.pop_front();
    }
    CHECK(seqs(sub.drain()) == std::vector<std::uint64_t>(model.begin(), model.end()));
  }
}

TEST_CASE("FIFO subsequence holds across concurrent publishers") {
  MessageGraph g;
  constexpr int kPublishers = 4;
  constexpr int kPerPublisher = 2000;
  std::mutex mu;
  std::map<std::uint64_t, std::vector<std::uint64_t>> received;
  std::atomic<int> in_callback{0};
  std::atomic<bool> overlapped{false};
  auto sub = g.subscribe(T("/load"), {5}, [&](const MessageEnvelope& e) {
    if (in_callback.fetch_add(1) != 0) overlapped = true;
    {
      std::lock_guard lk(mu);
      received[e.publisher_id].push_back(e.seq);
    }
    in_callback.fetch_sub(1);
  });
  std::vector<std::thread> threads;
  for (int p = 0; p < kPublishers; ++p) {
    threads.emplace_back([&] {
      auto pub = g.advertise({T("/load"), "t", false});
      for (int i = 0; i < kPerPublisher; ++i) pub.publish(Value(i));
    });
  }
  for (auto& t : threads) t.join();
  CHECK_FALSE(overlapped.load());
  for (const auto& [id, s] : received) {
    CHECK(std::is_sorted(s.begin(), s.end()));
    CHECK(std::adjacent_find(s.begin(), s.end()) == s.end());
    CHECK(s.back() == kPerPublisher);
  }
}

TEST_CASE("callback may publish back into the graph") {
  MessageGraph g;
  auto out = g.advertise({T("/echo"), "t", false});
  auto sub = g.subscribe(T("/in"), {10}, [&](const MessageEnvelope& e) { out.publish(e.payload); });
  auto echoed = g.subscribe(T("/echo"), {10});
  auto in = g.advertise({T("/in"), "t", false});
  in.publish(Value(42));
  auto got = echoed.try_take();
  REQUIRE(got);
  CHECK(got->payload == Value(42));
}

TEST_CASE("services") {
  MessageGraph g;
  auto echo = g.advertise_service({T("/echo"), "any", "any"},
                                  [](const Value& req, Responder r) { r.respond(req); });

  SUBCASE("echo provider") {
    auto res = g.call_service(T("/echo"), Value::map({{"x", 1}}), 100ms);
    CHECK(res.ok());
    CHECK(res.response == Value::map({{"x", 1}}));
  }
  SUBCASE("unregistered name") {
    auto res = g.call_service(T("/nothing"), Value(), 100ms);
    CHECK(res.status == CallStatus::no_provider);
  }
  SUBCASE("second provider conflicts") {
    CHECK_THROWS_AS(g.advertise_service({T("/echo"), "a", "b"}, [](const Value&, Responder) {}),
                    ServiceConflict);
  }
  SUBCASE("provider fault") {
    auto bad = g.advertise_service({T("/bad"), "a", "b"}, [](const Value&, Responder r) {
      r.fail("map not loaded");
    });
    auto res = g.call_service(T("/bad"), Value(), 100ms);
    CHECK(res.status == CallStatus::provider_fault);
    CHECK(res.detail == "map not loaded");
  }
  SUBCASE("throwing provider is a fault") {
    auto bad = g.advertise_service({T("/throws"), "a", "b"}, [](const Value&, Responder) {
      throw std::runtime_error("boom");
    });
    CHECK(g.call_service(T("/throws"), Value(), 100ms).status == CallStatus::provider_fault);
  }
  SUBCASE("unadvertised provider is gone") {
    echo.unadvertise();
    CHECK_FALSE(g.has_service(T("/echo")));
    CHECK(g.call_service(T("/echo"), Value(), 10ms).status == CallStatus::no_provider);
  }
}

TEST_CASE("slow provider times out and the late response is discarded") {
  MessageGraph g;
  constexpr auto timeout = 50ms;
  std::thread worker;
  std::atomic<bool> late_accepted{true};
  auto svc = g.advertise_service({T("/slow"), "a", "b"}, [&](const Value& req, Responder r) {
    worker = std::thread([r, req, timeout]() mutable {
      std::this_thread::sleep_for(2 * timeout);
      (void)r.respond(req);
    });
  });
  auto res = g.call_service(T("/slow"), Value(1), timeout);
  CHECK(res.status == CallStatus::timeout);
  worker.join();

  // Same with a provider blocking inline on the caller's thread.
  auto blocking = g.advertise_service({T("/blocking"), "a", "b"}, [&](const Value& req, Responder r) {
    std::this_thread::sleep_for(2 * timeout);
    late_accepted = r.respond(req);
  });
  auto res2 = g.call_service(T("/blocking"), Value(1), timeout);
  CHECK(res2.status == CallStatus::timeout);
  CHECK(late_accepted.load());  // the responder completed once, converted to a timeout
}

TEST_CASE("async calls complete exactly once") {
  MessageGraph g;
  std::vector<Responder> parked;
  auto svc = g.advertise_service({T("/parked"), "a", "b"},
                                 [&](const Value&, Responder r) { parked.push_back(r); });
  std::mt19937 rng(3);
  for (int i = 0; i < 200; ++i) {
    int completions = 0;
    CallStatus last{};
    parked.clear();
    auto call = g.call_service_async(T("/parked"), Value(i), [&](CallResult r) {
      ++completions;
      last = r.status;
    });
    // Race the three possible completions in a random order.
    std::vector<int> order{0, 1, 2};
    std::shuffle(order.begin(), order.end(), rng);
    for (int o : order) {
      if (o == 0) parked.at(0).respond(Value(i));
      if (o == 1) parked.at(0).fail("x");
      if (o == 2) call.expire();
    }
    CHECK(completions == 1);
    CallStatus expected = order[0] == 0   ? CallStatus::ok
                          : order[0] == 1 ? CallStatus::provider_fault
                                          : CallStatus::timeout;
    CHECK(last == expected);
  }
}

TEST_CASE("graph snapshot") {
  MessageGraph g;
  CHECK(g.snapshot().topics.empty());
  CHECK(g.snapshot().services.empty());

  auto pub = g.advertise({T("/odom"), "nav/Odometry", false});
  auto sub = g.subscribe(T("/odom"));
  auto snap = g.snapshot();
  REQUIRE(snap.topics.size() == 1);
  CHECK(snap.topics[0].spec.type_name == "nav/Odometry");
  CHECK(snap.topics[0].publishers == 1);
  CHECK(snap.topics[0].subscribers == 1);

  pub.unadvertise();
  snap = g.snapshot();
  REQUIRE(snap.topics.size() == 1);
  CHECK(snap.topics[0].publishers == 0);
  CHECK(snap.topics[0].subscribers == 1);

  sub.unsubscribe();
  CHECK(g.snapshot().topics.empty());

  auto svc = g.advertise_service({T("/get_map"), "Empty", "Map"}, [](const Value&, Responder) {});
  snap = g.snapshot();
  REQUIRE(snap.services.size() == 1);
  CHECK(snap.services[0].name == T("/get_map"));
}

TEST_CASE("handles outliving the graph are harmless") {
  PublisherHandle pub;
  SubscriptionHandle sub;
  {
    MessageGraph g;
    pub = g.advertise({T("/a"), "t", false});
    sub = g.subscribe(T("/a"));
  }
  CHECK_THROWS(pub.publish(Value(1), 0));
  sub.unsubscribe();
}
