#include "rap/graph/message_graph.hpp"

#include <algorithm>
#include <condition_variable>
#include <deque>
#include <map>
#include <mutex>

namespace rap {

std::string_view to_string(CallStatus status) {
  switch (status) {
    case CallStatus::ok: return "ok";
    case CallStatus::no_provider: return "no_provider";
    case CallStatus::timeout: return "timeout";
    case CallStatus::provider_fault: return "provider_fault";
  }
  return "?";
}

namespace detail {

struct GraphCore;

struct SubscriptionState {
  std::weak_ptr<GraphCore> graph;
  TopicName topic;
  QueuePolicy policy;
  MessageGraph::Callback callback;

  mutable std::mutex mu;
  std::deque<MessageEnvelope> queue;
  bool dispatching = false;
  bool active = true;
  std::uint64_t dropped = 0;
  std::uint64_t received = 0;

  // Returns true if the caller must pump (a callback is set and nobody is
  // dispatching yet).
  bool enqueue(MessageEnvelope env) {
    std::lock_guard lk(mu);
    if (!active) return false;
    ++received;
    queue.push_back(std::move(env));
    if (policy.queue_length > 0) {
      while (queue.size() > policy.queue_length) {
        queue.pop_front();
        ++dropped;
      }
    }
    if (!callback || dispatching) return false;
    dispatching = true;
    return true;
  }

  void pump() {
    for (;;) {
      MessageEnvelope env;
      {
        std::lock_guard lk(mu);
        if (queue.empty() || !active) {
          dispatching = false;
          return;
        }
        env = std::move(queue.front());
        queue.pop_front();
      }
      callback(env);
    }
  }
};

struct TopicEntry {
  std::string type_name;
  bool typed = false;
  bool latched = false;
  std::size_t publishers = 0;
  std::size_t latched_publishers = 0;
  std::vector<std::shared_ptr<SubscriptionState>> subscribers;
  std::optional<MessageEnvelope> retained;
};

struct ServiceEntry {
  ServiceSpec spec;
  std::shared_ptr<ServiceProvider> provider;
  std::uint64_t token = 0;
};

struct GraphCore {
  mutable std::mutex mu;
  std::map<TopicName, TopicEntry> topics;
  std::map<TopicName, ServiceEntry> services;
  std::uint64_t next_id = 1;
  MessageGraph::Clock clock;

  void release_publisher(const TopicSpec& spec) {
    std::lock_guard lk(mu);
    auto it = topics.find(spec.name);
    if (it == topics.end()) return;
    auto& t = it->second;
    if (t.publishers > 0) --t.publishers;
    if (spec.latched && t.latched_publishers > 0) --t.latched_publishers;
    if (t.publishers == 0 && !t.retained) t.typed = false;
    if (t.publishers == 0 && t.subscribers.empty() && !t.retained) topics.erase(it);
  }

  void release_subscription(const std::shared_ptr<SubscriptionState>& s) {
    {
      std::lock_guard lk(mu);
      auto it = topics.find(s->topic);
      if (it != topics.end()) {
        auto& subs = it->second.subscribers;
        subs.erase(std::remove(subs.begin(), subs.end(), s), subs.end());
        auto& t = it->second;
        if (t.publishers == 0 && t.subscribers.empty() && !t.retained) topics.erase(it);
      }
    }
    std::lock_guard lk(s->mu);
    s->active = false;
    s->queue.clear();
  }
};

struct PublisherState {
  std::weak_ptr<GraphCore> graph;
  TopicSpec spec;
  std::uint64_t id = 0;
  std::mutex mu;  // serializes seq assignment with fan-out
  std::uint64_t seq = 0;
  bool active = true;
};

struct CallState {
  std::mutex mu;
  bool done = false;
  std::function<void(CallResult)> on_done;
  std::optional<std::chrono::steady_clock::time_point> deadline;

  bool complete(CallResult r) {
    std::function<void(CallResult)> cb;
    {
      std::lock_guard lk(mu);
      if (done) return false;
      done = true;
      if (r.status != CallStatus::timeout && deadline &&
          std::chrono::steady_clock::now() > *deadline) {
        r = CallResult{CallStatus::timeout, {}, "response arrived after deadline"};
      }
      cb = std::move(on_done);
    }
    if (cb) cb(std::move(r));
    return true;
  }
};

}  // namespace detail

// ---- handles -------------------------------------------------------------

PublisherHandle& PublisherHandle::operator=(PublisherHandle&& other) noexcept {
  if (this != &other) {
    unadvertise();
    state_ = std::move(other.state_);
  }
  return *this;
}

PublisherHandle::~PublisherHandle() { unadvertise(); }

std::uint64_t PublisherHandle::publish(Value payload) {
  auto g = state_ ? state_->graph.lock() : nullptr;
  if (!g) throw std::logic_error("publish on a released publisher");
  return publish(std::move(payload), g->clock());
}

std::uint64_t PublisherHandle::publish(Value payload, std::int64_t stamp_ns) {
  if (!state_) throw std::logic_error("publish on a released publisher");
  if (stamp_ns < 0) throw std::invalid_argument("negative stamp");
  auto g = state_->graph.lock();
  if (!g) throw std::logic_error("publish after graph destruction");

  std::vector<std::shared_ptr<detail::SubscriptionState>> to_pump;
  std::uint64_t seq = 0;
  {
    std::lock_guard plk(state_->mu);
    if (!state_->active) throw std::logic_error("publish on an unadvertised publisher");
    seq = ++state_->seq;
    MessageEnvelope env{state_->spec.name, state_->spec.type_name, state_->id, seq, stamp_ns,
                        std::move(payload)};
    std::vector<std::shared_ptr<detail::SubscriptionState>> subs;
    {
      std::lock_guard glk(g->mu);
      auto& t = g->topics[state_->spec.name];
      subs = t.subscribers;
      if (state_->spec.latched) t.retained = env;
    }
    for (auto& s : subs) {
      if (s->enqueue(env)) to_pump.push_back(s);
    }
  }
  for (auto& s : to_pump) s->pump();
  return seq;
}

const TopicSpec& PublisherHandle::spec() const { return state_->spec; }
std::uint64_t PublisherHandle::id() const { return state_->id; }

std::uint64_t PublisherHandle::last_seq() const {
  std::lock_guard lk(state_->mu);
  return state_->seq;
}

void PublisherHandle::unadvertise() {
  if (!state_) return;
  {
    std::lock_guard lk(state_->mu);
    state_->active = false;
  }
  if (auto g = state_->graph.lock()) g->release_publisher(state_->spec);
  state_.reset();
}

SubscriptionHandle& SubscriptionHandle::operator=(SubscriptionHandle&& other) noexcept {
  if (this != &other) {
    unsubscribe();
    state_ = std::move(other.state_);
  }
  return *this;
}

SubscriptionHandle::~SubscriptionHandle() { unsubscribe(); }

std::optional<MessageEnvelope> SubscriptionHandle::try_take() {
  std::lock_guard lk(state_->mu);
  if (state_->queue.empty()) return std::nullopt;
  auto env = std::move(state_->queue.front());
  state_->queue.pop_front();
  return env;
}

std::vector<MessageEnvelope> SubscriptionHandle::drain() {
  std::lock_guard lk(state_->mu);
  std::vector<MessageEnvelope> out(std::make_move_iterator(state_->queue.begin()),
                                   std::make_move_iterator(state_->queue.end()));
  state_->queue.clear();
  return out;
}

std::size_t SubscriptionHandle::pending() const {
  std::lock_guard lk(state_->mu);
  return state_->queue.size();
}

std::uint64_t SubscriptionHandle::dropped() const {
  std::lock_guard lk(state_->mu);
  return state_->dropped;
}

std::uint64_t SubscriptionHandle::received() const {
  std::lock_guard lk(state_->mu);
  return state_->received;
}

const TopicName& SubscriptionHandle::topic() const { return state_->topic; }

void SubscriptionHandle::unsubscribe() {
  if (!state_) return;
  if (auto g = state_->graph.lock()) {
    g->release_subscription(state_);
  } else {
    std::lock_guard lk(state_->mu);
    state_->active = false;
    state_->queue.clear();
  }
  state_.reset();
}

bool Responder::respond(Value response) {
  return state_->complete(CallResult{CallStatus::ok, std::move(response), {}});
}

bool Responder::fail(std::string detail, CallStatus status) {
  if (status == CallStatus::ok) status = CallStatus::provider_fault;
  return state_->complete(CallResult{status, {}, std::move(detail)});
}

bool Responder::done() const {
  std::lock_guard lk(state_->mu);
  return state_->done;
}

bool PendingCall::expire() {
  if (!state_) return false;
  return state_->complete(CallResult{CallStatus::timeout, {}, "call timed out"});
}

bool PendingCall::done() const {
  if (!state_) return true;
  std::lock_guard lk(state_->mu);
  return state_->done;
}

ServiceHandle& ServiceHandle::operator=(ServiceHandle&& other) noexcept {
  if (this != &other) {
    unadvertise();
    graph_ = std::move(other.graph_);
    spec_ = std::move(other.spec_);
    token_ = std::exchange(other.token_, 0);
  }
  return *this;
}

ServiceHandle::~ServiceHandle() { unadvertise(); }

void ServiceHandle::unadvertise() {
  if (token_ == 0) return;
  if (auto g = graph_.lock()) {
    std::lock_guard lk(g->mu);
    auto it = g->services.find(spec_.name);
    if (it != g->services.end() && it->second.token == token_) g->services.erase(it);
  }
  token_ = 0;
}

const TopicInfo* GraphSnapshot::find_topic(const TopicName& name) const {
  for (const auto& t : topics) {
    if (t.spec.name == name) return &t;
  }
  return nullptr;
}

// ---- graph -----------------------------------------------------------------

MessageGraph::MessageGraph()
    : MessageGraph([origin = std::chrono::steady_clock::now()] {
        return static_cast<std::int64_t>(std::chrono::duration_cast<std::chrono::nanoseconds>(
                                             std::chrono::steady_clock::now() - origin)
                                             .count());
      }) {}

MessageGraph::MessageGraph(Clock clock) : core_(std::make_shared<detail::GraphCore>()) {
  core_->clock = std::move(clock);
}

MessageGraph::~MessageGraph() = default;

std::int64_t MessageGraph::now_ns() const { return core_->clock(); }

PublisherHandle MessageGraph::advertise(const TopicSpec& spec) {
  if (spec.name.empty()) throw std::invalid_argument("advertise with empty topic name");
  auto st = std::make_shared<detail::PublisherState>();
  st->graph = core_;
  st->spec = spec;
  std::lock_guard lk(core_->mu);
  auto [it, inserted] = core_->topics.try_emplace(spec.name);
  auto& t = it->second;
  if (t.typed && t.type_name != spec.type_name) {
    throw TypeConflict("topic " + spec.name.str() + " carries '" + t.type_name +
                       "', cannot advertise as '" + spec.type_name + "'");
  }
  t.typed = true;
  t.type_name = spec.type_name;
  ++t.publishers;
  if (spec.latched) ++t.latched_publishers;
  st->id = core_->next_id++;
  return PublisherHandle(std::move(st));
}

SubscriptionHandle MessageGraph::subscribe(const TopicName& topic, QueuePolicy policy) {
  return subscribe(topic, policy, nullptr);
}

SubscriptionHandle MessageGraph::subscribe(const TopicName& topic, QueuePolicy policy,
                                           Callback callback) {
  if (topic.empty()) throw std::invalid_argument("subscribe with empty topic name");
  auto st = std::make_shared<detail::SubscriptionState>();
  st->graph = core_;
  st->topic = topic;
  st->policy = policy;
  st->callback = std::move(callback);
  bool must_pump = false;
  {
    std::lock_guard lk(core_->mu);
    auto& t = core_->topics[topic];
    t.subscribers.push_back(st);
    // Enqueued under the graph lock so no later publish can overtake it.
    if (t.retained) must_pump = st->enqueue(*t.retained);
  }
  if (must_pump) st->pump();
  return SubscriptionHandle(std::move(st));
}

ServiceHandle MessageGraph::advertise_service(const ServiceSpec& spec, ServiceProvider provider) {
  if (spec.name.empty()) throw std::invalid_argument("service with empty name");
  if (!provider) throw std::invalid_argument("service without provider");
  std::lock_guard lk(core_->mu);
  if (core_->services.count(spec.name) != 0) {
    throw ServiceConflict("service " + spec.name.str() + " already has a provider");
  }
  std::uint64_t token = core_->next_id++;
  core_->services[spec.name] =
      detail::ServiceEntry{spec, std::make_shared<ServiceProvider>(std::move(provider)), token};
  return ServiceHandle(core_, spec, token);
}

namespace {

void invoke_provider(const std::shared_ptr<ServiceProvider>& provider, const Value& request,
                     const std::shared_ptr<detail::CallState>& st, Responder responder) {
  try {
    (*provider)(request, std::move(responder));
  } catch (const std::exception& e) {
    st->complete(CallResult{CallStatus::provider_fault, {}, e.what()});
  }
}

}  // namespace

namespace {

std::shared_ptr<ServiceProvider> lookup_provider(detail::GraphCore& core, const TopicName& name) {
  std::lock_guard lk(core.mu);
  auto it = core.services.find(name);
  return it == core.services.end() ? nullptr : it->second.provider;
}

}  // namespace

PendingCall MessageGraph::call_service_async(const TopicName& name, Value request,
                                             std::function<void(CallResult)> on_done) {
  auto st = std::make_shared<detail::CallState>();
  st->on_done = std::move(on_done);
  auto provider = lookup_provider(*core_, name);
  if (!provider) {
    st->complete(CallResult{CallStatus::no_provider, {}, "no provider for " + name.str()});
  } else {
    invoke_provider(provider, request, st, Responder(st));
  }
  return PendingCall(st);
}

CallResult MessageGraph::call_service(const TopicName& name, Value request,
                                      std::chrono::milliseconds timeout) {
  struct Waiter {
    std::mutex mu;
    std::condition_variable cv;
    std::optional<CallResult> result;
  };
  auto w = std::make_shared<Waiter>();
  auto deadline = std::chrono::steady_clock::now() + timeout;

  auto st = std::make_shared<detail::CallState>();
  st->deadline = deadline;
  st->on_done = [w](CallResult r) {
    std::lock_guard lk(w->mu);
    w->result = std::move(r);
    w->cv.notify_all();
  };
  auto provider = lookup_provider(*core_, name);
  if (!provider) return CallResult{CallStatus::no_provider, {}, "no provider for " + name.str()};
  invoke_provider(provider, request, st, Responder(st));

  std::unique_lock lk(w->mu);
  if (!w->cv.wait_until(lk, deadline, [&] { return w->result.has_value(); })) {
    lk.unlock();
    PendingCall(st).expire();
    lk.lock();
    w->cv.wait(lk, [&] { return w->result.has_value(); });
  }
  return std::move(*w->result);
}

bool MessageGraph::has_service(const TopicName& name) const {
  std::lock_guard lk(core_->mu);
  return core_->services.count(name) != 0;
}

GraphSnapshot MessageGraph::snapshot() const {
  GraphSnapshot snap;
  std::lock_guard lk(core_->mu);
  for (const auto& [name, t] : core_->topics) {
    if (t.publishers == 0 && t.subscribers.empty()) continue;
    bool latched = t.latched_publishers > 0 || t.retained.has_value();
    snap.topics.push_back(TopicInfo{TopicSpec{name, t.type_name, latched}, t.publishers,
                                    t.subscribers.size(), t.retained.has_value()});
  }
  for (const auto& [name, s] : core_->services) snap.services.push_back(s.spec);
  return snap;
}

}  // namespace rap
