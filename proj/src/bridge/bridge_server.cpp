#include "rap/bridge/bridge_server.hpp"

#include <spdlog/spdlog.h>

#include <deque>
#include <stdexcept>

#include "rap/wire/call_result.hpp"

namespace rap::bridge {

using transport::Channel;
using transport::MessageKind;
using wire::Op;
using wire::WireFrame;

namespace {

// Connection id of the caller while a call is being handed to the graph;
// providers read it synchronously to record where the call came from.
thread_local const std::string* t_call_origin = nullptr;

const std::string kLocalOrigin = "local";

}  // namespace

Route Route::parse(std::string_view text) {
  Route r;
  auto colon = text.find(':');
  r.name = std::string(text.substr(0, colon));
  if (colon != std::string_view::npos) {
    auto mode = text.substr(colon + 1);
    if (mode == "isolated") {
      r.isolated = true;
    } else if (mode == "shared") {
      r.isolated = false;
    } else {
      throw std::invalid_argument("route mode must be isolated or shared: " + std::string(text));
    }
  }
  if (r.name.empty() || !TopicName::is_valid("/" + r.name) || r.name.find('/') != std::string::npos) {
    throw std::invalid_argument("bad route name: " + std::string(text));
  }
  return r;
}

struct Sub {
  SubscriptionHandle handle;
  SubscriptionRecord rec;
  std::deque<std::pair<std::uint64_t, WireFrame>> pending;
};

struct Inflight {
  Responder responder;
  std::string origin;
  std::string service;
  sim::TimerId timer = 0;
};

struct Conn {
  std::string id;
  std::string path;
  std::string route;
  std::shared_ptr<Channel> channel;
  MessageGraph* graph = nullptr;
  bool authenticated = false;
  std::optional<wire::SessionParams> session;
  std::map<std::string, Sub> subs;
  std::map<std::string, PublisherHandle> pubs;
  std::map<std::string, std::pair<ServiceSpec, ServiceHandle>> services;
  std::map<std::string, Inflight> inflight;  // calls handed to this connection
  std::map<std::string, std::pair<PendingCall, sim::TimerId>> outgoing;  // calls it made
  ConnectionRecord counters;
};

struct BridgeServer::Impl : std::enable_shared_from_this<BridgeServer::Impl> {
  Impl(sim::Executor& e, BridgeConfig c) : ex(e), config(std::move(c)) {}

  sim::Executor& ex;
  BridgeConfig config;
  std::map<std::string, Route> routes;
  std::map<std::string, std::unique_ptr<MessageGraph>> graphs;  // per isolated route
  std::unique_ptr<MessageGraph> shared_graph;
  std::map<std::string, std::unique_ptr<Conn>> conns;
  BridgeStats stats;
  std::uint64_t next_conn = 1;
  std::uint64_t next_call = 1;
  std::uint64_t next_order = 1;
  std::function<void(const std::string&, const WireFrame&)> inbound_observer;

  Conn* find(const std::string& id) {
    auto it = conns.find(id);
    return it == conns.end() ? nullptr : it->second.get();
  }

  MessageGraph& graph_for(const std::string& route);
  void open(const std::string& path, std::shared_ptr<Channel> channel);
  void handle_bytes(const std::string& conn_id, std::vector<std::uint8_t> bytes, MessageKind kind);
  void handle_first(Conn& c, const std::vector<std::uint8_t>& bytes);
  void dispatch(Conn& c, const WireFrame& f);
  void reject(Conn& c, const std::string& text, std::uint64_t BridgeStats::*counter);
  void violation(Conn& c, const std::string& text, std::optional<std::string> id = {});
  bool send(Conn& c, const WireFrame& f, std::optional<wire::Encoding> force = {});

  void do_advertise(Conn& c, const WireFrame& f);
  void do_publish(Conn& c, const WireFrame& f);
  void do_subscribe(Conn& c, const WireFrame& f);
  void do_advertise_service(Conn& c, const WireFrame& f);
  void do_unadvertise_service(Conn& c, const WireFrame& f);
  void do_call(Conn& c, const WireFrame& f);
  void do_response(Conn& c, const WireFrame& f);

  void deliver(const std::string& conn_id, const std::string& topic, const MessageEnvelope& env);
  void flush(Conn& c);
  void count_send(Sub& sub, const std::string& topic, bool ok) {
    if (ok) {
      ++sub.rec.sent;
      ++stats.topics[topic].sent;
    } else {
      ++stats.topics[topic].discarded;
    }
  }
  void forward_call(const std::string& conn_id, const std::string& service, const Value& request, Responder r,
                    const std::string& origin);
  void finish_call(const std::string& conn_id, const std::string& id, const std::string& service,
                   const CallResult& r);
  void disconnect(const std::string& conn_id);
};

MessageGraph& BridgeServer::Impl::graph_for(const std::string& route) {
  auto r = routes.find(route);
  if (r == routes.end()) throw std::invalid_argument("unknown route " + route);
  if (!r->second.isolated) return *shared_graph;
  return *graphs.at(route);
}

void BridgeServer::Impl::open(const std::string& path, std::shared_ptr<Channel> channel) {
  auto route = path.substr(config.path_prefix.size());
  auto c = std::make_unique<Conn>();
  c->id = "c" + std::to_string(next_conn++);
  c->path = path;
  c->route = route;
  c->channel = channel;
  c->graph = &graph_for(route);
  ++stats.accepted;
  const auto id = c->id;
  std::weak_ptr<Impl> self = weak_from_this();
  channel->set_events({
      [self, id](std::vector<std::uint8_t> bytes, MessageKind kind) {
        if (auto s = self.lock()) s->handle_bytes(id, std::move(bytes), kind);
      },
      [self, id] {
        auto s = self.lock();
        if (!s) return;
        if (auto* c = s->find(id)) s->flush(*c);
      },
      [self, id](const std::string& reason) {
        auto s = self.lock();
        if (!s) return;
        spdlog::debug("bridge: {} closed: {}", id, reason);
        s->disconnect(id);
      },
  });
  spdlog::debug("bridge: {} opened on {} via {}", id, path, channel->describe());
  conns.emplace(id, std::move(c));
}

void BridgeServer::Impl::handle_bytes(const std::string& conn_id, std::vector<std::uint8_t> bytes, MessageKind kind) {
  auto* c = find(conn_id);
  if (!c) return;
  ++stats.frames_in;
  stats.bytes_in += bytes.size();
  ++c->counters.frames_in;
  c->counters.bytes_in += bytes.size();
  if (!c->session) {
    handle_first(*c, bytes);
    return;
  }
  WireFrame f;
  try {
    f = wire::decode(bytes, c->session->encoding);
  } catch (const wire::CodecError& e) {
    violation(*c, std::string(wire::to_string(e.kind())) + ": " + e.what());
    return;
  }
  if (inbound_observer) inbound_observer(conn_id, f);
  dispatch(*c, f);
}

void BridgeServer::Impl::handle_first(Conn& c, const std::vector<std::uint8_t>& bytes) {
  // The first frame is always JSON.
  WireFrame f;
  try {
    f = wire::decode(bytes, wire::Encoding::json);
  } catch (const wire::CodecError& e) {
    reject(c, std::string("protocol_violation: first frame: ") + e.what(), &BridgeStats::protocol_errors);
    return;
  }
  if (inbound_observer) inbound_observer(c.id, f);
  auto token = config.tokens.find(c.route);
  if (token != config.tokens.end() && (f.op != Op::hello || f.token.value_or("") != token->second)) {
    reject(c, "auth_failure: missing or wrong token for route " + c.route, &BridgeStats::auth_failures);
    return;
  }
  wire::SessionParams session;
  try {
    session = wire::negotiate(f, config.caps);
  } catch (const wire::CodecError& e) {
    reject(c, std::string("version_mismatch: ") + e.what(), &BridgeStats::version_mismatches);
    return;
  }
  c.session = session;
  c.authenticated = true;
  if (session.legacy) {
    dispatch(c, f);
    return;
  }
  auto reply = wire::make_hello({session.encoding});
  reply.versions = std::vector<std::uint32_t>{session.protocol_version};
  send(c, reply, wire::Encoding::json);
}

void BridgeServer::Impl::reject(Conn& c, const std::string& text, std::uint64_t BridgeStats::*counter) {
  ++(stats.*counter);
  spdlog::info("bridge: refusing {} on {}: {}", c.id, c.path, text);
  send(c, wire::make_status("error", text), wire::Encoding::json);
  auto channel = c.channel;
  auto id = c.id;
  disconnect(id);
  channel->close();
}

void BridgeServer::Impl::violation(Conn& c, const std::string& text, std::optional<std::string> id) {
  ++stats.protocol_errors;
  ++c.counters.protocol_errors;
  spdlog::debug("bridge: {}: {}", c.id, text);
  send(c, wire::make_status("error", text, std::move(id)));
}

bool BridgeServer::Impl::send(Conn& c, const WireFrame& f, std::optional<wire::Encoding> force) {
  auto encoding = force.value_or(c.session ? c.session->encoding : wire::Encoding::json);
  wire::EncodedFrame enc;
  try {
    enc = wire::encode(f, encoding);
  } catch (const wire::CodecError& e) {
    if (f.op == Op::status) return false;
    return send(c, wire::make_status("warning", std::string("cannot encode ") + std::string(wire::to_string(f.op)) +
                                                     ": " + e.what(),
                                     f.id));
  }
  const auto size = enc.bytes.size();
  if (!c.channel->send(std::move(enc.bytes), encoding == wire::Encoding::cbor ? MessageKind::binary : MessageKind::text)) {
    return false;
  }
  ++stats.frames_out;
  stats.bytes_out += size;
  ++c.counters.frames_out;
  c.counters.bytes_out += size;
  return true;
}

void BridgeServer::Impl::dispatch(Conn& c, const WireFrame& f) {
  if (auto bad = wire::validate(f)) {
    violation(c, "protocol_violation: bad field " + *bad, f.id);
    return;
  }
  switch (f.op) {
    case Op::hello: violation(c, "protocol_violation: hello after session start", f.id); break;
    case Op::advertise: do_advertise(c, f); break;
    case Op::unadvertise:
      if (!c.pubs.erase(*f.topic)) violation(c, "protocol_violation: unadvertise of unadvertised " + *f.topic);
      break;
    case Op::publish: do_publish(c, f); break;
    case Op::subscribe: do_subscribe(c, f); break;
    case Op::unsubscribe:
      if (auto it = c.subs.find(*f.topic); it != c.subs.end()) {
        stats.topics[*f.topic].discarded += it->second.pending.size();
        c.subs.erase(it);
      } else {
        violation(c, "protocol_violation: unsubscribe without subscription " + *f.topic);
      }
      break;
    case Op::advertise_service: do_advertise_service(c, f); break;
    case Op::unadvertise_service: do_unadvertise_service(c, f); break;
    case Op::call_service: do_call(c, f); break;
    case Op::service_response: do_response(c, f); break;
    case Op::status: spdlog::debug("bridge: {} status {}: {}", c.id, f.level.value_or(""), f.text.value_or("")); break;
  }
}

void BridgeServer::Impl::do_advertise(Conn& c, const WireFrame& f) {
  TopicSpec spec{TopicName(*f.topic), *f.type_name, f.latched.value_or(false)};
  auto it = c.pubs.find(*f.topic);
  if (it != c.pubs.end()) {
    if (it->second.spec() == spec) return;
    c.pubs.erase(it);
  }
  try {
    c.pubs.emplace(*f.topic, c.graph->advertise(spec));
  } catch (const TypeConflict& e) {
    violation(c, std::string("type_conflict: ") + e.what());
  }
}

void BridgeServer::Impl::do_publish(Conn& c, const WireFrame& f) {
  auto it = c.pubs.find(*f.topic);
  if (it == c.pubs.end()) {
    violation(c, "protocol_violation: publish on unadvertised topic " + *f.topic);
    return;
  }
  it->second.publish(*f.msg);
}

void BridgeServer::Impl::do_subscribe(Conn& c, const WireFrame& f) {
  const auto topic = *f.topic;
  if (auto old = c.subs.find(topic); old != c.subs.end()) stats.topics[topic].discarded += old->second.pending.size();
  c.subs.erase(topic);
  Sub sub;
  sub.rec.throttle_rate_ms = f.throttle_rate_ms.value_or(0);
  sub.rec.queue_length = f.effective_queue_length();
  std::weak_ptr<Impl> self = weak_from_this();
  auto& entry = c.subs.emplace(topic, std::move(sub)).first->second;
  // Graph callbacks may run on a foreign thread; hop onto the executor.
  entry.handle = c.graph->subscribe(TopicName(topic), QueuePolicy{0},
                                    [self, id = c.id, topic](const MessageEnvelope& env) {
                                      auto s = self.lock();
                                      if (!s) return;
                                      s->ex.post([self, id, topic, env] {
                                        if (auto s2 = self.lock()) s2->deliver(id, topic, env);
                                      });
                                    });
}

void BridgeServer::Impl::deliver(const std::string& conn_id, const std::string& topic, const MessageEnvelope& env) {
  auto& tc = stats.topics[topic];
  ++tc.offered;
  auto* c = find(conn_id);
  auto it = c ? c->subs.find(topic) : std::map<std::string, Sub>::iterator{};
  if (!c || it == c->subs.end()) {
    ++tc.discarded;
    return;
  }
  auto& sub = it->second;
  const auto now = ex.now_ns();
  if (sub.rec.throttle_rate_ms > 0 && sub.rec.last_sent_ns &&
      now - *sub.rec.last_sent_ns < std::int64_t{sub.rec.throttle_rate_ms} * sim::kNsPerMs) {
    ++sub.rec.throttled;
    ++tc.throttled;
    return;
  }
  sub.rec.last_sent_ns = now;
  auto frame = wire::make_publish(topic, env.payload);
  if (sub.pending.empty() && c->channel->buffered_amount() <= config.high_water_bytes) {
    count_send(sub, topic, send(*c, frame));
    return;
  }
  sub.pending.emplace_back(next_order++, std::move(frame));
  if (sub.rec.queue_length > 0 && sub.pending.size() > sub.rec.queue_length) {
    sub.pending.pop_front();
    ++sub.rec.dropped_queue;
    ++tc.dropped_queue;
  }
}

void BridgeServer::Impl::flush(Conn& c) {
  while (c.channel->buffered_amount() <= config.high_water_bytes) {
    Sub* oldest = nullptr;
    for (auto& [topic, sub] : c.subs) {
      if (!sub.pending.empty() && (!oldest || sub.pending.front().first < oldest->pending.front().first)) {
        oldest = &sub;
      }
    }
    if (!oldest) return;
    auto frame = std::move(oldest->pending.front().second);
    oldest->pending.pop_front();
    count_send(*oldest, *frame.topic, send(c, frame));
  }
}

void BridgeServer::Impl::do_advertise_service(Conn& c, const WireFrame& f) {
  ServiceSpec spec{TopicName(*f.service), f.type_name.value_or(""), f.response_type.value_or("")};
  if (c.services.count(*f.service)) {
    violation(c, "service_conflict: " + *f.service + " already provided by this connection");
    return;
  }
  std::weak_ptr<Impl> self = weak_from_this();
  auto provider = [self, id = c.id, service = *f.service](const Value& request, Responder r) {
    auto s = self.lock();
    if (!s) {
      r.fail("bridge gone");
      return;
    }
    std::string origin = t_call_origin ? *t_call_origin : kLocalOrigin;
    s->ex.post([self, id, service, request, r, origin] {
      if (auto s2 = self.lock()) {
        s2->forward_call(id, service, request, r, origin);
      } else {
        Responder(r).fail("bridge gone");
      }
    });
  };
  try {
    auto handle = c.graph->advertise_service(spec, provider);
    c.services.emplace(*f.service, std::make_pair(spec, std::move(handle)));
  } catch (const ServiceConflict& e) {
    violation(c, std::string("service_conflict: ") + e.what());
  }
}

void BridgeServer::Impl::do_unadvertise_service(Conn& c, const WireFrame& f) {
  if (!c.services.erase(*f.service)) {
    violation(c, "protocol_violation: unadvertise_service of unprovided " + *f.service);
    return;
  }
  for (auto it = c.inflight.begin(); it != c.inflight.end();) {
    if (it->second.service == *f.service) {
      ex.cancel(it->second.timer);
      it->second.responder.fail("service withdrawn");
      it = c.inflight.erase(it);
    } else {
      ++it;
    }
  }
}

void BridgeServer::Impl::forward_call(const std::string& conn_id, const std::string& service, const Value& request,
                                      Responder r, const std::string& origin) {
  auto* c = find(conn_id);
  if (!c || !c->services.count(service)) {
    r.fail("provider disconnected");
    return;
  }
  auto call_id = "b" + std::to_string(next_call++);
  std::weak_ptr<Impl> self = weak_from_this();
  auto timer = ex.schedule_after(config.call_timeout_ms * sim::kNsPerMs, [self, conn_id, call_id] {
    auto s = self.lock();
    if (!s) return;
    auto* c2 = s->find(conn_id);
    if (!c2) return;
    auto it = c2->inflight.find(call_id);
    if (it == c2->inflight.end()) return;
    it->second.responder.fail("provider did not answer", CallStatus::timeout);
    c2->inflight.erase(it);
  });
  c->inflight.emplace(call_id, Inflight{r, origin, service, timer});
  send(*c, wire::make_call_service(call_id, service, request));
}

void BridgeServer::Impl::do_response(Conn& c, const WireFrame& f) {
  auto it = c.inflight.find(*f.id);
  if (it == c.inflight.end()) {
    violation(c, "protocol_violation: response to unknown call " + *f.id, f.id);
    return;
  }
  ex.cancel(it->second.timer);
  auto result = wire::call_result_from(f);
  if (result.ok()) {
    it->second.responder.respond(std::move(result.response));
  } else {
    it->second.responder.fail(result.detail, result.status);
  }
  c.inflight.erase(it);
}

void BridgeServer::Impl::do_call(Conn& c, const WireFrame& f) {
  const auto call_id = *f.id;
  if (c.outgoing.count(call_id)) {
    violation(c, "protocol_violation: call id " + call_id + " already in flight", call_id);
    return;
  }
  std::weak_ptr<Impl> self = weak_from_this();
  const auto service = *f.service;
  const std::string origin = c.id;
  t_call_origin = &origin;
  auto pending = c.graph->call_service_async(
      TopicName(service), f.msg.value_or(Value{}), [self, id = c.id, call_id, service](CallResult r) {
        auto s = self.lock();
        if (!s) return;
        s->ex.post([self, id, call_id, service, r] {
          if (auto s2 = self.lock()) s2->finish_call(id, call_id, service, r);
        });
      });
  t_call_origin = nullptr;
  auto timer = ex.schedule_after(config.call_timeout_ms * sim::kNsPerMs, [pending]() mutable { pending.expire(); });
  c.outgoing.emplace(call_id, std::make_pair(pending, timer));
}

void BridgeServer::Impl::finish_call(const std::string& conn_id, const std::string& id, const std::string& service,
                                     const CallResult& r) {
  auto* c = find(conn_id);
  if (!c) return;
  auto it = c->outgoing.find(id);
  if (it == c->outgoing.end()) return;
  ex.cancel(it->second.second);
  c->outgoing.erase(it);
  send(*c, wire::response_frame(id, service, r));
}

void BridgeServer::Impl::disconnect(const std::string& conn_id) {
  auto node = conns.extract(conn_id);
  if (node.empty()) return;
  auto& c = *node.mapped();
  ++stats.disconnects;
  for (auto& [topic, sub] : c.subs) stats.topics[topic].discarded += sub.pending.size();
  c.subs.clear();
  c.pubs.clear();
  c.services.clear();
  for (auto& [id, call] : c.inflight) {
    ex.cancel(call.timer);
    call.responder.fail("provider disconnected", CallStatus::provider_fault);
  }
  for (auto& [id, call] : c.outgoing) {
    ex.cancel(call.second);
    call.first.expire();
  }
  spdlog::debug("bridge: {} cleaned up", conn_id);
}

// ---- public face -----------------------------------------------------------------

std::shared_ptr<BridgeServer> BridgeServer::create(sim::Executor& ex, BridgeConfig config) {
  return std::shared_ptr<BridgeServer>(new BridgeServer(ex, std::move(config)));
}

BridgeServer::BridgeServer(sim::Executor& ex, BridgeConfig config) {
  if (config.routes.empty()) throw std::invalid_argument("bridge needs at least one route");
  impl_ = std::make_shared<Impl>(ex, std::move(config));
  auto clock = [&ex] { return ex.now_ns(); };
  for (const auto& r : impl_->config.routes) {
    if (!impl_->routes.emplace(r.name, r).second) throw std::invalid_argument("duplicate route " + r.name);
    if (r.isolated) {
      impl_->graphs.emplace(r.name, std::make_unique<MessageGraph>(clock));
    } else if (!impl_->shared_graph) {
      impl_->shared_graph = std::make_unique<MessageGraph>(clock);
    }
  }
  for (const auto& [route, token] : impl_->config.tokens) {
    if (!impl_->routes.count(route)) throw std::invalid_argument("token for unknown route " + route);
  }
}

BridgeServer::~BridgeServer() {
  // Release every graph handle before the graphs go away.
  std::vector<std::string> ids;
  for (const auto& [id, c] : impl_->conns) ids.push_back(id);
  for (const auto& id : ids) impl_->disconnect(id);
}

bool BridgeServer::accepts_path(std::string_view path) const {
  const auto& prefix = impl_->config.path_prefix;
  if (!path.starts_with(prefix)) return false;
  return impl_->routes.count(std::string(path.substr(prefix.size()))) > 0;
}

void BridgeServer::on_open(const std::string& path, std::shared_ptr<Channel> channel) {
  if (!accepts_path(path)) {
    ++impl_->stats.refused_path;
    channel->close();
    return;
  }
  impl_->open(path, std::move(channel));
}

MessageGraph& BridgeServer::graph(const std::string& route) { return impl_->graph_for(route); }

void BridgeServer::on_frame(const std::string& conn_id, const WireFrame& frame) {
  auto* c = impl_->find(conn_id);
  if (!c) throw std::invalid_argument("unknown connection " + conn_id);
  if (!c->session) throw std::logic_error("connection " + conn_id + " has not negotiated");
  impl_->dispatch(*c, frame);
}

void BridgeServer::on_disconnect(const std::string& conn_id) {
  auto* c = impl_->find(conn_id);
  if (!c) return;
  auto channel = c->channel;
  impl_->disconnect(conn_id);
  channel->close();
}

std::optional<ConnectionRecord> BridgeServer::connection(const std::string& conn_id) const {
  auto* c = impl_->find(conn_id);
  if (!c) return std::nullopt;
  ConnectionRecord r = c->counters;
  r.conn_id = c->id;
  r.path = c->path;
  r.route = c->route;
  r.authenticated = c->authenticated;
  r.session = c->session;
  for (const auto& [topic, sub] : c->subs) r.subscriptions.emplace(topic, sub.rec);
  for (const auto& [topic, pub] : c->pubs) r.advertisements.push_back(pub.spec());
  for (const auto& [name, svc] : c->services) r.provided_services.push_back(svc.first);
  for (const auto& [id, call] : c->inflight) r.inflight_calls.emplace(id, call.origin);
  return r;
}

std::vector<ConnectionRecord> BridgeServer::connections() const {
  std::vector<ConnectionRecord> out;
  for (const auto& [id, c] : impl_->conns) out.push_back(*connection(id));
  return out;
}

BridgeStats BridgeServer::stats() const { return impl_->stats; }
const BridgeConfig& BridgeServer::config() const { return impl_->config; }

void BridgeServer::on_inbound(std::function<void(const std::string&, const WireFrame&)> observer) {
  impl_->inbound_observer = std::move(observer);
}

}  // namespace rap::bridge
