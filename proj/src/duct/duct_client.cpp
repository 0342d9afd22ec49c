#include "rap/duct/duct_client.hpp"

#include <spdlog/spdlog.h>

#include <atomic>
#include <deque>

#include "rap/wire/call_result.hpp"
#include "rap/wire/codec.hpp"

namespace rap::duct {

using transport::Channel;
using transport::MessageKind;
using wire::Op;
using wire::WireFrame;

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::stopped: return "stopped";
    case Phase::connecting: return "connecting";
    case Phase::syncing: return "syncing";
    case Phase::live: return "live";
    case Phase::backoff: return "backoff";
    case Phase::failed: return "failed";
  }
  return "?";
}

std::vector<WireFrame> registration_frames(const DuctConfig& config, const GraphSnapshot& local) {
  std::vector<WireFrame> out;
  for (const auto& r : config.local_to_remote) out.push_back(wire::make_advertise(r.topic, r.type_name, r.latched));
  for (const auto& r : config.remote_to_local) {
    out.push_back(wire::make_subscribe(r.topic, r.throttle_rate_ms, r.queue_length));
  }
  for (const auto& name : config.exposed_services) {
    std::string req, res;
    for (const auto& s : local.services) {
      if (s.name.str() == name) {
        req = s.request_type;
        res = s.response_type;
      }
    }
    out.push_back(wire::make_advertise_service(name, req, res));
  }
  return out;
}

namespace {

constexpr std::size_t kSessionLogCap = 4096;

struct Outgoing {
  std::uint64_t order = 0;
  WireFrame frame;
};

struct ImportedCall {
  Responder responder;
  sim::TimerId timer = 0;
};

}  // namespace

struct DuctClient::Impl : std::enable_shared_from_this<DuctClient::Impl> {
  Impl(sim::Executor& e, transport::Dialer& d, MessageGraph& g, DuctConfig c)
      : ex(e), dialer(d), local(g), config(std::move(c)), rng(config.seed) {}

  sim::Executor& ex;
  transport::Dialer& dialer;
  MessageGraph& local;
  DuctConfig config;
  std::mt19937_64 rng;

  std::atomic<Phase> phase{Phase::stopped};
  unsigned attempt = 0;
  std::uint64_t epoch = 0;
  std::shared_ptr<Channel> channel;
  wire::Encoding encoding = wire::Encoding::json;
  std::int64_t live_since = 0;
  std::optional<std::int64_t> down_since;
  sim::TimerId connect_timer = 0, backoff_timer = 0, keepalive_timer = 0;

  std::vector<SubscriptionHandle> subs;
  std::map<std::string, PublisherHandle> pubs;
  std::vector<ServiceHandle> imported;
  std::map<std::string, const TopicRule*> outbound_rules;

  std::map<std::string, std::deque<Outgoing>> queues;
  std::uint64_t next_order = 1;
  std::map<std::string, Value> latched_cache;
  std::map<std::string, ImportedCall> calls;
  std::uint64_t next_call = 1;

  DuctStats stats;
  std::optional<std::string> last_error;
  std::vector<double> backoff_history;
  std::vector<WireFrame> session_log;
  std::vector<std::function<void(Phase)>> observers;

  void set_phase(Phase p) {
    if (phase.load() == p) return;
    const auto now = ex.now_ns();
    if (p == Phase::live && down_since) {
      stats.down_ns += now - *down_since;
      down_since.reset();
    } else if (phase.load() == Phase::live) {
      down_since = now;
    }
    phase = p;
    spdlog::debug("duct: phase {}", to_string(p));
    for (auto& o : observers) o(p);
  }

  void start();
  void stop();
  void connect();
  void on_dialed(std::uint64_t ep, std::shared_ptr<Channel> ch, const std::string& err);
  void on_bytes(std::uint64_t ep, const std::vector<std::uint8_t>& bytes, MessageKind kind);
  void on_handshake(const std::vector<std::uint8_t>& bytes);
  void on_frame(const WireFrame& f);
  void on_closed(std::uint64_t ep, const std::string& reason);
  void fail_attempt(const std::string& reason);
  void terminal(const std::string& reason);
  void schedule_backoff();
  void sync();
  void keepalive(std::uint64_t ep);

  bool transmit(const WireFrame& f);
  void on_local(const std::string& topic, const Value& payload);
  void enqueue(const std::string& topic, WireFrame frame);
  void trim(const std::string& topic);
  void flush();
  void import_call(const std::string& service, const Value& request, Responder r);
  void drop_channel();
};

void DuctClient::Impl::start() {
  if (phase != Phase::stopped) return;
  std::weak_ptr<Impl> self = weak_from_this();
  if (subs.empty() && pubs.empty() && imported.empty()) {
    for (const auto& r : config.local_to_remote) {
      outbound_rules[r.topic] = &r;
      stats.topics[r.topic];
      subs.push_back(local.subscribe(TopicName(r.topic), QueuePolicy{0},
                                     [self, topic = r.topic](const MessageEnvelope& env) {
                                       auto s = self.lock();
                                       if (!s) return;
                                       s->ex.post([self, topic, payload = env.payload] {
                                         if (auto s2 = self.lock()) s2->on_local(topic, payload);
                                       });
                                     }));
    }
    for (const auto& r : config.remote_to_local) {
      stats.topics[r.topic];
      pubs.emplace(r.topic, local.advertise(TopicSpec{TopicName(r.topic), r.type_name, r.latched}));
    }
    for (const auto& name : config.imported_services) {
      imported.push_back(local.advertise_service(
          ServiceSpec{TopicName(name), "", ""}, [self, name](const Value& request, Responder r) {
            auto s = self.lock();
            if (!s || s->phase.load() != Phase::live) {
              r.fail("bridge connection is down", CallStatus::no_provider);
              return;
            }
            s->ex.post([self, name, request, r]() mutable {
              if (auto s2 = self.lock()) {
                s2->import_call(name, request, r);
              } else {
                r.fail("duct stopped", CallStatus::no_provider);
              }
            });
          }));
    }
  }
  connect();
}

void DuctClient::Impl::stop() {
  ex.cancel(connect_timer);
  ex.cancel(backoff_timer);
  ex.cancel(keepalive_timer);
  ++epoch;
  drop_channel();
  for (auto& [id, call] : calls) {
    ex.cancel(call.timer);
    call.responder.fail("duct stopped", CallStatus::no_provider);
  }
  calls.clear();
  set_phase(Phase::stopped);
}

void DuctClient::Impl::drop_channel() {
  if (!channel) return;
  auto ch = std::move(channel);
  channel.reset();
  ch->set_events({});
  ch->close();
}

void DuctClient::Impl::connect() {
  set_phase(Phase::connecting);
  const auto ep = ++epoch;
  ++stats.connect_attempts;
  auto target = transport::DialTarget::parse_url(config.server_url);
  target.path = config.path();
  std::weak_ptr<Impl> self = weak_from_this();
  connect_timer = ex.schedule_after(sim::ms_to_ns(config.connect_timeout_ms), [self, ep] {
    auto s = self.lock();
    if (s && s->epoch == ep && s->phase == Phase::connecting) s->fail_attempt("connect timeout");
  });
  dialer.dial(target, [self, ep](std::shared_ptr<Channel> ch, std::string err) {
    auto s = self.lock();
    if (!s) {
      if (ch) ch->close();
      return;
    }
    s->ex.post([self, ep, ch, err] {
      if (auto s2 = self.lock()) {
        s2->on_dialed(ep, ch, err);
      } else if (ch) {
        ch->close();
      }
    });
  });
}

void DuctClient::Impl::on_dialed(std::uint64_t ep, std::shared_ptr<Channel> ch, const std::string& err) {
  if (ep != epoch || phase != Phase::connecting) {
    if (ch) ch->close();
    return;
  }
  if (!ch) {
    fail_attempt(err.empty() ? "dial failed" : err);
    return;
  }
  channel = ch;
  std::weak_ptr<Impl> self = weak_from_this();
  ch->set_events({[self, ep](std::vector<std::uint8_t> bytes, MessageKind kind) {
                    if (auto s = self.lock()) s->on_bytes(ep, bytes, kind);
                  },
                  [self, ep] {
                    auto s = self.lock();
                    if (s && s->epoch == ep) s->flush();
                  },
                  [self, ep](const std::string& reason) {
                    if (auto s = self.lock()) s->on_closed(ep, reason);
                  }});
  session_log.clear();
  auto hello = wire::make_hello(config.encoding_pref,
                                config.token.empty() ? std::nullopt : std::optional<std::string>(config.token));
  encoding = wire::Encoding::json;  // the hello always travels as JSON
  transmit(hello);
}

void DuctClient::Impl::on_bytes(std::uint64_t ep, const std::vector<std::uint8_t>& bytes, MessageKind kind) {
  if (ep != epoch) return;
  stats.bytes_in += bytes.size();
  if (phase == Phase::connecting) {
    on_handshake(bytes);
    return;
  }
  WireFrame f;
  try {
    f = wire::decode(bytes, encoding);
  } catch (const wire::CodecError& e) {
    ++stats.protocol_errors;
    spdlog::warn("duct: undecodable frame from bridge: {}", e.what());
    return;
  }
  on_frame(f);
}

void DuctClient::Impl::on_handshake(const std::vector<std::uint8_t>& bytes) {
  WireFrame f;
  try {
    f = wire::decode(bytes, wire::Encoding::json);
  } catch (const wire::CodecError& e) {
    fail_attempt(std::string("bad handshake reply: ") + e.what());
    return;
  }
  if (f.op == Op::status) {
    const auto text = f.text.value_or("");
    if (text.starts_with("auth_failure") || text.starts_with("version_mismatch")) {
      terminal(text);
    } else {
      fail_attempt("bridge refused session: " + text);
    }
    return;
  }
  if (f.op != Op::hello || !f.encodings || f.encodings->empty()) {
    fail_attempt("expected hello reply, got " + std::string(wire::to_string(f.op)));
    return;
  }
  ex.cancel(connect_timer);
  encoding = f.encodings->front();
  sync();
}

void DuctClient::Impl::sync() {
  set_phase(Phase::syncing);
  for (const auto& frame : registration_frames(config, local.snapshot())) {
    if (!transmit(frame)) return;
  }
  for (const auto& r : config.local_to_remote) {
    if (!r.latched) continue;
    auto cached = latched_cache.find(r.topic);
    if (cached == latched_cache.end() || !queues[r.topic].empty()) continue;
    if (!transmit(wire::make_publish(r.topic, cached->second))) return;
    ++stats.topics[r.topic].resent_latched;
  }
  live_since = ex.now_ns();
  ++stats.lives;
  set_phase(Phase::live);
  flush();
  if (config.keepalive_ms > 0) keepalive(epoch);
}

void DuctClient::Impl::keepalive(std::uint64_t ep) {
  std::weak_ptr<Impl> self = weak_from_this();
  keepalive_timer = ex.schedule_after(sim::ms_to_ns(config.keepalive_ms), [self, ep] {
    auto s = self.lock();
    if (!s || s->epoch != ep || s->phase != Phase::live) return;
    s->transmit(wire::make_status("info", "keepalive"));
    s->keepalive(ep);
  });
}

void DuctClient::Impl::on_frame(const WireFrame& f) {
  switch (f.op) {
    case Op::publish: {
      auto it = pubs.find(f.topic.value_or(""));
      if (it == pubs.end() || !f.msg) {
        ++stats.protocol_errors;
        return;
      }
      ++stats.topics[it->first].received;
      it->second.publish(*f.msg);
      return;
    }
    case Op::call_service: {
      const auto id = f.id.value_or("");
      const auto service = f.service.value_or("");
      bool exposed = false;
      for (const auto& s : config.exposed_services) exposed |= s == service;
      if (!exposed) {
        transmit(wire::response_frame(id, service, CallResult{CallStatus::no_provider, {}, "not exposed"}));
        return;
      }
      std::weak_ptr<Impl> self = weak_from_this();
      const auto ep = epoch;
      local.call_service_async(TopicName(service), f.msg.value_or(Value{}),
                               [self, ep, id, service](CallResult r) {
                                 auto s = self.lock();
                                 if (!s) return;
                                 s->ex.post([self, ep, id, service, r] {
                                   auto s2 = self.lock();
                                   if (s2 && s2->epoch == ep && s2->phase == Phase::live) {
                                     s2->transmit(wire::response_frame(id, service, r));
                                   }
                                 });
                               });
      return;
    }
    case Op::service_response: {
      auto it = calls.find(f.id.value_or(""));
      if (it == calls.end()) return;
      ex.cancel(it->second.timer);
      auto r = wire::call_result_from(f);
      if (r.ok()) {
        it->second.responder.respond(std::move(r.response));
      } else {
        it->second.responder.fail(r.detail, r.status);
      }
      calls.erase(it);
      return;
    }
    case Op::status:
      if (f.level == "error") {
        ++stats.protocol_errors;
        spdlog::warn("duct: bridge reports: {}", f.text.value_or(""));
      }
      return;
    default:
      ++stats.protocol_errors;
      return;
  }
}

void DuctClient::Impl::on_closed(std::uint64_t ep, const std::string& reason) {
  if (ep != epoch) return;
  channel.reset();
  if (phase == Phase::connecting) {
    fail_attempt(reason);
    return;
  }
  if (phase != Phase::live && phase != Phase::syncing) return;
  ++stats.transport_losses;
  last_error = reason;
  spdlog::info("duct: connection lost ({})", reason);
  if (static_cast<double>(ex.now_ns() - live_since) >= config.reconnect.reset_after_ms * sim::kNsPerMs) attempt = 0;
  ex.cancel(keepalive_timer);
  for (auto& [id, call] : calls) {
    ex.cancel(call.timer);
    call.responder.fail("connection lost", CallStatus::provider_fault);
  }
  calls.clear();
  ++epoch;
  set_phase(Phase::backoff);
  for (auto& [topic, q] : queues) trim(topic);
  schedule_backoff();
}

void DuctClient::Impl::fail_attempt(const std::string& reason) {
  ex.cancel(connect_timer);
  ++epoch;
  drop_channel();
  ++stats.failed_attempts;
  last_error = reason;
  spdlog::debug("duct: attempt failed: {}", reason);
  ++attempt;
  set_phase(Phase::backoff);
  schedule_backoff();
}

void DuctClient::Impl::terminal(const std::string& reason) {
  ex.cancel(connect_timer);
  ++epoch;
  drop_channel();
  last_error = reason;
  spdlog::error("duct: giving up: {}", reason);
  set_phase(Phase::failed);
}

void DuctClient::Impl::schedule_backoff() {
  const double delay = config.reconnect.delay_ms(attempt, rng);
  backoff_history.push_back(delay);
  std::weak_ptr<Impl> self = weak_from_this();
  const auto ep = epoch;
  backoff_timer = ex.schedule_after(sim::ms_to_ns(delay), [self, ep] {
    auto s = self.lock();
    if (s && s->epoch == ep && s->phase == Phase::backoff) s->connect();
  });
}

bool DuctClient::Impl::transmit(const WireFrame& f) {
  if (!channel) return false;
  wire::EncodedFrame enc;
  try {
    enc = wire::encode(f, encoding);
  } catch (const wire::CodecError& e) {
    ++stats.protocol_errors;
    spdlog::warn("duct: cannot encode {} frame: {}", wire::to_string(f.op), e.what());
    return true;  // the frame is unsendable; do not hold the stream for it
  }
  const auto size = enc.bytes.size();
  if (!channel->send(std::move(enc.bytes), encoding == wire::Encoding::cbor ? MessageKind::binary : MessageKind::text)) {
    return false;
  }
  stats.bytes_out += size;
  if (session_log.size() < kSessionLogCap) session_log.push_back(f);
  return true;
}

void DuctClient::Impl::on_local(const std::string& topic, const Value& payload) {
  auto rule = outbound_rules.find(topic);
  if (rule == outbound_rules.end()) return;
  ++stats.topics[topic].produced;
  if (rule->second->latched) latched_cache[topic] = payload;
  enqueue(topic, wire::make_publish(topic, payload));
}

void DuctClient::Impl::enqueue(const std::string& topic, WireFrame frame) {
  auto& q = queues[topic];
  if (phase == Phase::live && q.empty() && channel && channel->buffered_amount() <= config.high_water_bytes) {
    if (transmit(frame)) {
      ++stats.topics[topic].sent;
      return;
    }
  }
  q.push_back(Outgoing{next_order++, std::move(frame)});
  trim(topic);
}

void DuctClient::Impl::trim(const std::string& topic) {
  auto& q = queues[topic];
  const bool live = phase == Phase::live;
  const std::size_t cap = live ? outbound_rules.at(topic)->queue_length : config.disconnect_buffer;
  if (live && cap == 0) return;  // unbounded
  auto& st = stats.topics[topic];
  while (q.size() > cap) {
    q.pop_front();
    ++(live ? st.dropped_queue : st.lost_disconnect);
  }
}

void DuctClient::Impl::flush() {
  while (phase == Phase::live && channel && channel->buffered_amount() <= config.high_water_bytes) {
    std::deque<Outgoing>* oldest = nullptr;
    std::string topic;
    for (auto& [t, q] : queues) {
      if (!q.empty() && (!oldest || q.front().order < oldest->front().order)) {
        oldest = &q;
        topic = t;
      }
    }
    if (!oldest) return;
    if (!transmit(oldest->front().frame)) return;
    oldest->pop_front();
    ++stats.topics[topic].sent;
  }
}

void DuctClient::Impl::import_call(const std::string& service, const Value& request, Responder r) {
  if (phase != Phase::live || !channel) {
    r.fail("bridge connection is down", CallStatus::no_provider);
    return;
  }
  const auto id = "d" + std::to_string(next_call++);
  std::weak_ptr<Impl> self = weak_from_this();
  auto timer = ex.schedule_after(sim::ms_to_ns(config.call_timeout_ms), [self, id] {
    auto s = self.lock();
    if (!s) return;
    auto it = s->calls.find(id);
    if (it == s->calls.end()) return;
    it->second.responder.fail("no response from bridge", CallStatus::timeout);
    s->calls.erase(it);
  });
  calls.emplace(id, ImportedCall{r, timer});
  transmit(wire::make_call_service(id, service, request));
}

// ---- public face -----------------------------------------------------------------

DuctClient::DuctClient(sim::Executor& ex, transport::Dialer& dialer, MessageGraph& local, DuctConfig config) {
  config.validate();
  impl_ = std::make_shared<Impl>(ex, dialer, local, std::move(config));
}

DuctClient::~DuctClient() {
  impl_->stop();
  impl_->subs.clear();
  impl_->pubs.clear();
  impl_->imported.clear();
}

void DuctClient::start() { impl_->start(); }
void DuctClient::stop() { impl_->stop(); }
Phase DuctClient::phase() const { return impl_->phase.load(); }
unsigned DuctClient::attempt() const { return impl_->attempt; }
DuctStats DuctClient::stats() const { return impl_->stats; }
std::optional<std::string> DuctClient::last_error() const { return impl_->last_error; }

std::map<std::string, std::size_t> DuctClient::buffered() const {
  std::map<std::string, std::size_t> out;
  for (const auto& [topic, q] : impl_->queues) out[topic] = q.size();
  return out;
}

const std::vector<double>& DuctClient::backoff_history() const { return impl_->backoff_history; }
const std::vector<WireFrame>& DuctClient::session_log() const { return impl_->session_log; }
void DuctClient::on_phase(std::function<void(Phase)> observer) { impl_->observers.push_back(std::move(observer)); }

}  // namespace rap::duct
