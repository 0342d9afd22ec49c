#include "rap/netsim/network.hpp"

#include <cmath>
#include <deque>
#include <map>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "rap/wire/codec.hpp"

namespace rap::netsim {

using transport::Channel;
using transport::ChannelEvents;
using transport::MessageKind;

namespace {

constexpr std::uint64_t kLinkTie = 0;
// Close notifications sort after every data frame of the same sender and instant.
constexpr std::uint64_t kCloseMinor = ~std::uint64_t{0};

std::int64_t ms_ns(double ms) { return static_cast<std::int64_t>(std::llround(ms * 1e6)); }

std::uint64_t mix_seed(std::uint64_t seed, const std::string& name) {
  std::uint64_t h = 1469598103934665603ull ^ seed;
  for (unsigned char c : name) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string format_ms(std::int64_t ns) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(3);
  s << static_cast<double>(ns) / 1e6;
  return s.str();
}

}  // namespace

std::string format_trace_line(const TraceRecord& r) {
  std::string arrive;
  switch (r.outcome) {
    case Outcome::delivered: arrive = format_ms(*r.t_arrive_ns); break;
    case Outcome::dropped: arrive = "DROPPED"; break;
    case Outcome::down: arrive = "DOWN"; break;
    case Outcome::in_flight: arrive = "INFLIGHT"; break;
  }
  return format_ms(r.t_send_ns) + " " + arrive + " " + std::to_string(r.size) + " " + (r.op.empty() ? "-" : r.op);
}

struct Connection;
class Endpoint;

struct Link {
  std::string name;
  LinkProfile profile;
  std::mt19937_64 rng;
  std::mt19937_64 outage_rng;
  bool up = true;
  std::vector<std::weak_ptr<Connection>> connections;
};

struct Direction {
  std::int64_t free_at = 0;
  std::int64_t last_arrival = 0;
  std::size_t buffered = 0;
  std::uint64_t seq = 0;
  std::deque<std::size_t> in_flight;  // trace indices
};

struct Connection {
  std::uint64_t id = 0;
  std::shared_ptr<Link> link;
  bool raw = false;
  bool alive = true;
  bool closing[2] = {false, false};
  std::uint64_t endpoint_id[2] = {0, 0};
  std::weak_ptr<Endpoint> ends[2];
  Direction dir[2];
};

struct Network::Impl : std::enable_shared_from_this<Network::Impl> {
  explicit Impl(sim::Executor& e, std::uint64_t s) : ex(e), seed(s) {}

  sim::Executor& ex;
  std::uint64_t seed;
  std::map<std::string, std::shared_ptr<Link>> hosts;
  std::vector<std::shared_ptr<Link>> raw_links;
  std::map<std::pair<std::string, std::uint16_t>, std::shared_ptr<transport::AcceptHandler>> listeners;
  std::vector<std::weak_ptr<Connection>> connections;
  std::vector<TraceRecord> trace;
  std::vector<std::size_t> delivered_log;
  Counters counters;
  Labeler labeler;
  std::vector<LinkListener> link_listeners;
  std::uint64_t next_connection = 1;
  std::uint64_t next_endpoint = 1;

  std::shared_ptr<Link> make_link(const std::string& name, const LinkProfile& p, std::uint64_t link_seed);
  void schedule_outages(const std::shared_ptr<Link>& link);
  void schedule_random(const std::shared_ptr<Link>& link, bool going_down);
  void set_link(const std::shared_ptr<Link>& link, bool up);

  std::pair<std::shared_ptr<Endpoint>, std::shared_ptr<Endpoint>> connect(const std::shared_ptr<Link>& link,
                                                                          bool raw);
  bool send(const std::shared_ptr<Connection>& c, int side, std::vector<std::uint8_t> bytes, MessageKind kind);
  void close(const std::shared_ptr<Connection>& c, int side);
  void lose(Connection& c, int dir_index);
  void lose_one(std::size_t idx);
  void break_connection(const std::shared_ptr<Connection>& c, const std::string& reason);
  void notify_closed(const std::shared_ptr<Connection>& c, int side, const std::string& reason);
};

class Endpoint final : public Channel {
 public:
  Endpoint(std::weak_ptr<Network::Impl> net, std::shared_ptr<Connection> conn, int side, std::string label)
      : net_(std::move(net)), conn_(std::move(conn)), side_(side), label_(std::move(label)) {}

  void set_events(ChannelEvents events) override { events_ = std::move(events); }

  bool send(std::vector<std::uint8_t> bytes, MessageKind kind) override {
    auto net = net_.lock();
    if (!open_ || !net) return false;
    return net->send(conn_, side_, std::move(bytes), kind);
  }

  std::size_t buffered_amount() const override { return open_ ? conn_->dir[side_].buffered : 0; }

  void close() override {
    if (!open_) return;
    open_ = false;
    if (auto net = net_.lock()) net->close(conn_, side_);
  }

  bool is_open() const override { return open_; }
  std::string describe() const override { return label_; }

  ChannelEvents events_;
  bool open_ = true;

 private:
  std::weak_ptr<Network::Impl> net_;
  std::shared_ptr<Connection> conn_;
  int side_;
  std::string label_;
};

std::shared_ptr<Link> Network::Impl::make_link(const std::string& name, const LinkProfile& p,
                                               std::uint64_t link_seed) {
  p.validate();
  auto link = std::make_shared<Link>();
  link->name = name;
  link->profile = p;
  link->rng.seed(link_seed);
  link->outage_rng.seed(p.random_outages ? p.random_outages->seed : link_seed ^ 0x9e3779b97f4a7c15ull);
  schedule_outages(link);
  return link;
}

void Network::Impl::schedule_outages(const std::shared_ptr<Link>& link) {
  std::weak_ptr<Impl> self = weak_from_this();
  std::weak_ptr<Link> weak_link = link;
  auto toggle = [self, weak_link](bool up) {
    return [self, weak_link, up] {
      auto net = self.lock();
      auto l = weak_link.lock();
      if (net && l) net->set_link(l, up);
    };
  };
  const auto origin = ex.now_ns();
  for (const auto& w : link->profile.disconnect_schedule) {
    auto t_down = origin + ms_ns(w.t_down_ms);
    ex.schedule_at(t_down, toggle(false), {kLinkTie, 0});
    ex.schedule_at(t_down + ms_ns(w.duration_ms), toggle(true), {kLinkTie, 0});
  }
  if (link->profile.random_outages) schedule_random(link, true);
}

void Network::Impl::schedule_random(const std::shared_ptr<Link>& link, bool going_down) {
  const auto& r = *link->profile.random_outages;
  std::exponential_distribution<double> dist(1.0 / (going_down ? r.mean_up_ms : r.mean_down_ms));
  auto delay = std::max<std::int64_t>(1, ms_ns(dist(link->outage_rng)));
  std::weak_ptr<Impl> self = weak_from_this();
  std::weak_ptr<Link> weak_link = link;
  ex.schedule_after(
      delay,
      [self, weak_link, going_down] {
        auto net = self.lock();
        auto l = weak_link.lock();
        if (!net || !l) return;
        net->set_link(l, !going_down);
        net->schedule_random(l, !going_down);
      },
      {kLinkTie, 0});
}

void Network::Impl::set_link(const std::shared_ptr<Link>& link, bool up) {
  if (link->up == up) return;
  link->up = up;
  if (!up) {
    auto conns = link->connections;
    for (auto& w : conns) {
      auto c = w.lock();
      if (!c) continue;
      if (c->raw) {
        lose(*c, 0);
        lose(*c, 1);
      } else {
        break_connection(c, "link down");
      }
    }
  }
  std::erase_if(link->connections, [](const std::weak_ptr<Connection>& w) { return w.expired(); });
  for (auto& l : link_listeners) l(link->name, up);
}

std::pair<std::shared_ptr<Endpoint>, std::shared_ptr<Endpoint>> Network::Impl::connect(
    const std::shared_ptr<Link>& link, bool raw) {
  auto c = std::make_shared<Connection>();
  c->id = next_connection++;
  c->link = link;
  c->raw = raw;
  c->endpoint_id[0] = next_endpoint++;
  c->endpoint_id[1] = next_endpoint++;
  const auto base = "sim:" + link->name + "#" + std::to_string(c->id);
  auto a = std::make_shared<Endpoint>(weak_from_this(), c, 0, base + "/client");
  auto b = std::make_shared<Endpoint>(weak_from_this(), c, 1, base + "/server");
  c->ends[0] = a;
  c->ends[1] = b;
  link->connections.push_back(c);
  std::erase_if(connections, [](const std::weak_ptr<Connection>& w) { return w.expired(); });
  connections.push_back(c);
  return {a, b};
}

bool Network::Impl::send(const std::shared_ptr<Connection>& c, int side, std::vector<std::uint8_t> bytes,
                         MessageKind kind) {
  auto& d = c->dir[side];
  const auto now = ex.now_ns();
  const auto idx = trace.size();
  TraceRecord rec;
  rec.connection = c->id;
  rec.sender = c->endpoint_id[side];
  rec.seq = ++d.seq;
  rec.t_send_ns = now;
  rec.size = bytes.size();
  rec.op = labeler ? labeler(bytes, kind) : std::string();
  trace.push_back(std::move(rec));
  ++counters.sent;
  counters.bytes_sent += bytes.size();

  Link& link = *c->link;
  if (!c->alive || c->closing[1 - side] || !link.up) {
    trace[idx].outcome = Outcome::down;
    ++counters.lost_down;
    return true;
  }
  const auto& p = link.profile;
  if (p.drop_prob > 0 && std::uniform_real_distribution<double>(0.0, 1.0)(link.rng) < p.drop_prob) {
    trace[idx].outcome = Outcome::dropped;
    ++counters.dropped;
    if (!c->raw) break_connection(c, "connection reset");
    return true;
  }
  std::int64_t jitter = 0;
  if (p.jitter_ms > 0) jitter = ms_ns(std::uniform_real_distribution<double>(-p.jitter_ms, p.jitter_ms)(link.rng));

  std::int64_t tx_done = now;
  std::weak_ptr<Impl> self = weak_from_this();
  if (p.bandwidth_bytes_per_s) {
    const auto start = std::max(now, d.free_at);
    tx_done = start + static_cast<std::int64_t>(
                          std::llround(static_cast<double>(bytes.size()) * 1e9 / *p.bandwidth_bytes_per_s));
    d.free_at = tx_done;
    d.buffered += bytes.size();
    ex.schedule_at(
        tx_done,
        [self, c, side, size = bytes.size()] {
          auto net = self.lock();
          if (!net || !c->alive) return;
          auto& dd = c->dir[side];
          dd.buffered -= std::min(dd.buffered, size);
          if (dd.buffered != 0) return;
          auto ep = c->ends[side].lock();
          if (ep && ep->open_ && ep->events_.on_drain) ep->events_.on_drain();
        },
        {c->endpoint_id[side], d.seq});
  }
  const auto arrival = std::max({tx_done + ms_ns(p.one_way_latency_ms) + jitter, d.last_arrival, tx_done});
  d.last_arrival = arrival;
  d.in_flight.push_back(idx);
  ++counters.in_flight;
  ex.schedule_at(
      arrival,
      [self, c, side, idx, kind, payload = std::move(bytes)]() mutable {
        auto net = self.lock();
        if (!net) return;
        auto& r = net->trace[idx];
        if (r.outcome != Outcome::in_flight) return;
        r.outcome = Outcome::delivered;
        r.t_arrive_ns = net->ex.now_ns();
        --net->counters.in_flight;
        ++net->counters.delivered;
        net->delivered_log.push_back(idx);
        auto& q = c->dir[side].in_flight;
        if (!q.empty() && q.front() == idx) {
          q.pop_front();
        } else {
          std::erase(q, idx);
        }
        auto peer = c->ends[1 - side].lock();
        if (peer && peer->open_ && peer->events_.on_message) peer->events_.on_message(std::move(payload), kind);
      },
      {c->endpoint_id[side], d.seq});
  return true;
}

void Network::Impl::close(const std::shared_ptr<Connection>& c, int side) {
  if (!c->alive || c->closing[side]) return;
  c->closing[side] = true;
  lose(*c, 1 - side);
  if (c->closing[1 - side]) return;
  // Whatever the closer already sent still drains; the peer learns of the
  // close right behind it.
  const auto t = std::max(ex.now_ns() + ms_ns(c->link->profile.one_way_latency_ms), c->dir[side].last_arrival);
  std::weak_ptr<Impl> self = weak_from_this();
  ex.schedule_at(
      t,
      [self, c, side] {
        auto net = self.lock();
        if (!net || !c->alive) return;
        c->alive = false;
        net->lose(*c, 0);
        net->lose(*c, 1);
        net->notify_closed(c, 1 - side, "closed by peer");
      },
      {c->endpoint_id[side], kCloseMinor});
}

void Network::Impl::lose_one(std::size_t idx) {
  auto& r = trace[idx];
  if (r.outcome != Outcome::in_flight) return;
  r.outcome = Outcome::down;
  --counters.in_flight;
  ++counters.lost_down;
}

void Network::Impl::lose(Connection& c, int dir_index) {
  for (auto idx : c.dir[dir_index].in_flight) lose_one(idx);
  c.dir[dir_index].in_flight.clear();
}

void Network::Impl::break_connection(const std::shared_ptr<Connection>& c, const std::string& reason) {
  if (!c->alive) return;
  c->alive = false;
  for (int s = 0; s < 2; ++s) {
    lose(*c, s);
    c->dir[s].buffered = 0;
  }
  for (int s = 0; s < 2; ++s) {
    if (!c->closing[s]) notify_closed(c, s, reason);
  }
}

void Network::Impl::notify_closed(const std::shared_ptr<Connection>& c, int side, const std::string& reason) {
  auto ep = c->ends[side].lock();
  if (!ep || !ep->open_) return;
  ep->open_ = false;
  ex.post([ep, reason] {
    if (ep->events_.on_closed) ep->events_.on_closed(reason);
  });
}

// ---- dialer ----------------------------------------------------------------------

namespace {

class SimDialer final : public transport::Dialer {
 public:
  SimDialer(std::weak_ptr<Network::Impl> net, std::shared_ptr<Link> link) : net_(std::move(net)), link_(std::move(link)) {}

  void dial(const transport::DialTarget& target, transport::DialCallback done) override;

 private:
  std::weak_ptr<Network::Impl> net_;
  std::shared_ptr<Link> link_;
};

}  // namespace

void SimDialer::dial(const transport::DialTarget& target, transport::DialCallback done) {
  auto net = net_.lock();
  if (!net) {
    done(nullptr, "network gone");
    return;
  }
  // Handshake costs one round trip; the outcome is decided when it completes.
  const auto rtt = 2 * ms_ns(link_->profile.one_way_latency_ms);
  net->ex.schedule_after(rtt, [weak = net_, link = link_, target, done = std::move(done)] {
    auto n = weak.lock();
    if (!n) return;
    if (!link->up) {
      done(nullptr, "network unreachable");
      return;
    }
    auto it = n->listeners.find({target.host, target.port});
    if (it == n->listeners.end()) {
      done(nullptr, "connection refused");
      return;
    }
    auto handler = it->second;
    if (!handler->accepts_path(target.path)) {
      done(nullptr, "HTTP 404 for " + target.path);
      return;
    }
    auto [client, server] = n->connect(link, false);
    handler->on_open(target.path, server);
    done(client, "");
  });
}

// ---- public face -----------------------------------------------------------------

Network::Network(sim::Executor& ex, std::uint64_t seed) : impl_(std::make_shared<Impl>(ex, seed)) {
  impl_->labeler = [](std::span<const std::uint8_t> bytes, MessageKind kind) {
    return wire::peek_op(bytes, kind == MessageKind::binary ? wire::Encoding::cbor : wire::Encoding::json);
  };
}

Network::~Network() = default;

void Network::add_host(const std::string& name, const LinkProfile& link) {
  if (impl_->hosts.count(name)) throw std::invalid_argument("duplicate host " + name);
  impl_->hosts.emplace(name, impl_->make_link(name, link, mix_seed(impl_->seed, name)));
}

void Network::listen(const std::string& host, std::uint16_t port,
                     std::shared_ptr<transport::AcceptHandler> handler) {
  if (!impl_->hosts.count(host)) throw std::invalid_argument("unknown host " + host);
  if (!impl_->listeners.emplace(std::make_pair(host, port), std::move(handler)).second) {
    throw std::invalid_argument("address in use: " + host + ":" + std::to_string(port));
  }
}

void Network::unlisten(const std::string& host, std::uint16_t port) { impl_->listeners.erase({host, port}); }

std::unique_ptr<transport::Dialer> Network::dialer(const std::string& host) {
  auto it = impl_->hosts.find(host);
  if (it == impl_->hosts.end()) throw std::invalid_argument("unknown host " + host);
  return std::make_unique<SimDialer>(impl_, it->second);
}

std::pair<std::shared_ptr<Channel>, std::shared_ptr<Channel>> Network::attach(const LinkProfile& link,
                                                                                std::uint64_t seed) {
  auto l = impl_->make_link("link" + std::to_string(impl_->raw_links.size() + 1), link, seed);
  impl_->raw_links.push_back(l);
  auto [a, b] = impl_->connect(l, true);
  return {a, b};
}

std::vector<TraceRecord> Network::step(double duration_ms) {
  auto* v = dynamic_cast<sim::VirtualExecutor*>(&impl_->ex);
  if (!v) throw std::logic_error("step() needs a virtual clock");
  const auto first = impl_->delivered_log.size();
  v->step(ms_ns(duration_ms));
  std::vector<TraceRecord> out;
  for (auto i = first; i < impl_->delivered_log.size(); ++i) out.push_back(impl_->trace[impl_->delivered_log[i]]);
  return out;
}

bool Network::link_up(const std::string& host) const {
  auto it = impl_->hosts.find(host);
  if (it == impl_->hosts.end()) throw std::invalid_argument("unknown host " + host);
  return it->second->up;
}

std::size_t Network::listening_socket_count() const { return impl_->listeners.size(); }

std::vector<std::pair<std::string, std::uint16_t>> Network::listening_sockets() const {
  std::vector<std::pair<std::string, std::uint16_t>> out;
  for (const auto& [key, handler] : impl_->listeners) out.push_back(key);
  return out;
}

std::size_t Network::open_connection_count() const {
  std::size_t n = 0;
  for (const auto& w : impl_->connections) {
    auto c = w.lock();
    if (c && c->alive && !c->raw) ++n;
  }
  return n;
}

Counters Network::counters() const { return impl_->counters; }
const std::vector<TraceRecord>& Network::trace() const { return impl_->trace; }

void Network::export_trace(std::ostream& out) const {
  for (const auto& r : impl_->trace) out << format_trace_line(r) << '\n';
}

void Network::set_labeler(Labeler labeler) { impl_->labeler = std::move(labeler); }
void Network::on_link_change(LinkListener listener) { impl_->link_listeners.push_back(std::move(listener)); }
sim::Executor& Network::executor() const { return impl_->ex; }

}  // namespace rap::netsim
