#include "rap/ws/ws_transport.hpp"

#include <boost/asio.hpp>
#include <boost/asio/ssl.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/ssl.hpp>
#include <boost/beast/websocket.hpp>
#include <boost/beast/websocket/ssl.hpp>
#include <spdlog/spdlog.h>

#include <atomic>
#include <deque>
#include <filesystem>
#include <future>
#include <fstream>
#include <functional>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace rap::ws {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace ssl = net::ssl;
using tcp = net::ip::tcp;
using transport::ChannelEvents;
using transport::MessageKind;

namespace {

constexpr std::size_t kMaxMessage = 64 * 1024 * 1024;
constexpr auto kHandshakeTimeout = std::chrono::seconds(10);

// One I/O thread for every server and dialer in the process. It is never
// torn down, so sockets held by long-lived channels always have a live
// io_context behind them.
net::io_context& io() {
  struct Holder {
    net::io_context ioc;
    net::executor_work_guard<net::io_context::executor_type> guard{ioc.get_executor()};
    std::thread thread{[this] { ioc.run(); }};
  };
  static auto* holder = new Holder;
  return holder->ioc;
}

std::string describe_error(const beast::error_code& ec) {
  if (ec == websocket::error::closed) return "closed by peer";
  if (ec == net::error::connection_refused) return "connection refused";
  if (ec == net::error::eof || ec == http::error::end_of_stream) return "connection reset";
  return ec.message();
}

// Route from the I/O thread to the owner's executor. The owning server or
// dialer closes it on destruction, after which late completions are dropped.
class Gate {
 public:
  explicit Gate(sim::Executor& ex) : ex_(&ex) {}
  void post(std::function<void()> fn) {
    std::lock_guard lk(mu_);
    if (ex_) ex_->post(std::move(fn));
  }
  void close() {
    std::lock_guard lk(mu_);
    ex_ = nullptr;
  }

 private:
  std::mutex mu_;
  sim::Executor* ex_;
};

template <class Ws>
class WsChannel final : public transport::Channel, public std::enable_shared_from_this<WsChannel<Ws>> {
 public:
  template <class... Args>
  WsChannel(std::shared_ptr<Gate> gate, std::string desc, Args&&... args)
      : ws_(std::forward<Args>(args)...), gate_(std::move(gate)), desc_(std::move(desc)) {
    ws_.read_message_max(kMaxMessage);
  }

  Ws& stream() { return ws_; }

  void set_description(std::string d) { desc_ = std::move(d); }

  // Called on the I/O thread once the websocket handshake is done.
  void run() {
    beast::get_lowest_layer(ws_).expires_never();
    open_ = true;
    read();
  }

  void set_events(ChannelEvents events) override {
    std::lock_guard lk(mu_);
    events_ = std::move(events);
  }

  bool send(std::vector<std::uint8_t> bytes, MessageKind kind) override {
    if (!open_) return false;
    buffered_ += bytes.size();
    net::post(ws_.get_executor(), [self = this->shared_from_this(), b = std::move(bytes), kind]() mutable {
      if (!self->open_) {
        self->buffered_ -= b.size();
        return;
      }
      self->outq_.emplace_back(std::move(b), kind);
      if (self->outq_.size() == 1) self->write_next();
    });
    return true;
  }

  std::size_t buffered_amount() const override { return buffered_; }

  void close() override {
    closed_locally_ = true;
    if (!open_.exchange(false)) return;
    net::post(ws_.get_executor(), [self = this->shared_from_this()] {
      self->closing_ = true;
      if (self->outq_.empty()) self->do_close();
    });
  }

  bool is_open() const override { return open_; }
  std::string describe() const override { return desc_; }

 private:
  void read() {
    ws_.async_read(rbuf_, [self = this->shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->fail(ec);
        return;
      }
      auto data = self->rbuf_.data();
      std::vector<std::uint8_t> bytes(net::buffers_begin(data), net::buffers_end(data));
      self->rbuf_.consume(self->rbuf_.size());
      const auto kind = self->ws_.got_text() ? MessageKind::text : MessageKind::binary;
      self->gate_->post([self, bytes = std::move(bytes), kind]() mutable {
        std::function<void(std::vector<std::uint8_t>, MessageKind)> cb;
        {
          std::lock_guard lk(self->mu_);
          cb = self->events_.on_message;
        }
        if (cb && !self->closed_locally_) cb(std::move(bytes), kind);
      });
      self->read();
    });
  }

  void write_next() {
    auto& [bytes, kind] = outq_.front();
    ws_.binary(kind == MessageKind::binary);
    ws_.async_write(net::buffer(bytes), [self = this->shared_from_this()](beast::error_code ec, std::size_t) {
      if (self->outq_.empty()) return;  // cleared by a failure
      self->buffered_ -= self->outq_.front().first.size();
      self->outq_.pop_front();
      if (ec) {
        self->fail(ec);
        return;
      }
      if (!self->outq_.empty()) {
        self->write_next();
        return;
      }
      if (self->closing_) {
        self->do_close();
        return;
      }
      self->gate_->post([self] {
        std::function<void()> cb;
        {
          std::lock_guard lk(self->mu_);
          cb = self->events_.on_drain;
        }
        if (cb && self->open_) cb();
      });
    });
  }

  void do_close() {
    beast::get_lowest_layer(ws_).expires_after(std::chrono::seconds(2));
    ws_.async_close(websocket::close_code::normal, [self = this->shared_from_this()](beast::error_code) {
      beast::error_code ignored;
      beast::get_lowest_layer(self->ws_).socket().close(ignored);
    });
  }

  void fail(const beast::error_code& ec) {
    open_ = false;
    outq_.clear();
    buffered_ = 0;
    if (closed_locally_ || reported_) return;
    reported_ = true;
    const auto reason = describe_error(ec);
    spdlog::debug("ws: {} closed: {}", desc_, reason);
    gate_->post([self = this->shared_from_this(), reason] {
      std::function<void(const std::string&)> cb;
      {
        std::lock_guard lk(self->mu_);
        cb = self->events_.on_closed;
      }
      if (cb && !self->closed_locally_) cb(reason);
    });
  }

  Ws ws_;
  std::shared_ptr<Gate> gate_;
  std::string desc_;
  beast::flat_buffer rbuf_;
  std::deque<std::pair<std::vector<std::uint8_t>, MessageKind>> outq_;  // I/O thread only
  bool closing_ = false;                                                // I/O thread only
  bool reported_ = false;                                               // I/O thread only
  std::atomic<std::size_t> buffered_{0};
  std::atomic<bool> open_{false};
  std::atomic<bool> closed_locally_{false};
  mutable std::mutex mu_;
  ChannelEvents events_;
};

using PlainStream = beast::tcp_stream;
using TlsStream = beast::ssl_stream<beast::tcp_stream>;

}  // namespace

// ---- server ------------------------------------------------------------------------

struct WsServer::Impl : std::enable_shared_from_this<WsServer::Impl> {
  Impl(sim::Executor& e, std::shared_ptr<transport::AcceptHandler> h, WsServerOptions o)
      : gate(std::make_shared<Gate>(e)), handler(std::move(h)), options(std::move(o)), acceptor(io()) {
    if (options.tls) {
      tls = std::make_unique<ssl::context>(ssl::context::tls_server);
      tls->use_certificate_chain_file(options.tls->cert_chain_pem);
      tls->use_private_key_file(options.tls->private_key_pem, ssl::context::pem);
    }
  }

  std::shared_ptr<Gate> gate;
  std::shared_ptr<transport::AcceptHandler> handler;
  WsServerOptions options;
  std::unique_ptr<ssl::context> tls;
  tcp::acceptor acceptor;
  std::atomic<std::uint16_t> bound_port{0};
  std::atomic<bool> running{false};
  std::atomic<std::uint64_t> next_id{1};

  void accept() {
    acceptor.async_accept(net::make_strand(io()), [self = shared_from_this()](beast::error_code ec, tcp::socket sock) {
      if (!self->running) return;
      if (!ec) self->on_socket(std::move(sock));
      self->accept();
    });
  }

  void on_socket(tcp::socket sock) {
    std::string peer;
    beast::error_code ec;
    auto ep = sock.remote_endpoint(ec);
    if (!ec) peer = ep.address().to_string() + ":" + std::to_string(ep.port());
    if (tls) {
      auto stream = std::make_shared<TlsStream>(std::move(sock), *tls);
      beast::get_lowest_layer(*stream).expires_after(kHandshakeTimeout);
      stream->async_handshake(ssl::stream_base::server, [self = shared_from_this(), stream, peer](beast::error_code ec2) {
        if (ec2) {
          spdlog::debug("ws: tls handshake from {} failed: {}", peer, ec2.message());
          return;
        }
        self->read_request(stream, peer);
      });
    } else {
      auto stream = std::make_shared<PlainStream>(std::move(sock));
      beast::get_lowest_layer(*stream).expires_after(kHandshakeTimeout);
      read_request(stream, peer);
    }
  }

  template <class Stream>
  void read_request(std::shared_ptr<Stream> stream, std::string peer) {
    struct Pending {
      beast::flat_buffer buf;
      http::request<http::string_body> req;
    };
    auto p = std::make_shared<Pending>();
    http::async_read(*stream, p->buf, p->req, [self = shared_from_this(), stream, p, peer](beast::error_code ec, std::size_t) {
      if (ec) return;
      const std::string path(p->req.target());
      if (!websocket::is_upgrade(p->req) || !self->handler->accepts_path(path)) {
        spdlog::info("ws: refusing {} from {}", path, peer);
        auto res = std::make_shared<http::response<http::string_body>>(http::status::not_found, p->req.version());
        res->set(http::field::content_type, "text/plain");
        res->body() = "no route for " + path + "\n";
        res->keep_alive(false);
        res->prepare_payload();
        http::async_write(*stream, *res, [stream, res](beast::error_code, std::size_t) {
          beast::error_code ignored;
          beast::get_lowest_layer(*stream).socket().shutdown(tcp::socket::shutdown_both, ignored);
        });
        return;
      }
      using Ws = websocket::stream<Stream>;
      const auto id = self->next_id++;
      auto ch = std::make_shared<WsChannel<Ws>>(self->gate, "ws#" + std::to_string(id) + " " + peer + " " + path,
                                                std::move(*stream));
      ch->stream().set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
      ch->stream().async_accept(p->req, [self, ch, path](beast::error_code ec2) {
        if (ec2) return;
        auto handler = self->handler;
        self->gate->post([handler, ch, path] { handler->on_open(path, ch); });
        ch->run();
      });
    });
  }
};

WsServer::WsServer(sim::Executor& ex, std::shared_ptr<transport::AcceptHandler> handler, WsServerOptions options)
    : impl_(std::make_shared<Impl>(ex, std::move(handler), std::move(options))) {}

WsServer::~WsServer() {
  stop();
  impl_->gate->close();
}

std::uint16_t WsServer::start() {
  auto& s = *impl_;
  if (s.running) return s.bound_port;
  tcp::endpoint ep(net::ip::make_address(s.options.bind_address), s.options.port);
  beast::error_code ec;
  s.acceptor.open(ep.protocol(), ec);
  if (!ec) s.acceptor.set_option(net::socket_base::reuse_address(true), ec);
  if (!ec) s.acceptor.bind(ep, ec);
  if (!ec) s.acceptor.listen(net::socket_base::max_listen_connections, ec);
  if (ec) {
    beast::error_code ignored;
    s.acceptor.close(ignored);
    throw std::runtime_error("cannot listen on " + s.options.bind_address + ":" + std::to_string(s.options.port) + ": " +
                             ec.message());
  }
  s.bound_port = s.acceptor.local_endpoint().port();
  s.running = true;
  net::post(s.acceptor.get_executor(), [self = impl_] { self->accept(); });
  return s.bound_port;
}

void WsServer::stop() {
  if (!impl_->running.exchange(false)) return;
  std::promise<void> done;
  net::post(impl_->acceptor.get_executor(), [self = impl_, &done] {
    beast::error_code ignored;
    self->acceptor.close(ignored);
    done.set_value();
  });
  done.get_future().wait();
}

std::uint16_t WsServer::port() const { return impl_->bound_port; }

// ---- dialer ------------------------------------------------------------------------

struct WsDialer::Impl {
  std::shared_ptr<Gate> gate;
  WsDialerOptions options;
  ssl::context tls{ssl::context::tls_client};

  Impl(sim::Executor& e, WsDialerOptions o) : gate(std::make_shared<Gate>(e)), options(std::move(o)) {
    if (options.ca_file) {
      tls.load_verify_file(*options.ca_file);
      tls.set_verify_mode(ssl::verify_peer);
    } else {
      tls.set_verify_mode(ssl::verify_none);
    }
  }
};

namespace {

template <class Ws>
struct DialOp : std::enable_shared_from_this<DialOp<Ws>> {
  std::shared_ptr<Gate> gate;
  transport::DialTarget target;
  transport::DialCallback done;
  std::shared_ptr<WsChannel<Ws>> ch;
  tcp::resolver resolver{io()};
  websocket::response_type res;
  std::chrono::milliseconds timeout;
  ssl::context* tls = nullptr;
  bool verify = false;

  DialOp(std::shared_ptr<Gate> g, transport::DialTarget t, transport::DialCallback d, std::shared_ptr<WsChannel<Ws>> c,
         std::chrono::milliseconds to)
      : gate(std::move(g)), target(std::move(t)), done(std::move(d)), ch(std::move(c)), timeout(to) {}

  void finish(std::shared_ptr<transport::Channel> c, std::string err) {
    gate->post([done = std::move(done), c = std::move(c), err = std::move(err)] { done(c, err); });
  }

  void start() {
    resolver.async_resolve(target.host, std::to_string(target.port),
                           [self = this->shared_from_this()](beast::error_code ec, tcp::resolver::results_type r) {
                             if (ec) return self->finish(nullptr, "network unreachable: " + ec.message());
                             self->connect(r);
                           });
  }

  void connect(const tcp::resolver::results_type& r) {
    auto& lowest = beast::get_lowest_layer(ch->stream());
    lowest.expires_after(timeout);
    lowest.async_connect(r, [self = this->shared_from_this()](beast::error_code ec, const tcp::endpoint&) {
      if (ec) return self->finish(nullptr, describe_error(ec));
      if constexpr (std::is_same_v<Ws, websocket::stream<TlsStream>>) {
        auto& tls_stream = self->ch->stream().next_layer();
        if (!SSL_set_tlsext_host_name(tls_stream.native_handle(), self->target.host.c_str())) {
          return self->finish(nullptr, "tls: cannot set server name");
        }
        if (self->verify) tls_stream.set_verify_callback(ssl::host_name_verification(self->target.host));
        tls_stream.async_handshake(ssl::stream_base::client, [self](beast::error_code ec2) {
          if (ec2) return self->finish(nullptr, "tls: " + ec2.message());
          self->upgrade();
        });
      } else {
        self->upgrade();
      }
    });
  }

  void upgrade() {
    auto& ws = ch->stream();
    ws.set_option(websocket::stream_base::timeout::suggested(beast::role_type::client));
    const auto host = target.host + ":" + std::to_string(target.port);
    ws.async_handshake(res, host, target.path, [self = this->shared_from_this()](beast::error_code ec) {
      if (ec == websocket::error::upgrade_declined) {
        return self->finish(nullptr, "HTTP " + std::to_string(self->res.result_int()) + " for " + self->target.path);
      }
      if (ec) return self->finish(nullptr, describe_error(ec));
      self->ch->set_description(self->target.url());
      self->ch->run();
      self->finish(self->ch, "");
    });
  }
};

}  // namespace

WsDialer::WsDialer(sim::Executor& ex, WsDialerOptions options)
    : impl_(std::make_shared<Impl>(ex, std::move(options))) {}

WsDialer::~WsDialer() { impl_->gate->close(); }

void WsDialer::dial(const transport::DialTarget& target, transport::DialCallback done) {
  const auto timeout = std::chrono::milliseconds(static_cast<std::int64_t>(impl_->options.handshake_timeout_ms));
  if (target.tls) {
    using Ws = websocket::stream<TlsStream>;
    auto ch = std::make_shared<WsChannel<Ws>>(impl_->gate, target.url(), net::make_strand(io()), impl_->tls);
    auto op = std::make_shared<DialOp<Ws>>(impl_->gate, target, std::move(done), ch, timeout);
    op->verify = impl_->options.ca_file.has_value();
    net::post(io(), [op] { op->start(); });
  } else {
    using Ws = websocket::stream<PlainStream>;
    auto ch = std::make_shared<WsChannel<Ws>>(impl_->gate, target.url(), net::make_strand(io()));
    auto op = std::make_shared<DialOp<Ws>>(impl_->gate, target, std::move(done), ch, timeout);
    net::post(io(), [op] { op->start(); });
  }
}

// ---- introspection -----------------------------------------------------------------

std::optional<std::size_t> count_listening_sockets() {
  namespace fs = std::filesystem;
  std::set<std::string> inodes;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator("/proc/self/fd", ec)) {
    std::error_code ec2;
    auto target = fs::read_symlink(entry.path(), ec2).string();
    if (!ec2 && target.rfind("socket:[", 0) == 0) inodes.insert(target.substr(8, target.size() - 9));
  }
  if (ec) return std::nullopt;
  std::size_t count = 0;
  bool any_table = false;
  for (const char* table : {"/proc/net/tcp", "/proc/net/tcp6"}) {
    std::ifstream in(table);
    if (!in) continue;
    any_table = true;
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      std::istringstream ls(line);
      std::string sl, local, remote, state, queues, timer, retr, uid, timeout, inode;
      ls >> sl >> local >> remote >> state >> queues >> timer >> retr >> uid >> timeout >> inode;
      if (state == "0A" && inodes.count(inode)) ++count;
    }
  }
  if (!any_table) return std::nullopt;
  return count;
}

}  // namespace rap::ws
