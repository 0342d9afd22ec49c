#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "rap/sim/executor.hpp"
#include "rap/transport/channel.hpp"

namespace rap::ws {

struct TlsFiles {
  std::string cert_chain_pem;
  std::string private_key_pem;
};

struct WsServerOptions {
  std::string bind_address = "127.0.0.1";
  std::uint16_t port = 8443;  // 0 picks a free port
  std::optional<TlsFiles> tls;
};

/// Websocket listener on a single TCP port. The upgrade request's target is
/// offered to the handler's accepts_path() first; refused paths get an HTTP
/// 404 and never become websockets. Channel events and on_open() run on the
/// given executor; network I/O runs on an internal thread. The executor must
/// outlive the server. Events for accepted channels stop once it is destroyed.
class WsServer {
 public:
  WsServer(sim::Executor& ex, std::shared_ptr<transport::AcceptHandler> handler, WsServerOptions options);
  ~WsServer();

  WsServer(const WsServer&) = delete;
  WsServer& operator=(const WsServer&) = delete;

  /// Binds and starts accepting. Returns the bound port. Throws
  /// std::runtime_error if the port cannot be bound.
  std::uint16_t start();
  void stop();
  std::uint16_t port() const;

  struct Impl;

 private:
  std::shared_ptr<Impl> impl_;
};

struct WsDialerOptions {
  /// For wss:// targets. Without a CA file, certificates are not verified.
  std::optional<std::string> ca_file;
  double handshake_timeout_ms = 5000;
};

/// Outbound websocket client. Completion callbacks and channel events run on
/// the given executor, which must outlive the dialer. Nothing is delivered
/// after the dialer is destroyed.
class WsDialer final : public transport::Dialer {
 public:
  explicit WsDialer(sim::Executor& ex, WsDialerOptions options = {});
  ~WsDialer() override;

  void dial(const transport::DialTarget& target, transport::DialCallback done) override;

  struct Impl;

 private:
  std::shared_ptr<Impl> impl_;
};

/// TCP sockets in LISTEN state owned by this process (from /proc). Returns
/// nullopt where /proc is unavailable.
std::optional<std::size_t> count_listening_sockets();

}  // namespace rap::ws
