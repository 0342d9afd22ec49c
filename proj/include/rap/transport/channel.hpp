#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace rap::transport {

/// Websocket message type. JSON frames travel as text, CBOR as binary.
enum class MessageKind { text, binary };

struct ChannelEvents {
  std::function<void(std::vector<std::uint8_t> bytes, MessageKind kind)> on_message;
  /// Everything queued locally has left the sender.
  std::function<void()> on_drain;
  /// Fired once when the peer or the network ends the channel. Not fired for
  /// a local close().
  std::function<void(const std::string& reason)> on_closed;
};

/// One established, message-oriented, bidirectional connection.
class Channel {
 public:
  virtual ~Channel() = default;

  virtual void set_events(ChannelEvents events) = 0;
  /// Queues one message. Returns false if the channel is already closed.
  virtual bool send(std::vector<std::uint8_t> bytes, MessageKind kind) = 0;
  /// Bytes accepted by send() that have not yet left this endpoint.
  virtual std::size_t buffered_amount() const = 0;
  virtual void close() = 0;
  virtual bool is_open() const = 0;
  virtual std::string describe() const = 0;
};

/// ws://host:port/path or wss://host:port/path
struct DialTarget {
  std::string host;
  std::uint16_t port = 8443;
  std::string path = "/";
  bool tls = false;

  /// Throws std::invalid_argument on anything else.
  static DialTarget parse_url(std::string_view url);
  std::string url() const;
};

using DialCallback = std::function<void(std::shared_ptr<Channel> channel, std::string error)>;

/// Outbound connection factory. Implementations never listen.
class Dialer {
 public:
  virtual ~Dialer() = default;
  virtual void dial(const DialTarget& target, DialCallback done) = 0;
};

/// Server-side hooks used by whatever accepts connections on a port.
class AcceptHandler {
 public:
  virtual ~AcceptHandler() = default;
  /// Checked before the upgrade completes; false refuses the connection.
  virtual bool accepts_path(std::string_view path) const = 0;
  virtual void on_open(const std::string& path, std::shared_ptr<Channel> channel) = 0;
};

}  // namespace rap::transport
