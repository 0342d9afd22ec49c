#include "rap/transport/channel.hpp"

#include <charconv>
#include <stdexcept>

namespace rap::transport {

DialTarget DialTarget::parse_url(std::string_view url) {
  DialTarget t;
  std::string_view rest;
  if (url.starts_with("ws://")) {
    rest = url.substr(5);
  } else if (url.starts_with("wss://")) {
    t.tls = true;
    rest = url.substr(6);
  } else {
    throw std::invalid_argument("unsupported URL scheme in '" + std::string(url) + "'");
  }
  auto slash = rest.find('/');
  std::string_view authority = rest.substr(0, slash);
  t.path = slash == std::string_view::npos ? "/" : std::string(rest.substr(slash));
  auto colon = authority.rfind(':');
  if (colon == std::string_view::npos) {
    t.host = std::string(authority);
    t.port = t.tls ? 443 : 80;
  } else {
    t.host = std::string(authority.substr(0, colon));
    auto port_text = authority.substr(colon + 1);
    unsigned port = 0;
    auto [p, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
    if (ec != std::errc() || p != port_text.data() + port_text.size() || port == 0 || port > 65535) {
      throw std::invalid_argument("bad port in '" + std::string(url) + "'");
    }
    t.port = static_cast<std::uint16_t>(port);
  }
  if (t.host.empty()) throw std::invalid_argument("missing host in '" + std::string(url) + "'");
  return t;
}

std::string DialTarget::url() const {
  return std::string(tls ? "wss://" : "ws://") + host + ":" + std::to_string(port) + path;
}

}  // namespace rap::transport
