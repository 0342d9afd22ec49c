#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rap/graph/value.hpp"

namespace rap::wire {

enum class Op {
  advertise,
  unadvertise,
  publish,
  subscribe,
  unsubscribe,
  call_service,
  service_response,
  advertise_service,
  unadvertise_service,
  status,
  hello,
};

enum class Encoding { json, cbor };

std::string_view to_string(Op op);
std::optional<Op> parse_op(std::string_view s);
std::string_view to_string(Encoding e);
std::optional<Encoding> parse_encoding(std::string_view s);

inline constexpr std::uint32_t kDefaultQueueLength = 10;
inline constexpr std::uint32_t kProtocolVersion = 1;

/// One bridge protocol operation. Which optional fields are required depends
/// on `op`; see validate().
struct WireFrame {
  Op op = Op::status;
  std::optional<std::string> id;
  std::optional<std::string> topic;
  std::optional<std::string> service;
  std::optional<std::string> type_name;
  std::optional<std::string> response_type;
  std::optional<Value> msg;
  std::optional<std::uint32_t> throttle_rate_ms;
  std::optional<std::uint32_t> queue_length;
  std::optional<bool> latched;
  std::optional<Encoding> encoding_hint;
  std::optional<bool> result;
  std::optional<std::string> level;
  std::optional<std::string> text;
  // hello only
  std::optional<std::vector<std::uint32_t>> versions;
  std::optional<std::vector<Encoding>> encodings;
  std::optional<std::string> token;

  std::uint32_t effective_queue_length() const {
    return queue_length.value_or(kDefaultQueueLength);
  }

  bool operator==(const WireFrame&) const = default;
};

/// Returns the name of the first missing or ill-formed field, or nullopt if
/// the frame satisfies its op-specific requirements.
std::optional<std::string> validate(const WireFrame& f);

// Frame builders for the common operations.
WireFrame make_hello(std::vector<Encoding> encodings, std::optional<std::string> token = {});
WireFrame make_advertise(std::string topic, std::string type_name, bool latched = false);
WireFrame make_unadvertise(std::string topic);
WireFrame make_publish(std::string topic, Value msg);
WireFrame make_subscribe(std::string topic, std::optional<std::uint32_t> throttle_rate_ms = {},
                         std::optional<std::uint32_t> queue_length = {});
WireFrame make_unsubscribe(std::string topic);
WireFrame make_advertise_service(std::string service, std::string request_type,
                                 std::string response_type);
WireFrame make_unadvertise_service(std::string service);
WireFrame make_call_service(std::string id, std::string service, Value args);
WireFrame make_service_response(std::string id, std::string service, bool result, Value values,
                                std::string error = {});
WireFrame make_status(std::string level, std::string text, std::optional<std::string> id = {});

}  // namespace rap::wire
