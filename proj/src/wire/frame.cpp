#include "rap/wire/frame.hpp"

#include <array>
#include <limits>

#include "rap/graph/topic_name.hpp"
#include "rap/wire/codec.hpp"

namespace rap::wire {

namespace {

constexpr std::array<std::string_view, 11> kOpNames{
    "advertise",        "unadvertise",       "publish",
    "subscribe",        "unsubscribe",       "call_service",
    "service_response", "advertise_service", "unadvertise_service",
    "status",           "hello",
};

bool is_level(std::string_view s) { return s == "error" || s == "warning" || s == "info"; }

}  // namespace

std::string_view to_string(Op op) { return kOpNames.at(static_cast<std::size_t>(op)); }

std::optional<Op> parse_op(std::string_view s) {
  for (std::size_t i = 0; i < kOpNames.size(); ++i) {
    if (kOpNames[i] == s) return static_cast<Op>(i);
  }
  return std::nullopt;
}

std::string_view to_string(Encoding e) { return e == Encoding::json ? "json" : "cbor"; }

std::optional<Encoding> parse_encoding(std::string_view s) {
  if (s == "json") return Encoding::json;
  if (s == "cbor") return Encoding::cbor;
  return std::nullopt;
}

std::optional<std::string> validate(const WireFrame& f) {
  auto need_name = [](const std::optional<std::string>& s) {
    return s.has_value() && TopicName::is_valid(*s);
  };
  if (f.topic && !TopicName::is_valid(*f.topic)) return "topic";
  if (f.service && !TopicName::is_valid(*f.service)) return "service";
  if (f.level && !is_level(*f.level)) return "level";
  switch (f.op) {
    case Op::advertise:
      if (!need_name(f.topic)) return "topic";
      if (!f.type_name) return "type_name";
      break;
    case Op::unadvertise:
    case Op::subscribe:
    case Op::unsubscribe:
      if (!need_name(f.topic)) return "topic";
      break;
    case Op::publish:
      if (!need_name(f.topic)) return "topic";
      if (!f.msg) return "msg";
      break;
    case Op::call_service:
      if (!need_name(f.service)) return "service";
      if (!f.id || f.id->empty()) return "id";
      break;
    case Op::service_response:
      if (!f.id || f.id->empty()) return "id";
      if (!f.result) return "result";
      break;
    case Op::advertise_service:
      if (!need_name(f.service)) return "service";
      if (!f.type_name) return "type_name";
      break;
    case Op::unadvertise_service:
      if (!need_name(f.service)) return "service";
      break;
    case Op::status:
      if (!f.level) return "level";
      if (!f.text) return "text";
      break;
    case Op::hello:
      if (!f.versions || f.versions->empty()) return "versions";
      if (!f.encodings || f.encodings->empty()) return "encodings";
      break;
  }
  return std::nullopt;
}

WireFrame make_hello(std::vector<Encoding> encodings, std::optional<std::string> token) {
  WireFrame f;
  f.op = Op::hello;
  f.versions = std::vector<std::uint32_t>{kProtocolVersion};
  f.encodings = std::move(encodings);
  f.token = std::move(token);
  return f;
}

WireFrame make_advertise(std::string topic, std::string type_name, bool latched) {
  WireFrame f;
  f.op = Op::advertise;
  f.topic = std::move(topic);
  f.type_name = std::move(type_name);
  if (latched) f.latched = true;
  return f;
}

WireFrame make_unadvertise(std::string topic) {
  WireFrame f;
  f.op = Op::unadvertise;
  f.topic = std::move(topic);
  return f;
}

WireFrame make_publish(std::string topic, Value msg) {
  WireFrame f;
  f.op = Op::publish;
  f.topic = std::move(topic);
  f.msg = std::move(msg);
  return f;
}

WireFrame make_subscribe(std::string topic, std::optional<std::uint32_t> throttle_rate_ms,
                         std::optional<std::uint32_t> queue_length) {
  WireFrame f;
  f.op = Op::subscribe;
  f.topic = std::move(topic);
  f.throttle_rate_ms = throttle_rate_ms;
  f.queue_length = queue_length;
  return f;
}

WireFrame make_unsubscribe(std::string topic) {
  WireFrame f;
  f.op = Op::unsubscribe;
  f.topic = std::move(topic);
  return f;
}

WireFrame make_advertise_service(std::string service, std::string request_type,
                                 std::string response_type) {
  WireFrame f;
  f.op = Op::advertise_service;
  f.service = std::move(service);
  f.type_name = std::move(request_type);
  f.response_type = std::move(response_type);
  return f;
}

WireFrame make_unadvertise_service(std::string service) {
  WireFrame f;
  f.op = Op::unadvertise_service;
  f.service = std::move(service);
  return f;
}

WireFrame make_call_service(std::string id, std::string service, Value args) {
  WireFrame f;
  f.op = Op::call_service;
  f.id = std::move(id);
  f.service = std::move(service);
  f.msg = std::move(args);
  return f;
}

WireFrame make_service_response(std::string id, std::string service, bool result, Value values,
                                std::string error) {
  WireFrame f;
  f.op = Op::service_response;
  f.id = std::move(id);
  if (!service.empty()) f.service = std::move(service);
  f.result = result;
  if (result) {
    f.msg = std::move(values);
  } else {
    f.text = std::move(error);
  }
  return f;
}

WireFrame make_status(std::string level, std::string text, std::optional<std::string> id) {
  WireFrame f;
  f.op = Op::status;
  f.level = std::move(level);
  f.text = std::move(text);
  f.id = std::move(id);
  return f;
}

// ---- frame <-> generic value -------------------------------------------------

Value frame_to_value(const WireFrame& f) {
  if (auto bad = validate(f)) {
    throw CodecError(CodecErrorKind::invalid_frame,
                     "frame '" + std::string(to_string(f.op)) + "' lacks valid " + *bad,
                     std::nullopt, *bad);
  }
  ValueMap m;
  m["op"] = Value(std::string(to_string(f.op)));
  auto put_str = [&](const char* key, const std::optional<std::string>& s) {
    if (s) m[key] = Value(*s);
  };
  put_str("id", f.id);
  put_str("topic", f.topic);
  put_str("service", f.service);
  put_str("type_name", f.type_name);
  put_str("response_type", f.response_type);
  put_str("level", f.level);
  put_str("text", f.text);
  put_str("token", f.token);
  if (f.msg) m["msg"] = *f.msg;
  if (f.throttle_rate_ms) m["throttle_rate_ms"] = Value(*f.throttle_rate_ms);
  if (f.queue_length) m["queue_length"] = Value(*f.queue_length);
  if (f.latched) m["latched"] = Value(*f.latched);
  if (f.result) m["result"] = Value(*f.result);
  if (f.encoding_hint) m["encoding_hint"] = Value(std::string(to_string(*f.encoding_hint)));
  if (f.versions) {
    ValueList l;
    for (auto v : *f.versions) l.emplace_back(v);
    m["versions"] = Value(std::move(l));
  }
  if (f.encodings) {
    ValueList l;
    for (auto e : *f.encodings) l.emplace_back(std::string(to_string(e)));
    m["encodings"] = Value(std::move(l));
  }
  return Value(std::move(m));
}

namespace {

[[noreturn]] void schema(const std::string& field, const std::string& what) {
  throw CodecError(CodecErrorKind::schema_violation, "field '" + field + "': " + what,
                   std::nullopt, field);
}

std::optional<std::string> get_str(const ValueMap& m, const char* key) {
  auto it = m.find(key);
  if (it == m.end()) return std::nullopt;
  if (!it->second.is_string()) schema(key, "expected string");
  return it->second.as_string();
}

std::optional<bool> get_bool(const ValueMap& m, const char* key) {
  auto it = m.find(key);
  if (it == m.end()) return std::nullopt;
  if (!it->second.is_bool()) schema(key, "expected bool");
  return it->second.as_bool();
}

std::uint32_t to_u32(const Value& v, const std::string& field) {
  if (!v.is_int()) schema(field, "expected unsigned integer");
  auto i = v.as_int();
  if (i < 0 || i > std::numeric_limits<std::uint32_t>::max()) schema(field, "out of range");
  return static_cast<std::uint32_t>(i);
}

std::optional<std::uint32_t> get_u32(const ValueMap& m, const char* key) {
  auto it = m.find(key);
  if (it == m.end()) return std::nullopt;
  return to_u32(it->second, key);
}

Encoding to_encoding(const Value& v, const std::string& field) {
  if (!v.is_string()) schema(field, "expected encoding name");
  auto e = parse_encoding(v.as_string());
  if (!e) schema(field, "unknown encoding '" + v.as_string() + "'");
  return *e;
}

}  // namespace

WireFrame frame_from_value(const Value& v) {
  if (!v.is_map()) schema("", "frame is not a map");
  const auto& m = v.as_map();
  auto op_name = get_str(m, "op");
  if (!op_name) schema("op", "missing");
  auto op = parse_op(*op_name);
  if (!op) {
    throw CodecError(CodecErrorKind::unknown_op, "unknown op '" + *op_name + "'", std::nullopt,
                     "op");
  }
  WireFrame f;
  f.op = *op;
  f.id = get_str(m, "id");
  f.topic = get_str(m, "topic");
  f.service = get_str(m, "service");
  f.type_name = get_str(m, "type_name");
  f.response_type = get_str(m, "response_type");
  f.level = get_str(m, "level");
  f.text = get_str(m, "text");
  f.token = get_str(m, "token");
  if (auto it = m.find("msg"); it != m.end()) f.msg = it->second;
  f.throttle_rate_ms = get_u32(m, "throttle_rate_ms");
  f.queue_length = get_u32(m, "queue_length");
  f.latched = get_bool(m, "latched");
  f.result = get_bool(m, "result");
  if (auto it = m.find("encoding_hint"); it != m.end()) {
    f.encoding_hint = to_encoding(it->second, "encoding_hint");
  }
  if (auto it = m.find("versions"); it != m.end()) {
    if (!it->second.is_list()) schema("versions", "expected list");
    std::vector<std::uint32_t> vs;
    for (const auto& e : it->second.as_list()) vs.push_back(to_u32(e, "versions"));
    f.versions = std::move(vs);
  }
  if (auto it = m.find("encodings"); it != m.end()) {
    if (!it->second.is_list()) schema("encodings", "expected list");
    std::vector<Encoding> es;
    for (const auto& e : it->second.as_list()) es.push_back(to_encoding(e, "encodings"));
    f.encodings = std::move(es);
  }
  if (auto bad = validate(f)) schema(*bad, "missing or malformed for op " + *op_name);
  return f;
}

}  // namespace rap::wire
