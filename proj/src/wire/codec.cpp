#include "rap/wire/codec.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

#include "json.hpp"

namespace rap::wire {

std::string_view to_string(CodecErrorKind kind) {
  switch (kind) {
    case CodecErrorKind::invalid_frame: return "InvalidFrame";
    case CodecErrorKind::malformed_bytes: return "MalformedBytes";
    case CodecErrorKind::unknown_op: return "UnknownOp";
    case CodecErrorKind::schema_violation: return "SchemaViolation";
    case CodecErrorKind::version_mismatch: return "VersionMismatch";
  }
  return "?";
}

namespace {

std::string describe(CodecErrorKind kind, const std::string& message,
                     std::optional<std::size_t> offset) {
  std::string s(to_string(kind));
  s += ": " + message;
  if (offset) s += " (at byte " + std::to_string(*offset) + ")";
  return s;
}

}  // namespace

CodecError::CodecError(CodecErrorKind kind, std::string message, std::optional<std::size_t> offset,
                       std::string field)
    : std::runtime_error(describe(kind, message, offset)),
      kind_(kind),
      offset_(offset),
      field_(std::move(field)) {}

// ---- base64 / utf-8 -------------------------------------------------------------

namespace {
constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int b64_index(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}
}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 3 <= bytes.size(); i += 3) {
    std::uint32_t n = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kB64[(n >> 18) & 63];
    out += kB64[(n >> 12) & 63];
    out += kB64[(n >> 6) & 63];
    out += kB64[n & 63];
  }
  std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    std::uint32_t n = bytes[i] << 16;
    out += kB64[(n >> 18) & 63];
    out += kB64[(n >> 12) & 63];
    out += "==";
  } else if (rest == 2) {
    std::uint32_t n = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out += kB64[(n >> 18) & 63];
    out += kB64[(n >> 12) & 63];
    out += kB64[(n >> 6) & 63];
    out += '=';
  }
  return out;
}

std::optional<Bytes> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) return std::nullopt;
  Bytes out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    bool last = i + 4 == text.size();
    int a = b64_index(text[i]);
    int b = b64_index(text[i + 1]);
    if (a < 0 || b < 0) return std::nullopt;
    if (last && text[i + 2] == '=' && text[i + 3] == '=') {
      if ((b & 15) != 0) return std::nullopt;  // non-canonical padding bits
      out.push_back(static_cast<std::uint8_t>((a << 2) | (b >> 4)));
      break;
    }
    int c = b64_index(text[i + 2]);
    if (c < 0) return std::nullopt;
    if (last && text[i + 3] == '=') {
      if ((c & 3) != 0) return std::nullopt;
      out.push_back(static_cast<std::uint8_t>((a << 2) | (b >> 4)));
      out.push_back(static_cast<std::uint8_t>(((b & 15) << 4) | (c >> 2)));
      break;
    }
    int d = b64_index(text[i + 3]);
    if (d < 0) return std::nullopt;
    std::uint32_t n = (a << 18) | (b << 12) | (c << 6) | d;
    out.push_back(static_cast<std::uint8_t>(n >> 16));
    out.push_back(static_cast<std::uint8_t>(n >> 8));
    out.push_back(static_cast<std::uint8_t>(n));
  }
  return out;
}

bool is_valid_utf8(std::string_view s) {
  std::size_t i = 0;
  const auto* p = reinterpret_cast<const unsigned char*>(s.data());
  while (i < s.size()) {
    unsigned char c = p[i];
    if (c < 0x80) {
      ++i;
      continue;
    }
    std::size_t len;
    std::uint32_t cp;
    if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + len > s.size()) return false;
    for (std::size_t k = 1; k < len; ++k) {
      if ((p[i + k] & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (p[i + k] & 0x3F);
    }
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000)) {
      return false;  // overlong
    }
    if (cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return false;
    i += len;
  }
  return true;
}

// ---- payload checks shared by both encoders ---------------------------------------

namespace {

[[noreturn]] void invalid(const std::string& what) {
  throw CodecError(CodecErrorKind::invalid_frame, what);
}

void check_encodable(const Value& v, std::size_t depth, bool json) {
  if (depth > kMaxPayloadDepth + 1) invalid("payload nested deeper than " + std::to_string(kMaxPayloadDepth));
  switch (v.kind()) {
    case ValueKind::integer:
      if (json && (v.as_int() > kMaxJsonInteger || v.as_int() < -kMaxJsonInteger)) {
        throw CodecError(CodecErrorKind::schema_violation,
                         "integer " + std::to_string(v.as_int()) + " not exact in JSON");
      }
      break;
    case ValueKind::real:
      if (!std::isfinite(v.as_real())) invalid("non-finite float");
      break;
    case ValueKind::string:
      if (!is_valid_utf8(v.as_string())) invalid("string is not valid UTF-8");
      break;
    case ValueKind::list:
      for (const auto& e : v.as_list()) check_encodable(e, depth + 1, json);
      break;
    case ValueKind::map:
      for (const auto& [k, e] : v.as_map()) {
        if (!is_valid_utf8(k)) invalid("map key is not valid UTF-8");
        check_encodable(e, depth + 1, json);
      }
      break;
    default:
      break;
  }
}

}  // namespace

// ---- CBOR ---------------------------------------------------------------------------

namespace cbor {

namespace {

void put_head(std::vector<std::uint8_t>& out, std::uint8_t major, std::uint64_t arg) {
  std::uint8_t m = static_cast<std::uint8_t>(major << 5);
  if (arg < 24) {
    out.push_back(m | static_cast<std::uint8_t>(arg));
  } else if (arg <= 0xFF) {
    out.push_back(m | 24);
    out.push_back(static_cast<std::uint8_t>(arg));
  } else if (arg <= 0xFFFF) {
    out.push_back(m | 25);
    for (int s = 8; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(arg >> s));
  } else if (arg <= 0xFFFFFFFFull) {
    out.push_back(m | 26);
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(arg >> s));
  } else {
    out.push_back(m | 27);
    for (int s = 56; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(arg >> s));
  }
}

void put_value(std::vector<std::uint8_t>& out, const Value& v) {
  switch (v.kind()) {
    case ValueKind::null: out.push_back(0xF6); break;
    case ValueKind::boolean: out.push_back(v.as_bool() ? 0xF5 : 0xF4); break;
    case ValueKind::integer: {
      std::int64_t i = v.as_int();
      if (i >= 0) {
        put_head(out, 0, static_cast<std::uint64_t>(i));
      } else {
        put_head(out, 1, static_cast<std::uint64_t>(-(i + 1)));
      }
      break;
    }
    case ValueKind::real: {
      out.push_back(0xFB);
      auto bits = std::bit_cast<std::uint64_t>(v.as_real());
      for (int s = 56; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(bits >> s));
      break;
    }
    case ValueKind::string: {
      const auto& s = v.as_string();
      put_head(out, 3, s.size());
      out.insert(out.end(), s.begin(), s.end());
      break;
    }
    case ValueKind::bytes: {
      const auto& b = v.as_bytes();
      put_head(out, 2, b.size());
      out.insert(out.end(), b.begin(), b.end());
      break;
    }
    case ValueKind::list:
      put_head(out, 4, v.as_list().size());
      for (const auto& e : v.as_list()) put_value(out, e);
      break;
    case ValueKind::map:
      put_head(out, 5, v.as_map().size());
      for (const auto& [k, e] : v.as_map()) {
        put_head(out, 3, k.size());
        out.insert(out.end(), k.begin(), k.end());
        put_value(out, e);
      }
      break;
  }
}

double half_to_double(std::uint16_t h) {
  int exp = (h >> 10) & 0x1F;
  int mant = h & 0x3FF;
  double val;
  if (exp == 0) {
    val = std::ldexp(mant, -24);
  } else if (exp != 31) {
    val = std::ldexp(mant + 1024, exp - 25);
  } else {
    val = mant == 0 ? std::numeric_limits<double>::infinity()
                    : std::numeric_limits<double>::quiet_NaN();
  }
  return (h & 0x8000) ? -val : val;
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  Value document() {
    Value v = item(1);
    if (pos_ != in_.size()) malformed("trailing bytes after top-level item", pos_);
    return v;
  }

 private:
  [[noreturn]] void malformed(const std::string& what, std::size_t at) {
    throw CodecError(CodecErrorKind::malformed_bytes, what, at);
  }
  [[noreturn]] void schema(const std::string& what, std::size_t at) {
    throw CodecError(CodecErrorKind::schema_violation, what, at);
  }

  std::size_t remaining() const { return in_.size() - pos_; }

  std::uint8_t next(std::size_t item_start) {
    if (pos_ >= in_.size()) malformed("truncated item", item_start);
    return in_[pos_++];
  }

  std::uint64_t read_be(std::size_t n, std::size_t item_start) {
    if (remaining() < n) malformed("truncated argument", item_start);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < n; ++i) v = (v << 8) | in_[pos_++];
    return v;
  }

  std::uint64_t argument(std::uint8_t info, std::size_t item_start) {
    if (info < 24) return info;
    switch (info) {
      case 24: return read_be(1, item_start);
      case 25: return read_be(2, item_start);
      case 26: return read_be(4, item_start);
      case 27: return read_be(8, item_start);
      case 31: malformed("indefinite-length items are not accepted", item_start);
      default: malformed("reserved additional-information value", item_start);
    }
  }

  std::string text(std::uint64_t len, std::size_t item_start) {
    if (len > remaining()) malformed("text length exceeds input", item_start);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), static_cast<std::size_t>(len));
    pos_ += static_cast<std::size_t>(len);
    if (!is_valid_utf8(s)) malformed("text is not valid UTF-8", item_start);
    return s;
  }

  Value item(std::size_t depth) {
    std::size_t start = pos_;
    if (depth > kMaxPayloadDepth + 1) schema("nesting too deep", start);
    std::uint8_t ib = next(start);
    std::uint8_t major = ib >> 5;
    std::uint8_t info = ib & 0x1F;
    switch (major) {
      case 0: {
        auto n = argument(info, start);
        if (n > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
          schema("integer exceeds int64", start);
        }
        return Value(static_cast<std::int64_t>(n));
      }
      case 1: {
        auto n = argument(info, start);
        if (n > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
          schema("integer below int64 range", start);
        }
        return Value(-1 - static_cast<std::int64_t>(n));
      }
      case 2: {
        auto len = argument(info, start);
        if (len > remaining()) malformed("byte string length exceeds input", start);
        Bytes b(in_.begin() + static_cast<std::ptrdiff_t>(pos_),
                in_.begin() + static_cast<std::ptrdiff_t>(pos_ + len));
        pos_ += static_cast<std::size_t>(len);
        return Value(std::move(b));
      }
      case 3: return Value(text(argument(info, start), start));
      case 4: {
        auto n = argument(info, start);
        if (n > remaining()) malformed("array length exceeds input", start);
        ValueList l;
        l.reserve(static_cast<std::size_t>(n));
        for (std::uint64_t i = 0; i < n; ++i) l.push_back(item(depth + 1));
        return Value(std::move(l));
      }
      case 5: {
        auto n = argument(info, start);
        if (n > remaining() / 2) malformed("map length exceeds input", start);
        ValueMap m;
        for (std::uint64_t i = 0; i < n; ++i) {
          std::size_t key_start = pos_;
          std::uint8_t kb = next(key_start);
          if ((kb >> 5) != 3) schema("map key is not a text string", key_start);
          std::string key = text(argument(kb & 0x1F, key_start), key_start);
          if (m.count(key) != 0) schema("duplicate map key '" + key + "'", key_start);
          m.emplace(std::move(key), item(depth + 1));
        }
        return Value(std::move(m));
      }
      case 6: schema("tagged items are not supported", start);
      default: break;
    }
    // major 7
    switch (info) {
      case 20: return Value(false);
      case 21: return Value(true);
      case 22: return Value();
      case 25: return real(half_to_double(static_cast<std::uint16_t>(read_be(2, start))), start);
      case 26: {
        auto bits = static_cast<std::uint32_t>(read_be(4, start));
        return real(static_cast<double>(std::bit_cast<float>(bits)), start);
      }
      case 27: return real(std::bit_cast<double>(read_be(8, start)), start);
      case 24: (void)read_be(1, start); schema("unsupported simple value", start);
      case 28:
      case 29:
      case 30: malformed("reserved additional-information value", start);
      case 31: malformed("unexpected break code", start);
      default: schema("unsupported simple value", start);
    }
  }

  Value real(double d, std::size_t start) {
    if (!std::isfinite(d)) schema("non-finite float", start);
    return Value(d);
  }

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_value(const Value& v) {
  check_encodable(v, 1, false);
  std::vector<std::uint8_t> out;
  put_value(out, v);
  return out;
}

Value decode_value(std::span<const std::uint8_t> bytes) { return Reader(bytes).document(); }

}  // namespace cbor

// ---- JSON ---------------------------------------------------------------------------

namespace json {

namespace {

using nlohmann::json;

constexpr const char* kBytesTag = "$bytes";

json to_json(const Value& v) {
  switch (v.kind()) {
    case ValueKind::null: return nullptr;
    case ValueKind::boolean: return v.as_bool();
    case ValueKind::integer: return v.as_int();
    case ValueKind::real: return v.as_real();
    case ValueKind::string: return v.as_string();
    case ValueKind::bytes: return json::object({{kBytesTag, base64_encode(v.as_bytes())}});
    case ValueKind::list: {
      json a = json::array();
      for (const auto& e : v.as_list()) a.push_back(to_json(e));
      return a;
    }
    case ValueKind::map: {
      json o = json::object();
      for (const auto& [k, e] : v.as_map()) {
        // Keys starting with '$' gain one more, keeping the tag namespace free.
        o[k.starts_with('$') ? "$" + k : k] = to_json(e);
      }
      return o;
    }
  }
  return nullptr;
}

[[noreturn]] void schema(const std::string& what) {
  throw CodecError(CodecErrorKind::schema_violation, what);
}

Value from_json(const json& j, std::size_t depth) {
  if (depth > kMaxPayloadDepth + 1) schema("nesting too deep");
  switch (j.type()) {
    case json::value_t::null: return Value();
    case json::value_t::boolean: return Value(j.get<bool>());
    case json::value_t::number_integer: {
      auto i = j.get<std::int64_t>();
      if (i > kMaxJsonInteger || i < -kMaxJsonInteger) schema("integer not exact in JSON");
      return Value(i);
    }
    case json::value_t::number_unsigned: {
      auto u = j.get<std::uint64_t>();
      if (u > static_cast<std::uint64_t>(kMaxJsonInteger)) schema("integer not exact in JSON");
      return Value(static_cast<std::int64_t>(u));
    }
    case json::value_t::number_float: {
      double d = j.get<double>();
      if (!std::isfinite(d)) schema("non-finite float");
      return Value(d);
    }
    case json::value_t::string: return Value(j.get<std::string>());
    case json::value_t::array: {
      ValueList l;
      l.reserve(j.size());
      for (const auto& e : j) l.push_back(from_json(e, depth + 1));
      return Value(std::move(l));
    }
    case json::value_t::object: {
      if (j.size() == 1 && j.contains(kBytesTag)) {
        const auto& tagged = j.at(kBytesTag);
        if (!tagged.is_string()) schema("bytes tag must hold a string");
        auto b = base64_decode(tagged.get_ref<const std::string&>());
        if (!b) schema("bytes tag holds invalid base64");
        return Value(std::move(*b));
      }
      ValueMap m;
      for (const auto& [k, e] : j.items()) {
        std::string key = k.starts_with("$$") ? k.substr(1) : k;
        if (m.count(key) != 0) schema("duplicate map key '" + key + "'");
        m.emplace(std::move(key), from_json(e, depth + 1));
      }
      return Value(std::move(m));
    }
    default: schema("unsupported JSON value");
  }
}

// Bounds nesting before handing the text to the parser.
void check_raw_depth(std::span<const std::uint8_t> bytes) {
  std::size_t depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    char c = static_cast<char>(bytes[i]);
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '[' || c == '{') {
      // The bytes tag adds one object level per byte string.
      if (++depth > 2 * (kMaxPayloadDepth + 2)) {
        throw CodecError(CodecErrorKind::schema_violation, "nesting too deep", i);
      }
    } else if ((c == ']' || c == '}') && depth > 0) {
      --depth;
    }
  }
}

}  // namespace

std::string encode_value(const Value& v) {
  check_encodable(v, 1, true);
  return to_json(v).dump();
}

Value decode_value(std::span<const std::uint8_t> bytes) {
  check_raw_depth(bytes);
  json j;
  try {
    j = json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    std::size_t at = e.byte > 0 ? e.byte - 1 : 0;
    throw CodecError(CodecErrorKind::malformed_bytes, e.what(), at);
  } catch (const json::exception& e) {
    // Numeric overflow ("1e999") and similar: well-formed text, unrepresentable value.
    throw CodecError(CodecErrorKind::schema_violation, e.what());
  }
  return from_json(j, 1);
}

}  // namespace json

// ---- frames ---------------------------------------------------------------------------

EncodedFrame encode(const WireFrame& frame, Encoding encoding) {
  Value v = frame_to_value(frame);
  EncodedFrame out;
  out.encoding = encoding;
  if (encoding == Encoding::json) {
    auto s = json::encode_value(v);
    out.bytes.assign(s.begin(), s.end());
  } else {
    out.bytes = cbor::encode_value(v);
  }
  return out;
}

WireFrame decode(std::span<const std::uint8_t> bytes, Encoding encoding) {
  Value v = encoding == Encoding::json ? json::decode_value(bytes) : cbor::decode_value(bytes);
  return frame_from_value(v);
}

namespace {

// Walks a CBOR item without building values. Returns the offset past it, or
// nothing when the bytes end early or use something we never emit.
std::optional<std::size_t> cbor_skip(std::span<const std::uint8_t> b, std::size_t i, int depth) {
  if (i >= b.size() || depth > static_cast<int>(kMaxPayloadDepth) + 1) return std::nullopt;
  const std::uint8_t major = b[i] >> 5;
  const std::uint8_t info = b[i] & 0x1f;
  ++i;
  std::uint64_t arg = info;
  if (info >= 24 && info <= 27) {
    const std::size_t n = std::size_t{1} << (info - 24);
    if (b.size() - i < n) return std::nullopt;
    arg = 0;
    for (std::size_t k = 0; k < n; ++k) arg = (arg << 8) | b[i + k];
    i += n;
  } else if (info > 27) {
    return std::nullopt;
  }
  switch (major) {
    case 0: case 1: case 7: return i;
    case 2: case 3:
      if (arg > b.size() - i) return std::nullopt;
      return i + arg;
    case 4: case 5: {
      const std::uint64_t items = major == 5 ? arg * 2 : arg;
      if (items > b.size() - i) return std::nullopt;
      for (std::uint64_t k = 0; k < items; ++k) {
        auto next = cbor_skip(b, i, depth + 1);
        if (!next) return std::nullopt;
        i = *next;
      }
      return i;
    }
    default: return std::nullopt;
  }
}

std::string cbor_peek_op(std::span<const std::uint8_t> b) {
  if (b.empty() || (b[0] >> 5) != 5) return "?";
  std::size_t i = 0;
  const std::uint8_t info = b[0] & 0x1f;
  if (info > 27) return "?";
  std::uint64_t pairs = info;
  ++i;
  if (info >= 24) {
    const std::size_t n = std::size_t{1} << (info - 24);
    if (b.size() - i < n) return "?";
    pairs = 0;
    for (std::size_t k = 0; k < n; ++k) pairs = (pairs << 8) | b[i + k];
    i += n;
  }
  for (std::uint64_t p = 0; p < pairs; ++p) {
    const bool is_op_key = b.size() - i >= 3 && b[i] == 0x62 && b[i + 1] == 'o' && b[i + 2] == 'p';
    auto after_key = cbor_skip(b, i, 1);
    if (!after_key) return "?";
    i = *after_key;
    if (is_op_key) {
      if (i >= b.size() || (b[i] >> 5) != 3 || (b[i] & 0x1f) >= 24) return "?";
      const std::size_t len = b[i] & 0x1f;
      if (b.size() - i - 1 < len) return "?";
      return std::string(reinterpret_cast<const char*>(b.data() + i + 1), len);
    }
    auto after_value = cbor_skip(b, i, 1);
    if (!after_value) return "?";
    i = *after_value;
  }
  return "?";
}

// Collects the top-level "op" string while nlohmann scans the document.
struct OpSax : nlohmann::json_sax<nlohmann::json> {
  int depth = 0;
  bool at_op = false;
  std::string op;

  bool value() {
    at_op = false;
    return true;
  }
  bool null() override { return value(); }
  bool boolean(bool) override { return value(); }
  bool number_integer(number_integer_t) override { return value(); }
  bool number_unsigned(number_unsigned_t) override { return value(); }
  bool number_float(number_float_t, const string_t&) override { return value(); }
  bool string(string_t& s) override {
    if (at_op) op = s;
    return value();
  }
  bool binary(binary_t&) override { return value(); }
  bool start_object(std::size_t) override {
    at_op = false;
    ++depth;
    return true;
  }
  bool key(string_t& k) override {
    at_op = depth == 1 && k == "op";
    return true;
  }
  bool end_object() override {
    --depth;
    return true;
  }
  bool start_array(std::size_t) override {
    at_op = false;
    ++depth;
    return true;
  }
  bool end_array() override {
    --depth;
    return true;
  }
  bool parse_error(std::size_t, const std::string&, const nlohmann::detail::exception&) override { return false; }
};

}  // namespace

std::string peek_op(std::span<const std::uint8_t> bytes, Encoding encoding) {
  if (encoding == Encoding::cbor) return cbor_peek_op(bytes);
  OpSax sax;
  bool ok = nlohmann::json::sax_parse(bytes.begin(), bytes.end(), &sax);
  if (!ok || sax.op.empty()) return "?";
  return sax.op;
}

SessionParams negotiate(const WireFrame& first, const ServerCaps& server) {
  if (first.op != Op::hello) return SessionParams{Encoding::json, kProtocolVersion, true};
  if (!first.versions || !first.encodings) {
    throw CodecError(CodecErrorKind::version_mismatch, "hello without versions or encodings");
  }
  std::optional<std::uint32_t> version;
  for (auto v : *first.versions) {
    if (std::find(server.versions.begin(), server.versions.end(), v) != server.versions.end()) {
      version = std::max(version.value_or(0), v);
    }
  }
  if (!version) throw CodecError(CodecErrorKind::version_mismatch, "no common protocol version");
  for (auto e : *first.encodings) {
    if (std::find(server.encodings.begin(), server.encodings.end(), e) != server.encodings.end()) {
      return SessionParams{e, *version, false};
    }
  }
  throw CodecError(CodecErrorKind::version_mismatch, "no common encoding");
}

}  // namespace rap::wire
