#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rap/graph/value.hpp"
#include "rap/wire/frame.hpp"

namespace rap::wire {

enum class CodecErrorKind {
  invalid_frame,     // encode: frame or payload cannot be represented
  malformed_bytes,   // decode: input is not a well-formed document
  unknown_op,        // decode: well-formed, but names an op we do not speak
  schema_violation,  // decode (and JSON integer range on encode)
  version_mismatch,  // negotiate: no common version or encoding
};

std::string_view to_string(CodecErrorKind kind);

class CodecError : public std::runtime_error {
 public:
  CodecError(CodecErrorKind kind, std::string message, std::optional<std::size_t> offset = {},
             std::string field = {});

  CodecErrorKind kind() const noexcept { return kind_; }
  /// Byte offset into the input, when the failure has one.
  std::optional<std::size_t> offset() const noexcept { return offset_; }
  /// Frame or payload field the failure concerns, when known.
  const std::string& field() const noexcept { return field_; }

 private:
  CodecErrorKind kind_;
  std::optional<std::size_t> offset_;
  std::string field_;
};

/// Maximum nesting depth of payload trees accepted by either encoding.
inline constexpr std::size_t kMaxPayloadDepth = 64;
/// Largest integer magnitude that survives a JSON round trip.
inline constexpr std::int64_t kMaxJsonInteger = (std::int64_t{1} << 53);

struct EncodedFrame {
  Encoding encoding = Encoding::json;
  std::vector<std::uint8_t> bytes;
};

/// Deterministic encoding; throws CodecError.
EncodedFrame encode(const WireFrame& frame, Encoding encoding);
/// Total: every input yields a frame or a CodecError.
WireFrame decode(std::span<const std::uint8_t> bytes, Encoding encoding);
inline WireFrame decode(const EncodedFrame& f) { return decode(f.bytes, f.encoding); }

/// Best-effort op name for trace labels; "?" when the bytes do not decode.
std::string peek_op(std::span<const std::uint8_t> bytes, Encoding encoding);

// Lower-level pieces, exposed for tests and tools.
namespace cbor {
std::vector<std::uint8_t> encode_value(const Value& v);
Value decode_value(std::span<const std::uint8_t> bytes);
}  // namespace cbor

namespace json {
std::string encode_value(const Value& v);
Value decode_value(std::span<const std::uint8_t> bytes);
}  // namespace json

Value frame_to_value(const WireFrame& f);
WireFrame frame_from_value(const Value& v);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::optional<Bytes> base64_decode(std::string_view text);
bool is_valid_utf8(std::string_view s);

struct ServerCaps {
  std::vector<std::uint32_t> versions{kProtocolVersion};
  std::vector<Encoding> encodings{Encoding::cbor, Encoding::json};
};

struct SessionParams {
  Encoding encoding = Encoding::json;
  std::uint32_t protocol_version = kProtocolVersion;
  bool legacy = false;  // peer skipped the hello

  bool operator==(const SessionParams&) const = default;
};

/// Agrees the session encoding from the first frame on a connection. A first
/// frame other than hello selects v1/json. The client's preference order wins
/// among encodings both sides support; the highest common version is used.
/// Throws CodecError(version_mismatch).
SessionParams negotiate(const WireFrame& first, const ServerCaps& server);

}  // namespace rap::wire
