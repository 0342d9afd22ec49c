#pragma once

#include <cstdint>
#include <initializer_list>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

namespace rap {

class Value;

using Bytes = std::vector<std::uint8_t>;
using ValueList = std::vector<Value>;
using ValueMap = std::map<std::string, Value, std::less<>>;

enum class ValueKind { null, boolean, integer, real, string, bytes, list, map };

std::string_view to_string(ValueKind kind);

/// Self-describing payload tree. Byte strings are kept distinct from text
/// so that both wire encodings can carry them without loss.
class Value {
 public:
  Value() = default;
  Value(std::nullptr_t) {}
  Value(bool b) : data_(b) {}
  template <typename T,
            std::enable_if_t<std::is_integral_v<T> && !std::is_same_v<T, bool>, int> = 0>
  Value(T i) : data_(static_cast<std::int64_t>(i)) {}
  Value(double d) : data_(d) {}
  Value(float f) : data_(static_cast<double>(f)) {}
  Value(const char* s) : data_(std::string(s)) {}
  Value(std::string s) : data_(std::move(s)) {}
  Value(std::string_view s) : data_(std::string(s)) {}
  Value(Bytes b) : data_(std::move(b)) {}
  Value(ValueList l) : data_(std::move(l)) {}
  Value(ValueMap m) : data_(std::move(m)) {}

  static Value map(std::initializer_list<std::pair<const std::string, Value>> items) {
    return Value(ValueMap(items));
  }
  static Value list(std::initializer_list<Value> items) { return Value(ValueList(items)); }

  ValueKind kind() const noexcept { return static_cast<ValueKind>(data_.index()); }

  bool is_null() const noexcept { return kind() == ValueKind::null; }
  bool is_bool() const noexcept { return kind() == ValueKind::boolean; }
  bool is_int() const noexcept { return kind() == ValueKind::integer; }
  bool is_real() const noexcept { return kind() == ValueKind::real; }
  bool is_number() const noexcept { return is_int() || is_real(); }
  bool is_string() const noexcept { return kind() == ValueKind::string; }
  bool is_bytes() const noexcept { return kind() == ValueKind::bytes; }
  bool is_list() const noexcept { return kind() == ValueKind::list; }
  bool is_map() const noexcept { return kind() == ValueKind::map; }

  bool as_bool() const { return get<bool>(); }
  std::int64_t as_int() const { return get<std::int64_t>(); }
  double as_real() const { return get<double>(); }
  /// Integer or real widened to double.
  double as_number() const;
  const std::string& as_string() const { return get<std::string>(); }
  const Bytes& as_bytes() const { return get<Bytes>(); }
  const ValueList& as_list() const { return get<ValueList>(); }
  const ValueMap& as_map() const { return get<ValueMap>(); }
  ValueList& as_list() { return get<ValueList>(); }
  ValueMap& as_map() { return get<ValueMap>(); }

  /// Map lookup; nullptr when this is not a map or the key is absent.
  const Value* find(std::string_view key) const;
  const Value& at(std::string_view key) const;

  /// Number of nodes in the tree, this one included.
  std::size_t node_count() const;
  std::size_t depth() const;

  friend bool operator==(const Value& a, const Value& b) { return a.data_ == b.data_; }
  friend bool operator!=(const Value& a, const Value& b) { return !(a == b); }

 private:
  template <typename T>
  const T& get() const {
    if (auto* p = std::get_if<T>(&data_)) return *p;
    throw std::logic_error("value is " + std::string(to_string(kind())));
  }
  template <typename T>
  T& get() {
    if (auto* p = std::get_if<T>(&data_)) return *p;
    throw std::logic_error("value is " + std::string(to_string(kind())));
  }

  std::variant<std::monostate, bool, std::int64_t, double, std::string, Bytes, ValueList,
               ValueMap>
      data_;
};

/// Compact human-readable rendering, used in logs and test failure messages.
std::string debug_string(const Value& v);

}  // namespace rap
