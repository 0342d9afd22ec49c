#include "rap/graph/value.hpp"

#include <algorithm>
#include <cstdio>

namespace rap {

std::string_view to_string(ValueKind kind) {
  switch (kind) {
    case ValueKind::null: return "null";
    case ValueKind::boolean: return "bool";
    case ValueKind::integer: return "int";
    case ValueKind::real: return "float";
    case ValueKind::string: return "string";
    case ValueKind::bytes: return "bytes";
    case ValueKind::list: return "list";
    case ValueKind::map: return "map";
  }
  return "?";
}

double Value::as_number() const {
  if (is_int()) return static_cast<double>(as_int());
  return as_real();
}

const Value* Value::find(std::string_view key) const {
  auto* m = std::get_if<ValueMap>(&data_);
  if (m == nullptr) return nullptr;
  auto it = m->find(key);
  return it == m->end() ? nullptr : &it->second;
}

const Value& Value::at(std::string_view key) const {
  if (auto* v = find(key)) return *v;
  throw std::out_of_range("no key '" + std::string(key) + "'");
}

std::size_t Value::node_count() const {
  std::size_t n = 1;
  if (auto* l = std::get_if<ValueList>(&data_)) {
    for (const auto& v : *l) n += v.node_count();
  } else if (auto* m = std::get_if<ValueMap>(&data_)) {
    for (const auto& [k, v] : *m) n += v.node_count();
  }
  return n;
}

std::size_t Value::depth() const {
  std::size_t d = 0;
  if (auto* l = std::get_if<ValueList>(&data_)) {
    for (const auto& v : *l) d = std::max(d, v.depth());
  } else if (auto* m = std::get_if<ValueMap>(&data_)) {
    for (const auto& [k, v] : *m) d = std::max(d, v.depth());
  }
  return d + 1;
}

namespace {

void render(const Value& v, std::string& out) {
  switch (v.kind()) {
    case ValueKind::null: out += "null"; break;
    case ValueKind::boolean: out += v.as_bool() ? "true" : "false"; break;
    case ValueKind::integer: out += std::to_string(v.as_int()); break;
    case ValueKind::real: {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.17g", v.as_real());
      out += buf;
      break;
    }
    case ValueKind::string: out += '"' + v.as_string() + '"'; break;
    case ValueKind::bytes: out += "b<" + std::to_string(v.as_bytes().size()) + ">"; break;
    case ValueKind::list: {
      out += '[';
      bool first = true;
      for (const auto& e : v.as_list()) {
        if (!first) out += ',';
        first = false;
        render(e, out);
      }
      out += ']';
      break;
    }
    case ValueKind::map: {
      out += '{';
      bool first = true;
      for (const auto& [k, e] : v.as_map()) {
        if (!first) out += ',';
        first = false;
        out += k + ':';
        render(e, out);
      }
      out += '}';
      break;
    }
  }
}

}  // namespace

std::string debug_string(const Value& v) {
  std::string out;
  render(v, out);
  return out;
}

}  // namespace rap
