#include "rap/graph/topic_name.hpp"

namespace rap {

namespace {

bool is_segment_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

}  // namespace

bool TopicName::is_valid(std::string_view path) noexcept {
  if (path.size() < 2 || path.front() != '/' || path.back() == '/') return false;
  bool segment_empty = true;
  for (std::size_t i = 1; i < path.size(); ++i) {
    char c = path[i];
    if (c == '/') {
      if (segment_empty) return false;
      segment_empty = true;
    } else if (is_segment_char(c)) {
      segment_empty = false;
    } else {
      return false;
    }
  }
  return !segment_empty;
}

TopicName::TopicName(std::string path) : path_(std::move(path)) {
  if (!is_valid(path_)) throw std::invalid_argument("malformed graph name '" + path_ + "'");
}

}  // namespace rap
