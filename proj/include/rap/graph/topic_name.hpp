#pragma once

#include <compare>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rap {

/// Slash-separated graph name such as "/cmd_vel" or "/arm/joint_states".
/// Also used for service names.
class TopicName {
 public:
  TopicName() = default;

  /// Throws std::invalid_argument if `path` is not well formed.
  explicit TopicName(std::string path);

  static bool is_valid(std::string_view path) noexcept;

  const std::string& str() const noexcept { return path_; }
  bool empty() const noexcept { return path_.empty(); }

  auto operator<=>(const TopicName&) const = default;
  bool operator==(const TopicName&) const = default;

 private:
  std::string path_;
};

}  // namespace rap
