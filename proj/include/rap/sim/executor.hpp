#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <thread>
#include <tuple>
#include <unordered_map>

namespace rap::sim {

enum class ClockMode { virtual_time, real_time };

using TimerId = std::uint64_t;

/// Ordering among events due at the same instant; lower runs first, then
/// insertion order.
struct TieBreak {
  std::uint64_t major = 0;
  std::uint64_t minor = 0;
};

inline constexpr std::int64_t kNsPerMs = 1'000'000;
inline constexpr std::int64_t kNsPerSec = 1'000'000'000;

inline std::int64_t ms_to_ns(double ms) { return static_cast<std::int64_t>(ms * kNsPerMs + (ms >= 0 ? 0.5 : -0.5)); }

/// Clock plus timer queue. Everything scheduled on one executor runs on a
/// single logical thread, so components driven by it need no locking among
/// themselves.
class Executor {
 public:
  virtual ~Executor() = default;

  virtual std::int64_t now_ns() const = 0;
  virtual ClockMode mode() const = 0;

  /// Thread-safe for the real-time executor; the virtual one is single-owner.
  virtual TimerId schedule_at(std::int64_t at_ns, std::function<void()> fn, TieBreak tie = {}) = 0;
  virtual bool cancel(TimerId id) = 0;

  TimerId schedule_after(std::int64_t delay_ns, std::function<void()> fn, TieBreak tie = {}) {
    return schedule_at(now_ns() + delay_ns, std::move(fn), tie);
  }
  TimerId post(std::function<void()> fn) { return schedule_at(now_ns(), std::move(fn)); }
};

/// Discrete-event executor: time moves only through step()/run_until().
class VirtualExecutor final : public Executor {
 public:
  explicit VirtualExecutor(std::int64_t start_ns = 0) : now_(start_ns) {}

  std::int64_t now_ns() const override { return now_; }
  ClockMode mode() const override { return ClockMode::virtual_time; }
  TimerId schedule_at(std::int64_t at_ns, std::function<void()> fn, TieBreak tie = {}) override;
  bool cancel(TimerId id) override;

  /// Runs every event due within (now, now + duration] in order and leaves the
  /// clock at now + duration. Returns the number of events run.
  std::size_t step(std::int64_t duration_ns);
  std::size_t run_until(std::int64_t t_ns);
  /// Runs until no events remain or `limit_ns` is reached.
  std::size_t run_until_idle(std::int64_t limit_ns);

  std::size_t pending() const { return queue_.size(); }
  std::optional<std::int64_t> next_due() const;

 private:
  using Key = std::tuple<std::int64_t, std::uint64_t, std::uint64_t, std::uint64_t>;
  std::int64_t now_;
  std::uint64_t next_id_ = 1;
  std::map<Key, std::pair<TimerId, std::function<void()>>> queue_;
  std::unordered_map<TimerId, Key> index_;
};

/// Wall-clock executor running its events on an internal thread.
class RealtimeExecutor final : public Executor {
 public:
  RealtimeExecutor();
  ~RealtimeExecutor() override;

  RealtimeExecutor(const RealtimeExecutor&) = delete;
  RealtimeExecutor& operator=(const RealtimeExecutor&) = delete;

  std::int64_t now_ns() const override;
  ClockMode mode() const override { return ClockMode::real_time; }
  TimerId schedule_at(std::int64_t at_ns, std::function<void()> fn, TieBreak tie = {}) override;
  bool cancel(TimerId id) override;

  /// Runs `fn` on the executor thread and waits for it.
  void run_sync(const std::function<void()>& fn);
  void stop();

 private:
  using Key = std::tuple<std::int64_t, std::uint64_t, std::uint64_t, std::uint64_t>;
  void loop();

  std::chrono::steady_clock::time_point origin_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<Key, std::pair<TimerId, std::function<void()>>> queue_;
  std::unordered_map<TimerId, Key> index_;
  std::uint64_t next_id_ = 1;
  bool stopping_ = false;
  std::thread worker_;
};

}  // namespace rap::sim
