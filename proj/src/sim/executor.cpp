#include "rap/sim/executor.hpp"

#include <algorithm>
#include <future>

namespace rap::sim {

TimerId VirtualExecutor::schedule_at(std::int64_t at_ns, std::function<void()> fn, TieBreak tie) {
  TimerId id = next_id_++;
  Key key{std::max(at_ns, now_), tie.major, tie.minor, id};
  queue_.emplace(key, std::make_pair(id, std::move(fn)));
  index_.emplace(id, key);
  return id;
}

bool VirtualExecutor::cancel(TimerId id) {
  auto it = index_.find(id);
  if (it == index_.end()) return false;
  queue_.erase(it->second);
  index_.erase(it);
  return true;
}

std::optional<std::int64_t> VirtualExecutor::next_due() const {
  if (queue_.empty()) return std::nullopt;
  return std::get<0>(queue_.begin()->first);
}

std::size_t VirtualExecutor::run_until(std::int64_t t_ns) {
  std::size_t ran = 0;
  while (!queue_.empty()) {
    auto it = queue_.begin();
    if (std::get<0>(it->first) > t_ns) break;
    now_ = std::get<0>(it->first);
    auto fn = std::move(it->second.second);
    index_.erase(it->second.first);
    queue_.erase(it);
    fn();
    ++ran;
  }
  if (t_ns > now_) now_ = t_ns;
  return ran;
}

std::size_t VirtualExecutor::step(std::int64_t duration_ns) { return run_until(now_ + duration_ns); }

std::size_t VirtualExecutor::run_until_idle(std::int64_t limit_ns) {
  std::size_t ran = 0;
  while (!queue_.empty() && std::get<0>(queue_.begin()->first) <= limit_ns) {
    ran += run_until(std::get<0>(queue_.begin()->first));
  }
  return ran;
}

// ---- real time -------------------------------------------------------------------

RealtimeExecutor::RealtimeExecutor()
    : origin_(std::chrono::steady_clock::now()), worker_([this] { loop(); }) {}

RealtimeExecutor::~RealtimeExecutor() { stop(); }

std::int64_t RealtimeExecutor::now_ns() const {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() -
                                                              origin_)
      .count();
}

TimerId RealtimeExecutor::schedule_at(std::int64_t at_ns, std::function<void()> fn, TieBreak tie) {
  std::lock_guard lk(mu_);
  TimerId id = next_id_++;
  Key key{at_ns, tie.major, tie.minor, id};
  queue_.emplace(key, std::make_pair(id, std::move(fn)));
  index_.emplace(id, key);
  cv_.notify_all();
  return id;
}

bool RealtimeExecutor::cancel(TimerId id) {
  std::lock_guard lk(mu_);
  auto it = index_.find(id);
  if (it == index_.end()) return false;
  queue_.erase(it->second);
  index_.erase(it);
  return true;
}

void RealtimeExecutor::run_sync(const std::function<void()>& fn) {
  if (std::this_thread::get_id() == worker_.get_id()) {
    fn();
    return;
  }
  std::promise<void> done;
  post([&] {
    fn();
    done.set_value();
  });
  done.get_future().wait();
}

void RealtimeExecutor::stop() {
  {
    std::lock_guard lk(mu_);
    if (stopping_) return;
    stopping_ = true;
    cv_.notify_all();
  }
  if (worker_.joinable()) worker_.join();
}

void RealtimeExecutor::loop() {
  std::unique_lock lk(mu_);
  while (!stopping_) {
    if (queue_.empty()) {
      cv_.wait(lk);
      continue;
    }
    auto due = std::get<0>(queue_.begin()->first);
    auto now = now_ns();
    if (due > now) {
      cv_.wait_for(lk, std::chrono::nanoseconds(due - now));
      continue;
    }
    auto it = queue_.begin();
    auto fn = std::move(it->second.second);
    index_.erase(it->second.first);
    queue_.erase(it);
    lk.unlock();
    fn();
    lk.lock();
  }
}

}  // namespace rap::sim
