#include "rap/robotsim/robot_sim.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <stdexcept>

namespace rap::robotsim {

void RobotSimConfig::validate() const {
  scan.validate();
  if (!(tick_hz > 0)) throw std::invalid_argument("tick_hz must be positive");
  if (!(load.tick_cost >= 0)) throw std::invalid_argument("load tick_cost must be >= 0");
  if (!(rtf_window_s > 0)) throw std::invalid_argument("rtf_window_s must be positive");
  if (!world.bounds.contains(start.x, start.y)) throw std::invalid_argument("start pose outside world bounds");
}

Value make_twist(double linear, double angular) { return Value::map({{"linear", linear}, {"angular", angular}}); }

struct RobotSim::Impl : std::enable_shared_from_this<RobotSim::Impl> {
  Impl(sim::Executor& e, MessageGraph& g, RobotSimConfig c) : ex(e), graph(g), cfg(std::move(c)) {
    budget_ns = static_cast<std::int64_t>(std::llround(1e9 / cfg.tick_hz));
    scan_period_ns = static_cast<std::int64_t>(std::llround(1e9 / cfg.scan.rate_hz));
    next_scan_ns = scan_period_ns;
    pose = cfg.start;
    pose.theta = normalize_angle(pose.theta);
  }

  sim::Executor& ex;
  MessageGraph& graph;
  RobotSimConfig cfg;
  std::int64_t budget_ns = 0;
  std::int64_t scan_period_ns = 0;

  PublisherHandle odom_pub, scan_pub;
  SubscriptionHandle cmd_sub;

  mutable std::mutex mu;
  RobotPose pose;
  double v = 0, omega = 0;
  std::int64_t sim_ns = 0;
  std::int64_t next_scan_ns = 0;
  std::uint64_t ticks = 0, odom_seq = 0, scan_seq = 0, commands = 0;
  bool running = false;
  sim::TimerId timer = 0;
  std::optional<std::int64_t> window_wall, window_sim;
  std::vector<RtfSample> samples;
  std::vector<std::function<void(const RtfSample&)>> observers;

  void schedule(std::int64_t at) {
    std::weak_ptr<Impl> self = weak_from_this();
    timer = ex.schedule_at(at, [self, at] {
      if (auto s = self.lock()) s->tick(at);
    });
  }

  void tick(std::int64_t deadline) {
    const bool realtime = ex.mode() == sim::ClockMode::real_time;
    const std::int64_t started = realtime ? ex.now_ns() : deadline;
    std::optional<RtfSample> sample;
    Value odom, scan;
    {
      std::lock_guard lk(mu);
      if (!running) return;
      if (!window_wall) {
        window_wall = started;
        window_sim = sim_ns;
      } else if (static_cast<double>(started - *window_wall) >= cfg.rtf_window_s * 1e9) {
        RtfSample s;
        s.sim_advanced_ns = sim_ns - *window_sim;
        s.wall_elapsed_ns = started - *window_wall;
        s.rtf = static_cast<double>(s.sim_advanced_ns) / static_cast<double>(s.wall_elapsed_ns);
        samples.push_back(s);
        sample = s;
        window_wall = started;
        window_sim = sim_ns;
      }

      pose = step_kinematics(pose, v, omega, static_cast<double>(budget_ns) * 1e-9);
      sim_ns += budget_ns;
      ++ticks;
      const auto stamp = ex.now_ns();
      odom = Value::map({{"seq", static_cast<std::int64_t>(odom_seq++)},
                         {"stamp_ns", stamp},
                         {"sim_ns", sim_ns},
                         {"x", pose.x},
                         {"y", pose.y},
                         {"theta", pose.theta},
                         {"linear", v},
                         {"angular", omega}});
      if (sim_ns >= next_scan_ns) {
        while (next_scan_ns <= sim_ns) next_scan_ns += scan_period_ns;
        ValueList ranges;
        for (double r : render_scan(cfg.world, pose, cfg.scan)) ranges.emplace_back(r);
        scan = Value::map({{"seq", static_cast<std::int64_t>(scan_seq++)},
                           {"stamp_ns", stamp},
                           {"sim_ns", sim_ns},
                           {"angle_min", cfg.scan.angle_min()},
                           {"angle_increment", cfg.scan.angle_increment()},
                           {"range_max", cfg.scan.max_range_m},
                           {"ranges", Value(std::move(ranges))}});
      }
    }
    if (sample) {
      for (auto& o : observers) o(*sample);
    }
    odom_pub.publish(std::move(odom));
    if (!scan.is_null()) scan_pub.publish(std::move(scan));

    const auto cost_ns = static_cast<std::int64_t>(std::llround(cfg.load.tick_cost * static_cast<double>(budget_ns)));
    std::int64_t next = deadline + std::max(budget_ns, cost_ns);
    if (realtime) {
      while (ex.now_ns() < deadline + cost_ns) {
      }
      next = std::max(next, ex.now_ns());
    }
    std::lock_guard lk(mu);
    if (running) schedule(next);
  }

  void on_cmd(const Value& twist) {
    std::lock_guard lk(mu);
    const auto* lin = twist.find("linear");
    const auto* ang = twist.find("angular");
    if (lin && lin->is_number()) v = lin->as_number();
    if (ang && ang->is_number()) omega = ang->as_number();
    ++commands;
  }
};

RobotSim::RobotSim(sim::Executor& ex, MessageGraph& graph, RobotSimConfig config) {
  config.validate();
  impl_ = std::make_shared<Impl>(ex, graph, std::move(config));
}

RobotSim::~RobotSim() { stop(); }

void RobotSim::start() {
  auto& s = *impl_;
  {
    std::lock_guard lk(s.mu);
    if (s.running) return;
    s.running = true;
  }
  s.odom_pub = s.graph.advertise(TopicSpec{TopicName(s.cfg.odom_topic), kOdomType});
  s.scan_pub = s.graph.advertise(TopicSpec{TopicName(s.cfg.scan_topic), kScanType});
  std::weak_ptr<Impl> self = impl_;
  s.cmd_sub = s.graph.subscribe(TopicName(s.cfg.cmd_topic), QueuePolicy{},
                                [self](const MessageEnvelope& env) {
                                  auto s2 = self.lock();
                                  if (!s2) return;
                                  s2->ex.post([self, payload = env.payload] {
                                    if (auto s3 = self.lock()) s3->on_cmd(payload);
                                  });
                                });
  std::lock_guard lk(s.mu);
  s.schedule(s.ex.now_ns());
}

void RobotSim::stop() {
  auto& s = *impl_;
  {
    std::lock_guard lk(s.mu);
    if (!s.running) return;
    s.running = false;
    s.ex.cancel(s.timer);
  }
  s.cmd_sub = SubscriptionHandle{};
}

RobotPose RobotSim::pose() const {
  std::lock_guard lk(impl_->mu);
  return impl_->pose;
}

std::int64_t RobotSim::sim_time_ns() const {
  std::lock_guard lk(impl_->mu);
  return impl_->sim_ns;
}

std::uint64_t RobotSim::ticks() const {
  std::lock_guard lk(impl_->mu);
  return impl_->ticks;
}

std::uint64_t RobotSim::scans_published() const {
  std::lock_guard lk(impl_->mu);
  return impl_->scan_seq;
}

std::uint64_t RobotSim::commands_received() const {
  std::lock_guard lk(impl_->mu);
  return impl_->commands;
}

std::vector<RtfSample> RobotSim::rtf_samples() const {
  std::lock_guard lk(impl_->mu);
  return impl_->samples;
}

void RobotSim::on_rtf(std::function<void(const RtfSample&)> observer) {
  std::lock_guard lk(impl_->mu);
  impl_->observers.push_back(std::move(observer));
}

}  // namespace rap::robotsim
