// ductd: device-side duct, optionally with the simulated robot on its graph.

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <csignal>
#include <ctime>
#include <iostream>

#include "rap/duct/duct_client.hpp"
#include "rap/robotsim/robot_sim.hpp"
#include "rap/ws/ws_transport.hpp"

using namespace rap;

int main(int argc, char** argv) {
  CLI::App app{"Outbound-only connector mirroring a local graph to a bridge"};
  std::string config_file, ca_file, world_file, log_level = "info";
  bool with_robot = false;
  double status_s = 5;
  app.add_option("--config", config_file, "Duct YAML")->required()->check(CLI::ExistingFile);
  app.add_option("--ca-file", ca_file, "Verify wss:// servers against this CA")->check(CLI::ExistingFile);
  app.add_flag("--robot", with_robot, "Run the simulated robot on the local graph");
  app.add_option("--world", world_file, "World file for --robot")->check(CLI::ExistingFile);
  app.add_option("--status-every", status_s, "Seconds between status lines (0: off)")->capture_default_str();
  app.add_option("--log-level", log_level)->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(log_level));

  duct::DuctConfig cfg;
  robotsim::RobotSimConfig robot_cfg;
  try {
    cfg = duct::load_config(config_file);
    if (!world_file.empty()) robot_cfg.world = robotsim::load_world(world_file);
  } catch (const std::exception& e) {
    std::cerr << "ductd: " << e.what() << '\n';
    return 2;
  }

  sigset_t sigs;
  sigemptyset(&sigs);
  sigaddset(&sigs, SIGINT);
  sigaddset(&sigs, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &sigs, nullptr);

  sim::RealtimeExecutor ex;
  MessageGraph local([&ex] { return ex.now_ns(); });
  ws::WsDialerOptions dopts;
  if (!ca_file.empty()) dopts.ca_file = ca_file;
  ws::WsDialer dialer(ex, dopts);
  std::unique_ptr<duct::DuctClient> d;
  std::unique_ptr<robotsim::RobotSim> robot;
  ex.run_sync([&] {
    d = std::make_unique<duct::DuctClient>(ex, dialer, local, cfg);
    d->on_phase([&](duct::Phase p) { spdlog::info("ductd: {}", duct::to_string(p)); });
    d->start();
    if (with_robot) {
      robot = std::make_unique<robotsim::RobotSim>(ex, local, robot_cfg);
      robot->start();
    }
  });

  int sig = 0;
  for (;;) {
    if (status_s > 0) {
      timespec ts{static_cast<time_t>(status_s), static_cast<long>((status_s - static_cast<time_t>(status_s)) * 1e9)};
      sig = sigtimedwait(&sigs, nullptr, &ts);
      if (sig < 0) {
        ex.run_sync([&] {
          const auto s = d->stats();
          spdlog::info("ductd: phase {} sessions {} failed attempts {} bytes out/in {}/{}", duct::to_string(d->phase()),
                       s.lives, s.failed_attempts, s.bytes_out, s.bytes_in);
        });
        continue;
      }
    } else {
      sigwait(&sigs, &sig);
    }
    break;
  }
  spdlog::info("ductd: signal {}, shutting down", sig);
  ex.run_sync([&] {
    if (robot) robot->stop();
    d->stop();
    robot.reset();
    d.reset();
  });
  ex.stop();
  return 0;
}
