// bridged: the cloud-side bridge on a single websocket port.

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <csignal>
#include <iostream>

#include "rap/bridge/bridge_server.hpp"
#include "rap/ws/ws_transport.hpp"

using namespace rap;

int main(int argc, char** argv) {
  CLI::App app{"Websocket bridge serving one message graph per route"};
  std::string bind = "127.0.0.1", cert, key, log_level = "info";
  std::uint16_t port = 8443;
  std::vector<std::string> routes{"lab"};
  std::vector<std::string> tokens;
  app.add_option("--bind", bind)->capture_default_str();
  app.add_option("--port", port, "0 picks a free port")->capture_default_str();
  app.add_option("--route", routes, "name, name:isolated or name:shared (repeatable)")->capture_default_str();
  app.add_option("--token", tokens, "route=token (repeatable)");
  app.add_option("--tls-cert", cert)->check(CLI::ExistingFile);
  app.add_option("--tls-key", key)->check(CLI::ExistingFile);
  app.add_option("--log-level", log_level)->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(log_level));

  bridge::BridgeConfig cfg;
  try {
    for (const auto& r : routes) cfg.routes.push_back(bridge::Route::parse(r));
    for (const auto& t : tokens) {
      const auto eq = t.find('=');
      if (eq == std::string::npos) throw std::invalid_argument("token must look like route=secret: " + t);
      cfg.tokens[t.substr(0, eq)] = t.substr(eq + 1);
    }
  } catch (const std::exception& e) {
    std::cerr << "bridged: " << e.what() << '\n';
    return 2;
  }
  if (cert.empty() != key.empty()) {
    std::cerr << "bridged: --tls-cert and --tls-key go together\n";
    return 2;
  }

  // Block the signals before any thread starts so only sigwait sees them.
  sigset_t sigs;
  sigemptyset(&sigs);
  sigaddset(&sigs, SIGINT);
  sigaddset(&sigs, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &sigs, nullptr);

  sim::RealtimeExecutor ex;
  std::shared_ptr<bridge::BridgeServer> server;
  ex.run_sync([&] { server = bridge::BridgeServer::create(ex, cfg); });
  ws::WsServerOptions opts;
  opts.bind_address = bind;
  opts.port = port;
  if (!cert.empty()) opts.tls = ws::TlsFiles{cert, key};
  ws::WsServer listener(ex, server, opts);
  try {
    const auto bound = listener.start();
    spdlog::info("bridged: listening on {}://{}:{}{}<route>", cert.empty() ? "ws" : "wss", bind, bound,
                 cfg.path_prefix);
    std::cout << bound << std::endl;
  } catch (const std::exception& e) {
    std::cerr << "bridged: " << e.what() << '\n';
    ex.stop();
    return 1;
  }

  int sig = 0;
  sigwait(&sigs, &sig);
  spdlog::info("bridged: signal {}, shutting down", sig);
  listener.stop();
  ex.run_sync([&] {
    const auto s = server->stats();
    spdlog::info("bridged: accepted {} refused_path {} auth_failures {} frames in/out {}/{}", s.accepted,
                 s.refused_path, s.auth_failures, s.frames_in, s.frames_out);
    server.reset();
  });
  ex.stop();
  return 0;
}
