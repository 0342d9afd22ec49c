// placer: plan, verify and size GPU session placements.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "rap/placement/placement.hpp"

using namespace rap::placement;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void print_plan(const PlacementPlan& p) {
  for (const auto& [s, n] : p.assignment) std::cout << s << " -> " << n << '\n';
  for (const auto& u : p.unplaced) std::cout << u.session << " unplaced: " << to_string(u.reason) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Session placement planner"};
  app.require_subcommand(1);

  std::string nodes_file, sessions_file, plan_file, out_file, policy_name = "ffd";
  bool as_json = false;

  auto* plan_cmd = app.add_subcommand("plan", "Assign sessions to nodes");
  plan_cmd->add_option("--nodes", nodes_file)->required()->check(CLI::ExistingFile);
  plan_cmd->add_option("--sessions", sessions_file)->required()->check(CLI::ExistingFile);
  plan_cmd->add_option("--policy", policy_name, "ffd or bf")->capture_default_str();
  plan_cmd->add_option("--out", out_file, "Write the plan as JSON");
  plan_cmd->add_flag("--json", as_json, "Print JSON instead of a listing");

  auto* verify_cmd = app.add_subcommand("verify", "Check a plan; exit 1 on any violation");
  verify_cmd->add_option("--nodes", nodes_file)->required()->check(CLI::ExistingFile);
  verify_cmd->add_option("--sessions", sessions_file)->required()->check(CLI::ExistingFile);
  verify_cmd->add_option("--plan", plan_file)->required()->check(CLI::ExistingFile);

  std::int64_t cpu = 4000, mem = 16384;
  bool gpu = false;
  std::vector<std::string> tolerations;
  auto* cap_cmd = app.add_subcommand("capacity", "How many identical sessions fit");
  cap_cmd->add_option("--nodes", nodes_file)->required()->check(CLI::ExistingFile);
  cap_cmd->add_option("--sessions", sessions_file, "Use the first session in this file as the template")
      ->check(CLI::ExistingFile);
  cap_cmd->add_option("--cpu", cpu, "cpu_millis per session")->capture_default_str();
  cap_cmd->add_option("--mem", mem, "mem_mb per session")->capture_default_str();
  cap_cmd->add_flag("--gpu", gpu);
  cap_cmd->add_option("--tolerate", tolerations);
  cap_cmd->add_option("--policy", policy_name)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    const auto policy = parse_policy(policy_name);
    const auto nodes = load_nodes(nodes_file);
    if (*plan_cmd) {
      const auto sessions = load_sessions(sessions_file);
      const auto p = plan(nodes, sessions, policy);
      if (!out_file.empty()) std::ofstream(out_file) << plan_to_json(p) << '\n';
      if (as_json) {
        std::cout << plan_to_json(p) << '\n';
      } else {
        print_plan(p);
      }
      return 0;
    }
    if (*verify_cmd) {
      const auto sessions = load_sessions(sessions_file);
      const auto violations = verify(plan_from_json(slurp(plan_file)), nodes, sessions);
      for (const auto& v : violations) {
        std::cout << to_string(v.kind) << " node=" << v.node << " session=" << v.session << '\n';
      }
      if (violations.empty()) std::cout << "ok\n";
      return violations.empty() ? 0 : 1;
    }
    SessionSpec tmpl{"template", cpu, mem, gpu, {tolerations.begin(), tolerations.end()}};
    if (!sessions_file.empty()) {
      const auto sessions = load_sessions(sessions_file);
      if (sessions.empty()) throw std::invalid_argument(sessions_file + " holds no sessions");
      tmpl = sessions.front();
    }
    std::cout << capacity_report(nodes, tmpl, policy) << '\n';
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "placer: " << e.what() << '\n';
    return 2;
  }
}
