// rapbench: run relay scenarios and compare their reports.

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "rap/metrics/report.hpp"
#include "rap/metrics/runner.hpp"
#include "rap/metrics/scenario.hpp"

using namespace rap;
using namespace rap::metrics;

namespace {

RunReport read_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot read " + path);
  return read_jsonl(in);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Relay scenario runner"};
  app.require_subcommand(1);

  std::string scenario_file, out_dir = ".", encoding_name, log_level = "warn";
  std::optional<std::uint64_t> seed;
  auto* run_cmd = app.add_subcommand("run", "Run one scenario");
  run_cmd->add_option("--scenario", scenario_file)->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--seed", seed, "Overrides the scenario's seed");
  run_cmd->add_option("--encoding", encoding_name, "json or cbor")->check(CLI::IsMember({"json", "cbor"}));
  run_cmd->add_option("--out", out_dir, "Directory for the .jsonl and .txt reports")->capture_default_str();
  run_cmd->add_option("--log-level", log_level)->capture_default_str();

  std::string a_file, b_file;
  auto* cmp_cmd = app.add_subcommand("compare", "Per-metric deltas between two reports (b - a)");
  cmp_cmd->add_option("a", a_file)->required()->check(CLI::ExistingFile);
  cmp_cmd->add_option("b", b_file)->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*cmp_cmd) {
      write_deltas(std::cout, compare(read_report(a_file), read_report(b_file)));
      return 0;
    }
    spdlog::set_level(spdlog::level::from_str(log_level));
    auto spec = load_scenario(scenario_file);
    if (seed) {
      spec.seed = *seed;
      spec.duct.seed = *seed;
    }
    RunOptions options;
    if (!encoding_name.empty()) options.encoding = wire::parse_encoding(encoding_name);
    const auto report = run(spec, options);

    std::filesystem::create_directories(out_dir);
    const auto stem = (std::filesystem::path(out_dir) /
                       (report.scenario + "-" + report.encoding + "-" + std::to_string(report.seed)))
                          .string();
    {
      std::ofstream j(stem + ".jsonl");
      write_jsonl(j, report);
      std::ofstream t(stem + ".txt");
      write_table(t, report);
    }
    write_table(std::cout, report);
    std::cout << "\nreport: " << stem << ".jsonl\n";
    return report.ok() ? 0 : 1;
  } catch (const ScenarioInvalid& e) {
    std::cerr << "rapbench: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "rapbench: " << e.what() << '\n';
    return 2;
  }
}
