#include "entrofact/experiments.hpp"
#include "entrofact/parallel.hpp"
#include "entrofact/report.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

namespace {

constexpr int kExitUsage = 64;
constexpr int kExitSchema = 65;
constexpr int kExitCap = 66;

int run_command(const std::string& config_path, long long seed_override,
                int workers, const std::string& out_dir) {
  namespace fs = std::filesystem;
  using namespace entrofact;

  std::ifstream in(config_path);
  if (!in.good()) {
    std::cerr << "error: cannot read config file " << config_path << "\n";
    return kExitUsage;
  }
  report::json config;
  try {
    in >> config;
  } catch (const std::exception& e) {
    std::cerr << "error: config is not valid JSON: " << e.what() << "\n";
    return kExitSchema;
  }

  if (seed_override >= 0) config["seed"] = static_cast<std::uint64_t>(seed_override);
  if (workers > 0) worker_count() = workers;
  const fs::path out = out_dir.empty()
                           ? fs::path(config.value("out", std::string("entrofact-out")))
                           : fs::path(out_dir);

  const auto started = std::chrono::steady_clock::now();
  experiments::RunResult result;
  try {
    result = experiments::run(config, out, /*write_artifacts=*/true);
  } catch (const experiments::UnknownExperiment& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const experiments::SchemaError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitSchema;
  } catch (const CapExceeded& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCap;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: config field error: " << e.what() << "\n";
    return kExitSchema;
  }
  const double wall_ms = std::chrono::duration<double, std::milli>(
                             std::chrono::steady_clock::now() - started)
                             .count();

  const fs::path report_path =
      out / (config["experiment"].get<std::string>() + "-report.json");
  report::write_report(report_path, result.payload, wall_ms);

  for (const auto& check : result.payload["checks"])
    std::cout << "[" << check["verdict"].get<std::string>() << "] "
              << check["name"].get<std::string>()
              << " (margin=" << check["margin"].get<double>() << ")\n";
  std::cout << "verdict: " << result.payload["verdict"].get<std::string>() << "\n"
            << "report: " << report_path.string() << "\n";
  return report::exit_code(result.verdict);
}

int list_command(const std::string& filter) {
  for (const auto& exp : entrofact::experiments::registry())
    if (filter.empty() || exp.name.find(filter) != std::string::npos)
      std::cout << exp.name << "  -  " << exp.description << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"entrofact: entropy factorization checks for spin systems"};
  app.require_subcommand(1);

  std::string config_path, out_dir, filter;
  long long seed_override = -1;
  int workers = 0;

  auto* run = app.add_subcommand("run", "run an experiment from a JSON config");
  run->add_option("config", config_path, "experiment config file")->required();
  run->add_option("--seed", seed_override, "override the config seed");
  run->add_option("--workers", workers, "worker thread count");
  run->add_option("--out", out_dir, "output directory for report and CSV artifacts");

  auto* list = app.add_subcommand("list", "list available experiments");
  list->add_option("filter", filter, "substring filter");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : kExitUsage;
  }

  try {
    if (run->parsed()) return run_command(config_path, seed_override, workers, out_dir);
    return list_command(filter);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
