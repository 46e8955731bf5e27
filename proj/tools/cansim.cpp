#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include "cansim/runner.hpp"

namespace {

enum Exit { kOk = 0, kConfig = 1, kInternal = 2 };

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("cansim");
  logger->set_pattern("%^%l%$ %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("CANSIM_LOG")) {
    const auto level = spdlog::level::from_str(env);
    if (level == spdlog::level::off && std::string_view(env) != "off") {
      spdlog::warn("CANSIM_LOG={} is not a level; keeping warn", env);
    } else {
      spdlog::set_level(level);
    }
  }
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw cansim::ConfigError(path, "cannot open for writing");
  out << text;
  if (!out.flush()) throw cansim::ConfigError(path, "write failed");
  spdlog::info("wrote {} bytes to {}", text.size(), path);
}

int simulate(const std::string& scenario_path, std::optional<std::uint64_t> seed, const std::string& trace_path,
             const std::string& metrics_path) {
  auto scenario = cansim::load_scenario(scenario_path);
  if (seed) scenario.seed = *seed;
  spdlog::info("running {} for {} ms with seed {}", scenario.name, scenario.duration.count() / 1000, scenario.seed);
  const auto result = cansim::run_scenario(scenario);
  spdlog::debug("{} trace records", result.trace.size());
  if (!trace_path.empty()) write_file(trace_path, cansim::format_trace(result.trace, result.names));
  if (!metrics_path.empty()) write_file(metrics_path, cansim::to_jsonl(result.metrics));
  std::cout << cansim::summary_table(result.metrics);
  return kOk;
}

int compare(const std::string& a, const std::string& b) {
  const auto ra = cansim::load_metrics(a);
  const auto rb = cansim::load_metrics(b);
  const auto c = cansim::compare(ra, rb);
  std::cout << cansim::format_comparison(c, ra.name, rb.name);
  return kOk;
}

int validate(const std::string& path) {
  const auto s = cansim::load_scenario(path);
  std::cout << path << ": ok (" << s.name << ", " << s.nodes.size() << " nodes, " << s.attacks.size()
            << " attacks, " << s.icewalls.size() << " icewalls)\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();

  CLI::App app{"Bit-level CAN bus simulator"};
  app.require_subcommand(1);

  std::string scenario_path, trace_path, metrics_path;
  std::optional<std::uint64_t> seed;
  auto* sim = app.add_subcommand("simulate", "Run a scenario and report metrics");
  sim->add_option("--scenario", scenario_path, "Scenario file")->required();
  sim->add_option("--seed", seed, "Override the scenario seed");
  sim->add_option("--trace", trace_path, "Write the candump-style trace here");
  sim->add_option("--metrics", metrics_path, "Write JSON-lines metrics here");

  std::string report_a, report_b;
  auto* cmp = app.add_subcommand("compare", "Diff two metrics files of one scenario family");
  cmp->add_option("a", report_a, "Baseline metrics")->required();
  cmp->add_option("b", report_b, "Other metrics")->required();

  std::string validate_path;
  auto* val = app.add_subcommand("validate", "Load and check a scenario without running it");
  val->add_option("file", validate_path, "Scenario file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*sim) return simulate(scenario_path, seed, trace_path, metrics_path);
    if (*cmp) return compare(report_a, report_b);
    return validate(validate_path);
  } catch (const cansim::ConfigError& e) {
    spdlog::error("{}", e.what());
    return kConfig;
  } catch (const cansim::InvariantViolation& e) {
    spdlog::critical("invariant violated: {}", e.what());
    return kInternal;
  } catch (const std::exception& e) {
    spdlog::critical("internal error: {}", e.what());
    return kInternal;
  }
}
