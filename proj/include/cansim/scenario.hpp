#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cansim/attacks.hpp"
#include "cansim/bus.hpp"
#include "cansim/datasets.hpp"
#include "cansim/detectors.hpp"
#include "cansim/ecu.hpp"
#include "cansim/icewall.hpp"

namespace cansim {

struct NodeConfig {
  EcuSpec spec;
  MessageSchedule schedule;
  /// Present for the human driver node.
  std::optional<DriverModel> driver;
};

struct IcewallConfig {
  std::string node;
  /// Manual rules; learning mode when absent.
  std::optional<FilterRuleSet> rules;
  LearningConfig learning;
  ErrorFlagBudget budget;
};

struct DetectorConfig {
  /// Detectors train on [0, train) and watch [train, duration).
  Micros train{2'000'000};
  std::optional<FrequencyConfig> frequency;
  bool transition = false;
};

struct Scenario {
  static constexpr const char* kSchema = "cansim-scenario/1";

  std::string name;
  /// Reports are comparable only within one family.
  std::string family;
  std::uint64_t seed = 0;
  Micros duration{1'000'000};
  BusConfig bus;
  VehiclePlantConfig plant;
  SignalDictionary signals;
  AdjacencyGraph adjacency;
  std::vector<NodeConfig> nodes;
  std::vector<AttackSpec> attacks;
  std::vector<IcewallConfig> icewalls;
  std::optional<DetectorConfig> detectors;

  const NodeConfig* node(std::string_view name) const;
  /// Whether any node reads or drives the vehicle plant.
  bool uses_plant() const;
};

/// Reads and fully validates a scenario. Relative dataset and rule paths are
/// resolved against the scenario's directory. Throws ConfigError.
Scenario load_scenario(const std::filesystem::path& path);
Scenario parse_scenario(std::string_view json_text, const std::filesystem::path& base_dir,
                        const std::string& origin = "scenario");

/// Manual icewall rules; predicate fields are resolved through the dictionary.
FilterRuleSet load_rules(const std::filesystem::path& path, const SignalDictionary& dictionary);
FilterRuleSet parse_rules(std::string_view json_text, const SignalDictionary& dictionary,
                          const std::string& origin = "rules");

/// Per-node RNG seed derived from the scenario seed and the node name.
std::uint64_t node_seed(std::uint64_t scenario_seed, std::string_view node_name);

}  // namespace cansim
