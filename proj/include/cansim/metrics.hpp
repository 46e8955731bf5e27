#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cansim/bus.hpp"
#include "cansim/detectors.hpp"

namespace cansim {

/// A run broke one of the simulator's own invariants.
class InvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct NodeMetrics {
  std::string name;
  NodeCounters counters;
  /// Error frames this node reported.
  std::uint64_t errors = 0;
  std::uint32_t tec = 0;
  std::uint32_t rec = 0;
  std::string state;
};

struct LatencyStats {
  FrameId id;
  std::uint64_t count = 0;
  std::uint64_t p50_us = 0;
  std::uint64_t p99_us = 0;
  std::uint64_t max_us = 0;
};

struct TrajectoryPoint {
  std::uint64_t t_us = 0;
  std::uint32_t tec = 0;
  std::uint32_t rec = 0;
  std::string state;
};

struct AttackMetrics {
  std::string kind;
  std::string attacker;
  /// Frames offered, or bits driven for the bus-off attack.
  std::uint64_t injected = 0;
  std::uint64_t delivered = 0;
  std::uint64_t blocked = 0;
};

struct IcewallMetrics {
  std::string node;
  std::string mode;
  std::vector<FrameId> allowed_ids;
  std::uint64_t blocked = 0;
};

struct VehicleMetrics {
  double final_speed_kmh = 0;
  double min_speed_kmh = 0;
  double max_speed_kmh = 0;
};

struct MetricsReport {
  static constexpr const char* kSchema = "cansim-metrics/1";

  std::string schema = kSchema;
  std::string name;
  std::string family;
  std::uint64_t seed = 0;
  std::uint64_t duration_us = 0;
  std::uint32_t bitrate = 0;

  std::vector<NodeMetrics> nodes;
  /// Delivered frames whose id belongs to a node other than the transmitter.
  std::uint64_t spoof_success = 0;
  /// Honest ECU frames an icewall blocked.
  std::uint64_t false_blocks = 0;
  std::uint64_t attack_frames_blocked = 0;
  std::vector<LatencyStats> latency;
  /// Error-counter history of every node whose counters ever left zero.
  std::map<std::string, std::vector<TrajectoryPoint>> trajectories;
  std::vector<Alert> alerts;
  std::map<std::string, std::uint64_t> block_reasons;
  std::vector<AttackMetrics> attacks;
  std::vector<IcewallMetrics> icewalls;
  std::optional<VehicleMetrics> vehicle;

  const NodeMetrics* node(std::string_view name) const;
  const LatencyStats* latency_of(FrameId id) const;
};

/// Nearest-rank percentile of unsorted samples; 0 for an empty set.
std::uint64_t percentile(std::vector<std::uint64_t> samples, double p);

/// Counters, errors, latency, trajectories and blocks from a finished bus.
/// `owners` maps each legitimate id to its producer. Throws
/// InvariantViolation when counters and the trace disagree.
void collect_bus_metrics(MetricsReport& report, const Bus& bus, const std::vector<TraceRecord>& trace,
                         const std::map<FrameId, NodeHandle>& owners);

/// One JSON object per line, in a fixed order.
std::string to_jsonl(const MetricsReport& report);
/// Throws ConfigError on malformed input.
MetricsReport from_jsonl(std::string_view text, const std::string& origin = "metrics");
MetricsReport load_metrics(const std::filesystem::path& path);

/// Human-readable summary.
std::string summary_table(const MetricsReport& report);

struct MetricDelta {
  std::string metric;
  double a = 0;
  double b = 0;
  double delta() const { return b - a; }
};

struct Comparison {
  std::vector<MetricDelta> deltas;
  bool all_zero() const;
};

/// Side-by-side deltas of two reports of one scenario family. Throws
/// ConfigError when the schemas or families differ.
Comparison compare(const MetricsReport& a, const MetricsReport& b);
std::string format_comparison(const Comparison& c, const std::string& label_a, const std::string& label_b);

}  // namespace cansim
