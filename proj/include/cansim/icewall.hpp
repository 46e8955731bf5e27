#pragma once

#include <chrono>
#include <cstddef>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cansim/error_protocol.hpp"
#include "cansim/frame.hpp"

namespace cansim {

using Micros = std::chrono::microseconds;

enum class BlockReason : std::uint8_t { UnknownId, RateExceeded, AbnormalReading, ErrorFloodSuppressed };

const char* to_string(BlockReason r);

struct Verdict {
  std::optional<BlockReason> block;

  static Verdict allow() { return {}; }
  static Verdict deny(BlockReason r) { return {r}; }
  bool allowed() const { return !block.has_value(); }
};

/// Bounds on one payload field. The field is an unsigned big-endian integer
/// of `width` bytes at `byte_offset`, multiplied by `scale`.
struct PayloadPredicate {
  std::string field;
  std::size_t byte_offset = 0;
  std::size_t width = 2;
  double scale = 1.0;
  double min = 0.0;
  double max = 0.0;
  /// Largest plausible change per second relative to the last reading that
  /// reached the bus, scaled by the interval since the ECU's previous reading.
  std::optional<double> max_abs_delta_per_second;

  std::optional<double> read(const DataFrame& frame) const;
};

struct ErrorFlagBudget {
  std::size_t max_flags = 16;
  Micros window = std::chrono::seconds(1);
};

struct FilterRuleSet {
  std::set<FrameId> allowed_ids;
  std::map<FrameId, Micros> min_gap;
  std::map<FrameId, std::vector<PayloadPredicate>> predicates;
  ErrorFlagBudget error_flag_budget;

  /// Throws std::invalid_argument on negative gaps or inverted predicate bounds.
  void validate() const;
};

struct LearningConfig {
  std::size_t window_frames = 200;
  Micros window_time = std::chrono::seconds(2);
  double slack = 0.5;
};

enum class IcewallMode : std::uint8_t { Manual, Learning, Enforcing };

const char* to_string(IcewallMode m);

struct IcewallState {
  IcewallMode mode = IcewallMode::Manual;
  std::size_t frames_remaining = 0;
  std::optional<Micros> learning_started;
  std::map<FrameId, Micros> last_allowed;
  std::map<FrameId, Micros> last_offered;
  std::map<FrameId, std::vector<double>> last_readings;
  std::map<FrameId, Micros> learn_last_seen;
  std::deque<Micros> error_flags;
};

/// Egress check. Updates `state` only when the frame is allowed.
Verdict filter_egress(const DataFrame& frame, Micros now, const FilterRuleSet& rules, IcewallState& state);

/// Ingress is never filtered.
constexpr Verdict filter_ingress(const DataFrame&) noexcept { return {}; }

/// Active flags consume the rolling budget; passive flags always pass.
Verdict filter_error_flag(Micros now, ErrorFlag::Style style, const ErrorFlagBudget& budget, IcewallState& state);

/// Records one frame into the rule set under construction. Pre: mode is Learning.
void learn_observe(const DataFrame& frame, Micros now, const LearningConfig& config, FilterRuleSet& learned,
                   IcewallState& state);

/// Egress filter attached to one ECU: rules plus the state they are evaluated against.
class Icewall {
 public:
  static Icewall manual(FilterRuleSet rules);
  static Icewall learning(LearningConfig config, ErrorFlagBudget budget = {});

  Verdict filter_egress(const DataFrame& frame, Micros now);
  Verdict filter_ingress(const DataFrame& frame) const { return cansim::filter_ingress(frame); }
  Verdict filter_error_flag(Micros now, ErrorFlag::Style style);

  /// Flushes learned rules and restarts the learning window.
  /// Throws std::logic_error for manually configured icewalls.
  void reset();

  IcewallMode mode() const { return state_.mode; }
  const FilterRuleSet& rules() const { return rules_; }
  const IcewallState& state() const { return state_; }

 private:
  Icewall() = default;
  void finish_learning();

  FilterRuleSet rules_;
  IcewallState state_;
  LearningConfig learning_;
  bool manual_ = true;
};

}  // namespace cansim
