#include "cansim/icewall.hpp"

#include <cmath>
#include <stdexcept>

namespace cansim {

const char* to_string(BlockReason r) {
  switch (r) {
    case BlockReason::UnknownId: return "UnknownId";
    case BlockReason::RateExceeded: return "RateExceeded";
    case BlockReason::AbnormalReading: return "AbnormalReading";
    case BlockReason::ErrorFloodSuppressed: return "ErrorFloodSuppressed";
  }
  return "?";
}

const char* to_string(IcewallMode m) {
  switch (m) {
    case IcewallMode::Manual: return "Manual";
    case IcewallMode::Learning: return "Learning";
    case IcewallMode::Enforcing: return "Enforcing";
  }
  return "?";
}

std::optional<double> PayloadPredicate::read(const DataFrame& frame) const {
  if (frame.rtr || byte_offset + width > frame.payload.size()) return std::nullopt;
  std::uint64_t raw = 0;
  for (std::size_t i = 0; i < width; ++i) raw = (raw << 8) | frame.payload[byte_offset + i];
  return static_cast<double>(raw) * scale;
}

void FilterRuleSet::validate() const {
  for (const auto& [id, gap] : min_gap) {
    if (gap.count() < 0) throw std::invalid_argument("negative minimum gap for " + id.to_string());
  }
  for (const auto& [id, preds] : predicates) {
    for (const auto& p : preds) {
      if (p.min > p.max) throw std::invalid_argument("predicate min exceeds max for " + p.field);
      if (p.max_abs_delta_per_second && *p.max_abs_delta_per_second < 0) {
        throw std::invalid_argument("negative delta bound for " + p.field);
      }
      if (p.width == 0 || p.width > 8) throw std::invalid_argument("predicate width must be 1..8 bytes");
    }
  }
}

Verdict filter_egress(const DataFrame& frame, Micros now, const FilterRuleSet& rules, IcewallState& state) {
  if (!rules.allowed_ids.contains(frame.id)) return Verdict::deny(BlockReason::UnknownId);

  const auto previous_offer = state.last_offered.find(frame.id);
  const std::optional<Micros> offered_before =
      previous_offer == state.last_offered.end() ? std::nullopt : std::optional(previous_offer->second);
  state.last_offered[frame.id] = now;

  if (auto gap = rules.min_gap.find(frame.id); gap != rules.min_gap.end()) {
    if (auto last = state.last_allowed.find(frame.id); last != state.last_allowed.end()) {
      if (now - last->second < gap->second) return Verdict::deny(BlockReason::RateExceeded);
    }
  }

  std::vector<double> readings;
  if (auto preds = rules.predicates.find(frame.id); preds != rules.predicates.end()) {
    const auto* previous = [&]() -> const std::vector<double>* {
      auto it = state.last_readings.find(frame.id);
      return it == state.last_readings.end() ? nullptr : &it->second;
    }();
    for (std::size_t i = 0; i < preds->second.size(); ++i) {
      const auto& p = preds->second[i];
      const auto value = p.read(frame);
      if (!value || *value < p.min || *value > p.max) return Verdict::deny(BlockReason::AbnormalReading);
      if (p.max_abs_delta_per_second && previous != nullptr && offered_before) {
        const double dt = std::chrono::duration<double>(now - *offered_before).count();
        if (std::fabs(*value - (*previous)[i]) > *p.max_abs_delta_per_second * dt) {
          return Verdict::deny(BlockReason::AbnormalReading);
        }
      }
      readings.push_back(*value);
    }
    state.last_readings[frame.id] = std::move(readings);
  }

  state.last_allowed[frame.id] = now;
  return Verdict::allow();
}

Verdict filter_error_flag(Micros now, ErrorFlag::Style style, const ErrorFlagBudget& budget, IcewallState& state) {
  if (style == ErrorFlag::Style::Passive) return Verdict::allow();
  while (!state.error_flags.empty() && now - state.error_flags.front() >= budget.window) state.error_flags.pop_front();
  if (state.error_flags.size() >= budget.max_flags) return Verdict::deny(BlockReason::ErrorFloodSuppressed);
  state.error_flags.push_back(now);
  return Verdict::allow();
}

void learn_observe(const DataFrame& frame, Micros now, const LearningConfig& config, FilterRuleSet& learned,
                   IcewallState& state) {
  if (state.mode != IcewallMode::Learning) throw std::logic_error("learn_observe outside learning mode");
  if (!state.learning_started) state.learning_started = now;
  learned.allowed_ids.insert(frame.id);
  if (auto last = state.learn_last_seen.find(frame.id); last != state.learn_last_seen.end()) {
    const auto gap = Micros(static_cast<Micros::rep>(static_cast<double>((now - last->second).count()) * config.slack));
    auto it = learned.min_gap.find(frame.id);
    if (it == learned.min_gap.end() || gap < it->second) learned.min_gap[frame.id] = gap;
  }
  state.learn_last_seen[frame.id] = now;
  if (state.frames_remaining > 0) --state.frames_remaining;
  if (state.frames_remaining == 0) state.mode = IcewallMode::Enforcing;
}

Icewall Icewall::manual(FilterRuleSet rules) {
  rules.validate();
  Icewall w;
  w.rules_ = std::move(rules);
  w.state_.mode = IcewallMode::Manual;
  w.manual_ = true;
  return w;
}

Icewall Icewall::learning(LearningConfig config, ErrorFlagBudget budget) {
  if (config.window_frames == 0) throw std::invalid_argument("learning window must cover at least one frame");
  Icewall w;
  w.learning_ = config;
  w.manual_ = false;
  w.rules_.error_flag_budget = budget;
  w.state_.mode = IcewallMode::Learning;
  w.state_.frames_remaining = config.window_frames;
  return w;
}

void Icewall::finish_learning() {
  state_.mode = IcewallMode::Enforcing;
  state_.frames_remaining = 0;
}

Verdict Icewall::filter_egress(const DataFrame& frame, Micros now) {
  if (state_.mode == IcewallMode::Learning) {
    if (state_.learning_started && now - *state_.learning_started >= learning_.window_time) {
      finish_learning();
    } else {
      learn_observe(frame, now, learning_, rules_, state_);
      // Seed rate state from the learning traffic.
      state_.last_allowed[frame.id] = now;
      state_.last_offered[frame.id] = now;
      return Verdict::allow();
    }
  }
  return cansim::filter_egress(frame, now, rules_, state_);
}

Verdict Icewall::filter_error_flag(Micros now, ErrorFlag::Style style) {
  return cansim::filter_error_flag(now, style, rules_.error_flag_budget, state_);
}

void Icewall::reset() {
  if (manual_) throw std::logic_error("manual icewall rules can only be changed by reprogramming");
  const auto budget = rules_.error_flag_budget;
  rules_ = FilterRuleSet{};
  rules_.error_flag_budget = budget;
  state_ = IcewallState{};
  state_.mode = IcewallMode::Learning;
  state_.frames_remaining = learning_.window_frames;
}

}  // namespace cansim
