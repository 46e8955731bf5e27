#include "cansim/ecu.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace cansim {

namespace {

double seconds(Micros d) { return std::chrono::duration<double>(d).count(); }

/// Uniform double in [0, 1) from the top 53 bits of one raw draw.
double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

Micros us_of(const Bus& bus) { return Micros(static_cast<Micros::rep>(bus.now_us())); }

}  // namespace

VehiclePlant::VehiclePlant(VehiclePlantConfig config)
    : config_(config), v0_(config.initial_speed_kmh), pedal_(config.initial_pedal_pct) {
  if (!(config_.time_constant_s > 0)) throw std::invalid_argument("plant time constant must be positive");
}

double VehiclePlant::speed(Micros now) const {
  const double target = config_.gain_kmh_per_pct * pedal_;
  const double dt = std::max(0.0, seconds(now - t0_));
  return target + (v0_ - target) * std::exp(-dt / config_.time_constant_s);
}

void VehiclePlant::set_pedal(double pct, Micros now) {
  v0_ = speed(now);
  t0_ = std::max(t0_, now);
  pedal_ = pct;
}

bool VehiclePlant::known_signal(std::string_view name) {
  return name == "vehicle_speed" || name == "engine_speed" || name == "throttle_position";
}

double VehiclePlant::signal(std::string_view name, Micros now) const {
  if (name == "vehicle_speed") return speed(now);
  if (name == "engine_speed") return config_.idle_rpm + config_.rpm_per_kmh * speed(now);
  if (name == "throttle_position") return pedal_;
  throw std::invalid_argument("unknown plant signal " + std::string(name));
}

const char* to_string(GeneratorKind k) {
  switch (k) {
    case GeneratorKind::Constant: return "constant";
    case GeneratorKind::Counter: return "counter";
    case GeneratorKind::Ramp: return "ramp";
    case GeneratorKind::Noise: return "noise";
    case GeneratorKind::Signal: return "signal";
    case GeneratorKind::Relay: return "relay";
  }
  return "?";
}

void MessageSchedule::validate() const {
  std::set<FrameId> ids;
  for (const auto& e : entries) {
    if (e.period.count() <= 0) throw std::invalid_argument("period must be positive for " + e.id.to_string());
    if (e.phase.count() < 0 || e.jitter.count() < 0) throw std::invalid_argument("negative phase or jitter");
    if (e.dlc > 8) throw std::invalid_argument("dlc must be 0..8");
    if (!ids.insert(e.id).second) throw std::invalid_argument("duplicate schedule id " + e.id.to_string());
  }
}

EcuModel::EcuModel(EcuSpec spec, MessageSchedule schedule, const SignalDictionary* dictionary, VehiclePlant* plant,
                   std::uint64_t seed)
    : spec_(std::move(spec)),
      schedule_(std::move(schedule)),
      dictionary_(dictionary),
      plant_(plant),
      rng_(seed) {
  schedule_.validate();
  for (const auto& e : schedule_.entries) {
    EntryState s;
    s.nominal = e.phase;
    s.emit_at = e.phase + draw_jitter(e);
    state_.push_back(s);
  }
}

Micros EcuModel::draw_jitter(const ScheduleEntry& e) {
  if (e.jitter.count() == 0) return Micros(0);
  return Micros(static_cast<Micros::rep>(rng_() % static_cast<std::uint64_t>(e.jitter.count() + 1)));
}

Micros EcuModel::next_due() const {
  Micros next = Micros::max();
  for (const auto& s : state_) next = std::min(next, s.emit_at);
  return next;
}

const SignalField* EcuModel::target_field(const ScheduleEntry& e, const PayloadGenerator& g) const {
  if (dictionary_ == nullptr || e.message.empty()) return nullptr;
  const auto* def = dictionary_->by_name(e.message);
  if (def == nullptr || def->fields.empty()) return nullptr;
  return g.field.empty() ? &def->fields.front() : def->field(g.field);
}

std::optional<EmittedFrame> EcuModel::generate(std::size_t index, Micros now) {
  const auto& e = schedule_.entries[index];
  const auto& g = e.generator;
  auto& s = state_[index];

  std::vector<std::uint8_t> payload(e.dlc, 0);
  std::copy_n(g.bytes.begin(), std::min(g.bytes.size(), payload.size()), payload.begin());
  const auto* field = target_field(e, g);
  std::optional<FrameId> cause;

  auto write = [&](double value) {
    if (field != nullptr) {
      field->write(payload, value);
    } else if (!payload.empty()) {
      payload[0] = static_cast<std::uint8_t>(static_cast<std::int64_t>(std::llround(value)) & 0xFF);
    }
  };

  switch (g.kind) {
    case GeneratorKind::Constant:
      break;
    case GeneratorKind::Counter:
      if (!payload.empty()) payload[0] = static_cast<std::uint8_t>(s.count & 0xFF);
      break;
    case GeneratorKind::Ramp:
      write(g.start + g.step * static_cast<double>(s.count));
      break;
    case GeneratorKind::Noise:
      write(g.center + g.amplitude * (2.0 * unit(rng_) - 1.0));
      break;
    case GeneratorKind::Signal:
      if (plant_ == nullptr) throw std::logic_error("signal generator without a vehicle plant");
      write(plant_->signal(g.signal, now));
      break;
    case GeneratorKind::Relay: {
      auto it = consumed_.find(g.relay_from);
      if (it == consumed_.end()) return std::nullopt;
      write(it->second);
      if (const auto* src = dictionary_ ? dictionary_->by_name(g.relay_from) : nullptr) cause = src->id;
      break;
    }
  }

  DataFrame frame = e.app_checksum ? DataFrame::with_checksum(e.id, std::move(payload))
                                   : DataFrame::data(e.id, std::move(payload));
  bool tampered = false;
  if (tamper_) {
    const auto honest = frame;
    tamper_(frame, e, now);
    if (frame.has_app_checksum && !frame.payload.empty()) {
      frame.payload.back() = app_checksum(std::span(frame.payload).first(frame.payload.size() - 1));
    }
    tampered = !(frame == honest);
  }
  return EmittedFrame{std::move(frame), cause, tampered};
}

std::vector<EmittedFrame> EcuModel::tick(Micros now) {
  std::vector<EmittedFrame> out;
  for (std::size_t i = 0; i < state_.size(); ++i) {
    auto& s = state_[i];
    while (s.emit_at <= now) {
      if (auto f = generate(i, now)) out.push_back(std::move(*f));
      ++s.count;
      s.nominal += schedule_.entries[i].period;
      s.emit_at = s.nominal + draw_jitter(schedule_.entries[i]);
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const EmittedFrame& a, const EmittedFrame& b) {
    return arbitration_key(a.frame) < arbitration_key(b.frame);
  });
  return out;
}

void EcuModel::consume(const DataFrame& frame, Micros now) {
  if (dictionary_ == nullptr) return;
  const auto* def = dictionary_->by_id(frame.id);
  if (def == nullptr || def->fields.empty()) return;
  for (const auto& c : spec_.consumes) {
    if (c.message != def->name) continue;
    const auto value = def->fields.front().read(frame.payload);
    if (!value) continue;
    consumed_[def->name] = *value;
    if (c.actuates_pedal && plant_ != nullptr) plant_->set_pedal(*value, now);
  }
}

std::optional<double> EcuModel::last_value(const std::string& message) const {
  auto it = consumed_.find(message);
  return it == consumed_.end() ? std::nullopt : std::optional(it->second);
}

void DriverModel::validate() const {
  if (reaction_delay.count() < 0) throw std::invalid_argument("reaction delay must be non-negative");
  if (gain < 0) throw std::invalid_argument("driver gain must be non-negative");
  if (pedal_min > pedal_max) throw std::invalid_argument("pedal_min exceeds pedal_max");
  if (period.count() <= 0) throw std::invalid_argument("driver period must be positive");
}

Driver::Driver(DriverModel model, const SignalDictionary& dictionary)
    : model_(std::move(model)),
      display_(dictionary.by_name(model_.display_message)),
      pedal_(dictionary.by_name(model_.pedal_message)) {
  model_.validate();
  if (display_ == nullptr || display_->fields.empty()) {
    throw std::invalid_argument("display message " + model_.display_message + " not in the signal dictionary");
  }
  if (pedal_ == nullptr || pedal_->fields.empty()) {
    throw std::invalid_argument("pedal message " + model_.pedal_message + " not in the signal dictionary");
  }
}

void Driver::observe(const DataFrame& display, Micros now) {
  if (display.id != display_->id) return;
  const auto value = display_->fields.front().read(display.payload);
  if (!value) return;
  pending_.emplace_back(now + model_.reaction_delay, *value);
}

std::vector<EmittedFrame> Driver::tick(Micros now) {
  std::vector<EmittedFrame> out;
  while (next_ <= now) {
    while (!pending_.empty() && pending_.front().first <= next_) {
      perceived_ = pending_.front().second;
      pending_.pop_front();
    }
    double pedal = model_.cruise_pedal;
    std::optional<FrameId> cause;
    if (perceived_) {
      pedal += model_.gain * (model_.target_speed - *perceived_);
      cause = display_->id;
    }
    pedal = std::clamp(pedal, model_.pedal_min, model_.pedal_max);
    std::vector<std::uint8_t> payload(pedal_->dlc, 0);
    pedal_->fields.front().write(payload, pedal);
    out.push_back({DataFrame::data(pedal_->id, std::move(payload)), cause});
    next_ += model_.period;
  }
  return out;
}

EcuAgent::EcuAgent(NodeHandle node, EcuModel model, std::uint32_t bitrate)
    : node_(node), model_(std::move(model)), bitrate_(bitrate) {}

std::uint64_t EcuAgent::next_wakeup() const {
  const auto due = model_.next_due();
  if (due == Micros::max()) return kNever;
  return ticks_at(static_cast<std::uint64_t>(due.count()), bitrate_);
}

void EcuAgent::on_tick(Bus& bus) {
  auto frames = model_.tick(us_of(bus));
  if (bus.error_state(node_).mode() == ErrorMode::BusOff) return;
  for (auto& f : frames) {
    bus.offer(node_, std::move(f.frame), f.tampered ? FrameOrigin::Attack : FrameOrigin::Ecu, f.cause);
  }
}

void EcuAgent::on_delivered(Bus& bus, const DataFrame& frame, NodeHandle transmitter) {
  if (transmitter == node_ || bus.error_state(node_).mode() == ErrorMode::BusOff) return;
  model_.consume(frame, us_of(bus));
}

DriverAgent::DriverAgent(NodeHandle node, Driver driver, FrameId display_id, std::uint32_t bitrate)
    : node_(node), driver_(std::move(driver)), display_id_(display_id), bitrate_(bitrate) {}

std::uint64_t DriverAgent::next_wakeup() const {
  return ticks_at(static_cast<std::uint64_t>(driver_.next_due().count()), bitrate_);
}

void DriverAgent::on_tick(Bus& bus) {
  auto frames = driver_.tick(us_of(bus));
  if (bus.error_state(node_).mode() == ErrorMode::BusOff) return;
  for (auto& f : frames) bus.offer(node_, std::move(f.frame), FrameOrigin::Ecu, f.cause);
}

void DriverAgent::on_delivered(Bus& bus, const DataFrame& frame, NodeHandle transmitter) {
  if (transmitter == node_ || frame.id != display_id_) return;
  driver_.observe(frame, us_of(bus));
}

}  // namespace cansim
