#include "cansim/attacks.hpp"

#include <stdexcept>

namespace cansim {

namespace {

Micros us_of(const Bus& bus) { return Micros(static_cast<Micros::rep>(bus.now_us())); }

std::uint64_t to_ticks(Micros t, std::uint32_t bitrate) {
  return ticks_at(static_cast<std::uint64_t>(t.count()), bitrate);
}

DataFrame attack_frame(const AttackSpec& spec) {
  return spec.app_checksum ? DataFrame::with_checksum(spec.target_id, spec.payload)
                           : DataFrame::data(spec.target_id, spec.payload);
}

}  // namespace

const char* to_string(AttackKind k) {
  switch (k) {
    case AttackKind::Spoof: return "spoof";
    case AttackKind::DosFlood: return "dos_flood";
    case AttackKind::BusOff: return "bus_off";
    case AttackKind::DisplaySpoof: return "display_spoof";
  }
  return "?";
}

std::optional<AttackKind> attack_kind_from_string(std::string_view s) {
  for (auto k : {AttackKind::Spoof, AttackKind::DosFlood, AttackKind::BusOff, AttackKind::DisplaySpoof}) {
    if (s == to_string(k)) return k;
  }
  return std::nullopt;
}

void validate_attack(const AttackSpec& spec, const EcuSpec& attacker) {
  if (!attacker.compromised) throw std::invalid_argument("attacker " + attacker.name + " is not compromised");
  if (attacker.safety_critical) {
    throw std::invalid_argument("attacker " + attacker.name + " is safety-critical and cannot be compromised");
  }
  if (spec.stop && *spec.stop < spec.start) throw std::invalid_argument("attack stop precedes start");
  if (spec.period.count() < 0) throw std::invalid_argument("attack period must be non-negative");
  switch (spec.kind) {
    case AttackKind::Spoof:
    case AttackKind::DosFlood:
      attack_frame(spec).validate();
      if (spec.app_checksum && spec.payload.empty()) throw std::invalid_argument("checksum needs a payload byte");
      break;
    case AttackKind::BusOff:
      if (spec.victim.empty()) throw std::invalid_argument("bus-off attack needs a victim");
      if (spec.victim == attacker.name) throw std::invalid_argument("bus-off attacker cannot target itself");
      break;
    case AttackKind::DisplaySpoof:
      if (spec.message.empty()) throw std::invalid_argument("display spoof needs a message");
      break;
  }
}

namespace {

/// Counts offers the bus registered, whether queued or blocked.
bool offer(Bus& bus, NodeHandle node, const DataFrame& frame, std::uint64_t& offered) {
  const auto before = bus.counters(node).offered;
  const bool queued = bus.offer(node, frame, FrameOrigin::Attack);
  offered += bus.counters(node).offered - before;
  return queued;
}

}  // namespace

SpoofAgent::SpoofAgent(NodeHandle attacker, AttackSpec spec, std::uint32_t bitrate)
    : node_(attacker), spec_(std::move(spec)), frame_(attack_frame(spec_)), bitrate_(bitrate), next_(spec_.start) {}

std::uint64_t SpoofAgent::next_wakeup() const {
  if (spec_.period.count() == 0 || (spec_.stop && next_ >= *spec_.stop)) return kNever;
  return to_ticks(next_, bitrate_);
}

void SpoofAgent::on_tick(Bus& bus) {
  const auto now = us_of(bus);
  while (spec_.period.count() > 0 && next_ <= now) {
    if (spec_.active(next_)) offer(bus, node_, frame_, offered_);
    next_ += spec_.period;
  }
}

DosFloodAgent::DosFloodAgent(NodeHandle attacker, AttackSpec spec, std::uint32_t bitrate)
    : node_(attacker),
      spec_(std::move(spec)),
      frame_(attack_frame(spec_)),
      bitrate_(bitrate),
      frame_ticks_(encode_frame(frame_).size()),
      next_tick_(to_ticks(spec_.start, bitrate)) {}

void DosFloodAgent::on_tick(Bus& bus) {
  const auto now = us_of(bus);
  if (spec_.stop && now >= *spec_.stop) {
    next_tick_ = kNever;
    return;
  }
  if (spec_.period.count() > 0) {
    offer(bus, node_, frame_, offered_);
    next_tick_ = to_ticks(now + spec_.period, bitrate_);
    return;
  }
  if (pending_) {
    next_tick_ = bus.now() + 1;
    return;
  }
  pending_ = offer(bus, node_, frame_, offered_);
  next_tick_ = bus.now() + (pending_ ? 1 : frame_ticks_);
}

void DosFloodAgent::on_delivered(Bus&, const DataFrame& frame, NodeHandle transmitter) {
  if (transmitter == node_ && frame == frame_) pending_ = false;
}

std::optional<std::size_t> busoff_strike_position(const BitStream& stream) {
  for (auto field : {Field::Data, Field::Crc, Field::Dlc}) {
    for (std::size_t i = 0; i < stream.size(); ++i) {
      if (stream.wire_fields[i] == field && !stream.stuff[i] && stream.bits[i] == Level::Recessive) return i;
    }
  }
  return std::nullopt;
}

BusOffAgent::BusOffAgent(NodeHandle attacker, NodeHandle victim, AttackSpec spec)
    : node_(attacker), victim_(victim), spec_(std::move(spec)) {}

std::uint64_t BusOffAgent::next_wakeup() const {
  return strike_ ? strike_->sof_tick + strike_->position : kNever;
}

void BusOffAgent::on_transmit_start(Bus& bus, NodeHandle transmitter) {
  if (transmitter != victim_ || !spec_.active(us_of(bus))) return;
  if (spec_.max_errors && induced_ >= *spec_.max_errors) return;
  const auto view = bus.transmission(victim_);
  if (!view) return;
  if (spec_.victim_id && view->frame->id != *spec_.victim_id) return;
  if (const auto pos = busoff_strike_position(*view->stream)) strike_ = Strike{view->sof_tick, view->attempt, *pos};
}

void BusOffAgent::on_tick(Bus& bus) {
  if (!strike_) return;
  const auto strike = *strike_;
  strike_.reset();
  // Victim must still be driving the same attempt at the planned bit.
  const auto view = bus.transmission(victim_);
  if (!view || view->sof_tick != strike.sof_tick || view->attempt != strike.attempt ||
      view->position != strike.position) {
    ++sync_losses_;
    return;
  }
  const Level dominant[] = {Level::Dominant};
  if (bus.inject_raw(bus.now(), dominant, node_)) ++induced_;
}

void install_display_spoof(EcuModel& display_ecu, const AttackSpec& spec, const SignalDictionary& dictionary) {
  const auto* def = dictionary.by_name(spec.message);
  if (def == nullptr || def->fields.empty()) {
    throw std::invalid_argument("display spoof message " + spec.message + " not in the signal dictionary");
  }
  const auto field = def->fields.front();
  display_ecu.set_tamper([spec, field, id = def->id](DataFrame& f, const ScheduleEntry&, Micros now) {
    if (f.id != id || !spec.active(now)) return;
    const auto honest = field.read(f.payload);
    if (!honest) return;
    field.write(f.payload, spec.false_value ? *spec.false_value : *honest + spec.offset);
  });
}

std::uint64_t spoof_success(const std::vector<TraceRecord>& records, const std::map<FrameId, NodeHandle>& owners) {
  std::uint64_t n = 0;
  for (const auto& r : records) {
    if (r.kind != TraceKind::Delivered || !r.frame || !r.node) continue;
    auto it = owners.find(r.frame->id);
    if (it != owners.end() && it->second != *r.node) ++n;
  }
  return n;
}

}  // namespace cansim
