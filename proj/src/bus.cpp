#include "cansim/bus.hpp"

#include <algorithm>
#include <stdexcept>
#include <utility>

namespace cansim {

namespace {

constexpr int kIntermissionBits = 3;
constexpr int kSuspendBits = 8;
constexpr int kDelimiterBits = 8;

bool in_arbitration_field(Field f) {
  return f == Field::IdA || f == Field::Srr || f == Field::Ide || f == Field::IdB || f == Field::Rtr;
}

}  // namespace

const char* to_string(NodeMode m) {
  switch (m) {
    case NodeMode::Idle: return "Idle";
    case NodeMode::Transmitting: return "Transmitting";
    case NodeMode::Receiving: return "Receiving";
    case NodeMode::ErrorFlag: return "ErrorFlag";
    case NodeMode::ErrorDelimiter: return "ErrorDelimiter";
    case NodeMode::Intermission: return "Intermission";
    case NodeMode::Suspend: return "Suspend";
    case NodeMode::BusOff: return "BusOff";
  }
  return "?";
}

Bus::Bus(BusConfig config) : config_(config) {
  if (config_.bitrate == 0 || config_.bitrate > BusConfig::kMaxBitrate) {
    throw std::invalid_argument("bitrate must be in 1..1000000 bit/s");
  }
}

NodeHandle Bus::attach(std::string name) {
  Node n;
  n.name = std::move(name);
  n.trajectory.push_back({now_, n.err});
  nodes_.push_back(std::move(n));
  driven_.resize(nodes_.size());
  return NodeHandle{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Bus::Node& Bus::node(NodeHandle h) {
  if (h.index >= nodes_.size()) throw std::out_of_range("unknown node handle");
  return nodes_[h.index];
}

const Bus::Node& Bus::node(NodeHandle h) const {
  if (h.index >= nodes_.size()) throw std::out_of_range("unknown node handle");
  return nodes_[h.index];
}

void Bus::set_icewall(NodeHandle h, Icewall wall) { node(h).wall = std::move(wall); }

Icewall* Bus::icewall(NodeHandle h) {
  auto& w = node(h).wall;
  return w ? &*w : nullptr;
}

const Icewall* Bus::icewall(NodeHandle h) const {
  const auto& w = node(h).wall;
  return w ? &*w : nullptr;
}

Agent& Bus::add_agent(std::unique_ptr<Agent> agent) {
  agents_.push_back(std::move(agent));
  return *agents_.back();
}

std::uint64_t Bus::micros(std::uint64_t ticks) const { return ticks * 1'000'000ULL / config_.bitrate; }

TraceRecord& Bus::emit(TraceKind kind) {
  auto& r = records_.emplace_back();
  r.kind = kind;
  r.tick = now_;
  r.timestamp_us = micros(now_);
  r.seq = record_seq_++;
  return r;
}

bool Bus::offer(NodeHandle h, DataFrame frame, FrameOrigin origin, std::optional<FrameId> cause) {
  frame.validate();
  auto& n = node(h);
  if (n.err.mode() == ErrorMode::BusOff) return false;
  ++n.counters.offered;
  if (n.wall) {
    const auto verdict = n.wall->filter_egress(frame, Micros(static_cast<Micros::rep>(now_us())));
    if (!verdict.allowed()) {
      ++n.counters.blocked;
      auto& r = emit(TraceKind::IcewallBlocked);
      r.frame = std::move(frame);
      r.node = h;
      r.origin = origin;
      r.cause = cause;
      r.block_reason = *verdict.block;
      return false;
    }
  }
  n.queue.push_back({std::move(frame), now_, seq_++, origin, cause});
  return true;
}

bool Bus::inject_raw(std::uint64_t at, std::span<const Level> bits, NodeHandle h) {
  if (node(h).err.mode() == ErrorMode::BusOff) return false;
  if (at < now_) throw std::invalid_argument("cannot inject into the past");
  for (std::size_t k = 0; k < bits.size(); ++k) {
    auto [it, inserted] = injections_.try_emplace(at + k, bits[k]);
    if (!inserted) it->second = wired_and(it->second, bits[k]);
  }
  return true;
}

const NodeErrorState& Bus::error_state(NodeHandle h) const { return node(h).err; }

NodeMode Bus::mode(NodeHandle h) const { return node(h).mode; }

void Bus::reset_node(NodeHandle h) {
  auto& n = node(h);
  n.err = cansim::reset_node(n.err);
  if (n.mode == NodeMode::BusOff) n.mode = NodeMode::Idle;
  note_state(n);
}

std::optional<TransmissionView> Bus::transmission(NodeHandle h) const {
  const auto& n = node(h);
  if (n.mode != NodeMode::Transmitting || !n.tx_index) return std::nullopt;
  return TransmissionView{&n.queue[*n.tx_index].frame, &n.tx_stream, n.tx_pos, n.tx_sof, n.counters.attempts};
}

NodeCounters Bus::counters(NodeHandle h) const {
  auto c = node(h).counters;
  c.queued = node(h).queue.size();
  return c;
}

const std::vector<StateSample>& Bus::trajectory(NodeHandle h) const { return node(h).trajectory; }

const std::string& Bus::name(NodeHandle h) const { return node(h).name; }

std::vector<std::string> Bus::names() const {
  std::vector<std::string> out;
  out.reserve(nodes_.size());
  for (const auto& n : nodes_) out.push_back(n.name);
  return out;
}

std::optional<NodeHandle> Bus::find(std::string_view name) const {
  for (std::uint32_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].name == name) return NodeHandle{i};
  }
  return std::nullopt;
}

void Bus::note_state(Node& n) {
  if (n.trajectory.empty() || n.trajectory.back().state != n.err) n.trajectory.push_back({now_, n.err});
}

std::vector<TraceRecord> Bus::step(std::uint64_t until) {
  while (now_ < until) {
    run_agents();
    if (quiescent()) {
      const auto next = next_event(until);
      if (next > now_) {
        now_ = next;
        continue;
      }
    }
    tick();
    ++now_;
  }
  return std::exchange(records_, {});
}

void Bus::run_agents() {
  for (auto& a : agents_) {
    if (a->next_wakeup() <= now_) a->on_tick(*this);
  }
}

bool Bus::quiescent() const {
  if (!injections_.empty() && injections_.begin()->first <= now_) return false;
  return std::all_of(nodes_.begin(), nodes_.end(), [](const Node& n) {
    return n.mode == NodeMode::BusOff || (n.mode == NodeMode::Idle && n.queue.empty());
  });
}

std::uint64_t Bus::next_event(std::uint64_t until) const {
  auto next = until;
  for (const auto& a : agents_) next = std::min(next, a->next_wakeup());
  if (!injections_.empty()) next = std::min(next, injections_.begin()->first);
  return std::max(next, now_);
}

void Bus::tick() {
  started_.clear();
  for (std::uint32_t i = 0; i < nodes_.size(); ++i) {
    auto& n = nodes_[i];
    n.reported = false;
    if (n.mode == NodeMode::Idle && !n.queue.empty()) start_transmission(i);
  }
  for (auto i : started_) {
    for (auto& a : agents_) a->on_transmit_start(*this, NodeHandle{i});
  }

  Level bus = Level::Recessive;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    driven_[i] = drive(nodes_[i]);
    bus = wired_and(bus, driven_[i]);
  }
  std::optional<Level> injected;
  if (auto it = injections_.find(now_); it != injections_.end()) {
    injected = it->second;
    bus = wired_and(bus, it->second);
    injections_.erase(it);
  }
  if (tap_) tap_(now_, driven_, injected, bus);

  active_flag_raised_ = false;
  for (std::uint32_t i = 0; i < nodes_.size(); ++i) observe(i, bus);

  // One error epoch per flag: nodes still in the frame discard it without reporting.
  if (active_flag_raised_) {
    for (auto& n : nodes_) {
      if (!n.reported && (n.mode == NodeMode::Transmitting || n.mode == NodeMode::Receiving)) join_error_epoch(n);
    }
  }

  if (!deliveries_.empty()) {
    auto done = std::exchange(deliveries_, {});
    for (const auto& d : done) {
      for (auto& a : agents_) a->on_delivered(*this, d.frame, d.transmitter);
    }
  }
}

Level Bus::drive(const Node& n) const {
  switch (n.mode) {
    case NodeMode::Transmitting: return n.tx_stream.bits[n.tx_pos];
    case NodeMode::Receiving:
      return n.decoder.in_ack_slot() && n.decoder.crc_ok() ? Level::Dominant : Level::Recessive;
    case NodeMode::ErrorFlag: return n.flag_level;
    default: return Level::Recessive;
  }
}

void Bus::start_transmission(std::uint32_t index) {
  auto& n = nodes_[index];
  const auto best = std::min_element(n.queue.begin(), n.queue.end(), [](const QueuedFrame& a, const QueuedFrame& b) {
    const auto ka = arbitration_key(a.frame);
    const auto kb = arbitration_key(b.frame);
    return ka != kb ? ka < kb : a.seq < b.seq;
  });
  n.tx_index = static_cast<std::size_t>(best - n.queue.begin());
  n.tx_stream = encode_frame(best->frame);
  n.tx_pos = 0;
  n.tx_sof = now_;
  n.mode = NodeMode::Transmitting;
  n.decoder.reset();
  ++n.counters.attempts;
  started_.push_back(index);
}

void Bus::observe(std::uint32_t index, Level bus) {
  auto& n = nodes_[index];
  switch (n.mode) {
    case NodeMode::Idle:
    case NodeMode::Intermission:
    case NodeMode::Suspend:
      if (bus == Level::Dominant) {
        n.mode = NodeMode::Receiving;
        n.suspend_pending = false;
        n.decoder.reset();
        n.decoder.feed(bus);
      } else if (n.mode == NodeMode::Intermission && --n.countdown == 0) {
        if (n.suspend_pending) {
          n.mode = NodeMode::Suspend;
          n.countdown = kSuspendBits;
          n.suspend_pending = false;
        } else {
          n.mode = NodeMode::Idle;
        }
      } else if (n.mode == NodeMode::Suspend && --n.countdown == 0) {
        n.mode = NodeMode::Idle;
      }
      break;
    case NodeMode::Transmitting:
      observe_transmitter(index, bus);
      break;
    case NodeMode::Receiving: {
      const auto step = n.decoder.feed(bus);
      if (step.status == FrameDecoder::Status::Error) {
        raise_error(index, to_error_kind(step.error), Role::Receiver);
      } else if (step.status == FrameDecoder::Status::Complete) {
        n.err = on_success(n.err, Role::Receiver);
        note_state(n);
        ++n.counters.received;
        enter_intermission(n);
      }
      break;
    }
    case NodeMode::ErrorFlag:
      if (--n.countdown == 0) {
        n.mode = NodeMode::ErrorDelimiter;
        n.countdown = 0;
      }
      break;
    case NodeMode::ErrorDelimiter:
      if (bus == Level::Dominant) {
        n.countdown = 0;
      } else if (++n.countdown == kDelimiterBits) {
        enter_intermission(n);
      }
      break;
    case NodeMode::BusOff:
      break;
  }
}

void Bus::observe_transmitter(std::uint32_t index, Level bus) {
  auto& n = nodes_[index];
  const Level sent = n.tx_stream.bits[n.tx_pos];
  const Field field = n.tx_stream.wire_fields[n.tx_pos];
  n.decoder.feed(bus);

  const auto phase = in_arbitration_field(field) ? TransmitPhase::Arbitration
                     : field == Field::AckSlot   ? TransmitPhase::AckSlot
                                                 : TransmitPhase::Other;
  if (auto e = detect_transmit_error(sent, bus, phase)) {
    raise_error(index, *e, Role::Transmitter);
    return;
  }
  if (sent != bus && phase == TransmitPhase::Arbitration) {
    auto& r = emit(TraceKind::ArbitrationLost);
    const auto& q = n.queue[*n.tx_index];
    r.frame = q.frame;
    r.node = NodeHandle{index};
    r.origin = q.origin;
    r.cause = q.cause;
    n.tx_index.reset();
    n.mode = NodeMode::Receiving;
    return;
  }
  if (field == Field::AckSlot) {
    if (auto e = detect_ack_error(bus)) {
      raise_error(index, *e, Role::Transmitter);
      return;
    }
  }
  if (++n.tx_pos == n.tx_stream.size()) finish_transmission(index);
}

void Bus::finish_transmission(std::uint32_t index) {
  auto& n = nodes_[index];
  const auto pos = static_cast<std::ptrdiff_t>(*n.tx_index);
  QueuedFrame q = std::move(n.queue[*n.tx_index]);
  n.queue.erase(n.queue.begin() + pos);
  n.tx_index.reset();

  n.err = on_success(n.err, Role::Transmitter);
  note_state(n);
  ++n.counters.delivered;

  auto& r = emit(TraceKind::Delivered);
  r.frame = q.frame;
  r.node = NodeHandle{index};
  r.origin = q.origin;
  r.cause = q.cause;
  r.latency_us = micros(n.tx_sof) - micros(q.offered_tick);

  enter_intermission(n);
  n.suspend_pending = n.err.mode() == ErrorMode::ErrorPassive;
  deliveries_.push_back({std::move(q.frame), NodeHandle{index}});
}

void Bus::raise_error(std::uint32_t index, ErrorKind kind, Role role) {
  auto& n = nodes_[index];
  const auto pre = n.err;
  const auto flag = emit_error_flag(pre, kind);
  n.err = role == Role::Transmitter ? on_transmit_error(pre) : on_receive_error(pre);
  note_state(n);
  n.reported = true;

  auto& r = emit(TraceKind::ErrorFrame);
  r.node = NodeHandle{index};
  r.error = kind;
  r.error_state = n.err;
  if (n.tx_index) {
    r.frame = n.queue[*n.tx_index].frame;
    r.origin = n.queue[*n.tx_index].origin;
    n.tx_index.reset();
    n.suspend_pending = n.err.mode() == ErrorMode::ErrorPassive;
  }

  if (n.err.mode() == ErrorMode::BusOff) {
    enter_bus_off(n);
    return;
  }

  Level level = flag->level();
  if (flag->style == ErrorFlag::Style::Active && n.wall) {
    const auto verdict =
        n.wall->filter_error_flag(Micros(static_cast<Micros::rep>(now_us())), ErrorFlag::Style::Active);
    if (!verdict.allowed()) {
      level = Level::Recessive;
      auto& b = emit(TraceKind::IcewallBlocked);
      b.node = NodeHandle{index};
      b.block_reason = *verdict.block;
    }
  }
  n.mode = NodeMode::ErrorFlag;
  n.countdown = ErrorFlag::kLength;
  n.flag_level = level;
  if (level == Level::Dominant) active_flag_raised_ = true;
}

void Bus::join_error_epoch(Node& n) {
  if (n.tx_index) {
    n.tx_index.reset();
    n.suspend_pending = n.err.mode() == ErrorMode::ErrorPassive;
  }
  n.mode = NodeMode::ErrorDelimiter;
  n.countdown = 0;
}

void Bus::enter_intermission(Node& n) {
  n.mode = NodeMode::Intermission;
  n.countdown = kIntermissionBits;
}

void Bus::enter_bus_off(Node& n) {
  n.mode = NodeMode::BusOff;
  n.counters.abandoned += n.queue.size();
  n.queue.clear();
  n.tx_index.reset();
}

std::size_t arbitrate(std::span<const DataFrame> contenders) {
  if (contenders.empty()) throw std::invalid_argument("arbitration needs at least one contender");
  std::vector<BitStream> streams;
  streams.reserve(contenders.size());
  for (const auto& f : contenders) streams.push_back(encode_frame(f));

  std::vector<std::size_t> alive(contenders.size());
  for (std::size_t i = 0; i < alive.size(); ++i) alive[i] = i;

  for (std::size_t bit = 0; alive.size() > 1; ++bit) {
    const bool any_exhausted =
        std::any_of(alive.begin(), alive.end(), [&](std::size_t i) { return bit >= streams[i].size(); });
    if (any_exhausted) break;
    Level bus = Level::Recessive;
    for (auto i : alive) bus = wired_and(bus, streams[i].bits[bit]);
    std::erase_if(alive, [&](std::size_t i) {
      return streams[i].bits[bit] != bus && in_arbitration_field(streams[i].wire_fields[bit]);
    });
  }
  return alive.front();
}

}  // namespace cansim
