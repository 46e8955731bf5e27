#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cansim/error_protocol.hpp"
#include "cansim/frame.hpp"
#include "cansim/icewall.hpp"
#include "cansim/trace.hpp"

namespace cansim {

inline constexpr std::uint64_t kNever = std::numeric_limits<std::uint64_t>::max();

/// First tick whose start is at or after `us` microseconds.
constexpr std::uint64_t ticks_at(std::uint64_t us, std::uint32_t bitrate) {
  return (us * bitrate + 999'999ULL) / 1'000'000ULL;
}

struct BusConfig {
  static constexpr std::uint32_t kMaxBitrate = 1'000'000;
  std::uint32_t bitrate = 500'000;
};

enum class NodeMode : std::uint8_t {
  Idle,
  Transmitting,
  Receiving,
  ErrorFlag,
  ErrorDelimiter,
  Intermission,
  Suspend,
  BusOff,
};

const char* to_string(NodeMode m);

/// Every offered frame ends up in exactly one of delivered, blocked,
/// abandoned, or is still queued.
struct NodeCounters {
  std::uint64_t offered = 0;
  std::uint64_t delivered = 0;
  std::uint64_t blocked = 0;
  std::uint64_t abandoned = 0;
  std::uint64_t queued = 0;
  std::uint64_t received = 0;
  std::uint64_t attempts = 0;
};

struct StateSample {
  std::uint64_t tick = 0;
  NodeErrorState state;
};

struct TransmissionView {
  const DataFrame* frame = nullptr;
  const BitStream* stream = nullptr;
  /// Index of the wire bit driven in the current tick.
  std::size_t position = 0;
  std::uint64_t sof_tick = 0;
  std::uint64_t attempt = 0;
};

class Bus;

/// Behavior driven by the bus clock: ECU schedules, drivers, attacks.
class Agent {
 public:
  virtual ~Agent() = default;
  /// Earliest tick at which on_tick must run; kNever when idle.
  virtual std::uint64_t next_wakeup() const = 0;
  /// Runs at the start of a tick, before any node drives the bus.
  virtual void on_tick(Bus& bus) = 0;
  /// A transmitter completed `frame`; runs at the tick of its last EOF bit.
  virtual void on_delivered(Bus& /*bus*/, const DataFrame& /*frame*/, NodeHandle /*transmitter*/) {}
  /// `transmitter` drove SOF in the current tick.
  virtual void on_transmit_start(Bus& /*bus*/, NodeHandle /*transmitter*/) {}
};

/// Single broadcast CAN bus simulated one bit time per tick.
class Bus {
 public:
  /// Observer of every tick: levels driven by each node, the injected level
  /// if any, and the resulting bus level.
  using Tap = std::function<void(std::uint64_t tick, std::span<const Level> driven, std::optional<Level> injected,
                                 Level bus)>;

  /// Throws std::invalid_argument for a zero bitrate or one above 1 Mbit/s.
  explicit Bus(BusConfig config = {});

  NodeHandle attach(std::string name);
  void set_icewall(NodeHandle node, Icewall wall);
  Icewall* icewall(NodeHandle node);
  const Icewall* icewall(NodeHandle node) const;
  Agent& add_agent(std::unique_ptr<Agent> agent);

  /// Queues a frame for transmission after the node's egress filter.
  /// Returns false if the node is bus-off (not counted) or the frame is blocked.
  bool offer(NodeHandle node, DataFrame frame, FrameOrigin origin = FrameOrigin::Ecu,
             std::optional<FrameId> cause = std::nullopt);

  /// Drives `bits` onto the medium from tick `at` on, ANDed with all other
  /// drivers. Returns false when `node` is bus-off. Throws for past ticks.
  bool inject_raw(std::uint64_t at, std::span<const Level> bits, NodeHandle node);

  /// Advances to `until` (exclusive) and returns the records produced.
  std::vector<TraceRecord> step(std::uint64_t until);

  std::uint64_t now() const { return now_; }
  std::uint32_t bitrate() const { return config_.bitrate; }
  std::uint64_t micros(std::uint64_t ticks) const;
  std::uint64_t ticks_at(std::uint64_t us) const { return cansim::ticks_at(us, config_.bitrate); }
  std::uint64_t now_us() const { return micros(now_); }

  const NodeErrorState& error_state(NodeHandle node) const;
  NodeMode mode(NodeHandle node) const;
  /// Clears counters and the bus-off latch.
  void reset_node(NodeHandle node);
  std::optional<TransmissionView> transmission(NodeHandle node) const;
  NodeCounters counters(NodeHandle node) const;
  const std::vector<StateSample>& trajectory(NodeHandle node) const;

  std::size_t node_count() const { return nodes_.size(); }
  const std::string& name(NodeHandle node) const;
  std::vector<std::string> names() const;
  std::optional<NodeHandle> find(std::string_view name) const;

  void set_tap(Tap tap) { tap_ = std::move(tap); }

 private:
  struct QueuedFrame {
    DataFrame frame;
    std::uint64_t offered_tick = 0;
    std::uint64_t seq = 0;
    FrameOrigin origin = FrameOrigin::Ecu;
    std::optional<FrameId> cause;
  };

  struct Node {
    std::string name;
    NodeErrorState err;
    NodeMode mode = NodeMode::Idle;
    std::vector<QueuedFrame> queue;
    std::optional<Icewall> wall;
    FrameDecoder decoder;
    std::optional<std::size_t> tx_index;
    BitStream tx_stream;
    std::size_t tx_pos = 0;
    std::uint64_t tx_sof = 0;
    int countdown = 0;
    Level flag_level = Level::Recessive;
    bool suspend_pending = false;
    bool reported = false;
    NodeCounters counters;
    std::vector<StateSample> trajectory;
  };

  struct Delivery {
    DataFrame frame;
    NodeHandle transmitter;
  };

  Node& node(NodeHandle h);
  const Node& node(NodeHandle h) const;
  void run_agents();
  bool quiescent() const;
  std::uint64_t next_event(std::uint64_t until) const;
  void tick();
  Level drive(const Node& n) const;
  void observe(std::uint32_t index, Level bus);
  void observe_transmitter(std::uint32_t index, Level bus);
  void start_transmission(std::uint32_t index);
  void finish_transmission(std::uint32_t index);
  void raise_error(std::uint32_t index, ErrorKind kind, Role role);
  void join_error_epoch(Node& n);
  void enter_intermission(Node& n);
  void enter_bus_off(Node& n);
  void note_state(Node& n);
  TraceRecord& emit(TraceKind kind);

  BusConfig config_;
  std::uint64_t now_ = 0;
  std::uint64_t seq_ = 0;
  std::uint64_t record_seq_ = 0;
  std::vector<Node> nodes_;
  std::vector<std::unique_ptr<Agent>> agents_;
  std::map<std::uint64_t, Level> injections_;
  std::vector<TraceRecord> records_;
  std::vector<Delivery> deliveries_;
  std::vector<std::uint32_t> started_;
  std::vector<Level> driven_;
  bool active_flag_raised_ = false;
  Tap tap_;
};

/// Index of the contender that survives bitwise wired-AND arbitration when
/// all start SOF together. Requires at least one contender.
std::size_t arbitrate(std::span<const DataFrame> contenders);

}  // namespace cansim
