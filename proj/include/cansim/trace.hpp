#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cansim/error_protocol.hpp"
#include "cansim/frame.hpp"
#include "cansim/icewall.hpp"

namespace cansim {

/// Index of a node attached to a bus, in attachment order.
struct NodeHandle {
  std::uint32_t index = 0;
  friend constexpr auto operator<=>(const NodeHandle&, const NodeHandle&) = default;
};

/// Who put a frame into a transmit queue. Known to the simulator only;
/// nothing on the wire carries it.
enum class FrameOrigin : std::uint8_t { Ecu, Attack };

enum class TraceKind : std::uint8_t { Delivered, ArbitrationLost, ErrorFrame, IcewallBlocked, DetectorAlert };

const char* to_string(TraceKind k);

struct TraceRecord {
  std::uint64_t timestamp_us = 0;
  std::uint64_t tick = 0;
  /// Position in the trace; breaks ties between records of one tick.
  std::uint64_t seq = 0;
  TraceKind kind = TraceKind::Delivered;
  std::optional<DataFrame> frame;
  /// Transmitter for frame records, reporter for error frames, filtered node
  /// for blocks. Absent for detector alerts.
  std::optional<NodeHandle> node;
  FrameOrigin origin = FrameOrigin::Ecu;
  /// Id of the received frame whose content produced this one, if any.
  std::optional<FrameId> cause;

  ErrorKind error = ErrorKind::BitError;
  NodeErrorState error_state;
  BlockReason block_reason = BlockReason::UnknownId;
  std::string detector;
  std::string detail;
  /// Delivered only: offer to start of the successful attempt.
  std::uint64_t latency_us = 0;
};

/// One trace line, without the newline. `names` maps node indices to names.
std::string format_trace_line(const TraceRecord& record, const std::vector<std::string>& names,
                              const std::string& interface = "vcan0");

std::string format_trace(const std::vector<TraceRecord>& records, const std::vector<std::string>& names);

/// Payload bytes as contiguous upper-case hex.
std::string hex_bytes(const std::vector<std::uint8_t>& bytes);

}  // namespace cansim
